//! Trace and metrics records, serialized as JSON Lines (one object per line,
//! UTF-8, LF endings).

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use stepgrpo_core::reward::{extract_answer, RewardBreakdown};
use stepgrpo_core::rollout::Completion;
use stepgrpo_core::toylang::{Task, Vocab};

use crate::error::{HarnessError, Result};

/// One completion's trace: tokens as symbols, the gate record, and the full
/// reward decomposition. `k = 1 + trigger_positions.len()` always holds.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TraceRecord {
    pub step_index: u64,
    pub task_id: u64,
    pub member_index: usize,
    pub tokens: Vec<String>,
    pub token_count: usize,
    pub trigger_positions: Vec<usize>,
    pub k: usize,
    pub truncated: bool,
    pub terminal_reason: String,
    pub answer_text: Option<String>,
    pub answer_confidence: Option<f64>,
    pub correct: bool,
    pub r_acc: u8,
    pub r_form: u8,
    pub mu: Option<f64>,
    pub efficiency_factor: f64,
    pub total: f64,
    pub advantage: Option<f64>,
}

impl TraceRecord {
    pub fn from_completion(
        step_index: u64,
        task: &Task,
        member_index: usize,
        completion: &Completion,
        vocab: &Vocab,
        breakdown: &RewardBreakdown,
        advantage: Option<f64>,
    ) -> Self {
        TraceRecord {
            step_index,
            task_id: task.id,
            member_index,
            tokens: completion
                .tokens
                .iter()
                .map(|&t| vocab.symbol(t).to_string())
                .collect(),
            token_count: completion.tokens.len(),
            trigger_positions: completion.trigger_positions.clone(),
            k: completion.step_count,
            truncated: completion.truncated,
            terminal_reason: completion.terminal_reason.as_str().to_string(),
            answer_text: extract_answer(&completion.tokens, vocab),
            answer_confidence: completion.answer_confidence,
            correct: breakdown.r_acc == 1,
            r_acc: breakdown.r_acc,
            r_form: breakdown.r_form,
            mu: breakdown.mu,
            efficiency_factor: breakdown.efficiency_factor,
            total: breakdown.total,
            advantage,
        }
    }
}

/// Per-step aggregates, one JSON line per training step.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MetricsRow {
    pub step_index: u64,
    pub mean_reward: f64,
    pub accuracy: f64,
    pub mean_tokens: f64,
    pub mean_k: f64,
    pub mean_confidence_at_exit: Option<f64>,
    pub kl_value: f64,
}

/// Append-style JSON Lines writer.
pub struct JsonlWriter<T> {
    writer: BufWriter<std::fs::File>,
    path: std::path::PathBuf,
    _marker: std::marker::PhantomData<T>,
}

impl<T: Serialize> JsonlWriter<T> {
    pub fn create(path: &Path) -> Result<Self> {
        let file = std::fs::File::create(path).map_err(HarnessError::io(path))?;
        Ok(JsonlWriter {
            writer: BufWriter::new(file),
            path: path.to_path_buf(),
            _marker: std::marker::PhantomData,
        })
    }

    pub fn write(&mut self, record: &T) -> Result<()> {
        let line =
            serde_json::to_string(record).map_err(|e| HarnessError::Internal(e.to_string()))?;
        writeln!(self.writer, "{line}").map_err(HarnessError::io(&self.path))?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer.flush().map_err(HarnessError::io(&self.path))
    }
}

/// Reads a whole JSON Lines file, reporting the line number on the first
/// malformed record.
pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path).map_err(HarnessError::io(path))?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(HarnessError::io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| HarnessError::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            msg: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(step: u64) -> MetricsRow {
        MetricsRow {
            step_index: step,
            mean_reward: 0.5,
            accuracy: 0.25,
            mean_tokens: 30.0,
            mean_k: 3.5,
            mean_confidence_at_exit: None,
            kl_value: 0.001,
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.jsonl");
        let mut w = JsonlWriter::create(&path).unwrap();
        w.write(&row(0)).unwrap();
        w.write(&row(1)).unwrap();
        w.finish().unwrap();
        let rows: Vec<MetricsRow> = read_jsonl(&path).unwrap();
        assert_eq!(rows, vec![row(0), row(1)]);
    }

    #[test]
    fn malformed_line_reports_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.jsonl");
        std::fs::write(
            &path,
            format!("{}\nnot json\n", serde_json::to_string(&row(0)).unwrap()),
        )
        .unwrap();
        let err = read_jsonl::<MetricsRow>(&path).unwrap_err();
        match err {
            HarnessError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other}"),
        }
    }
}
