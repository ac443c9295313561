//! Trace analytics: compression rate, semantic-density distribution, a
//! heuristic step-composition report, and training-dynamics alignment.
//!
//! The composition labels are a deterministic proxy for judge-based step
//! classification: a step counts as redundant when its normalized edit
//! distance to any earlier step of the same trace falls under the threshold,
//! as verification when it opens with a trigger, and as forward otherwise.
//! Reports carry a "proxy" label so nobody mistakes them for model-graded
//! classifications.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use stepgrpo_core::stepseg::{count_words, segment_text, text_trigger_offsets};

use crate::error::{HarnessError, Result};
use crate::trace::{read_jsonl, MetricsRow, TraceRecord};

/// Per-task average token counts for the model under test and the vanilla
/// reference.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskStats {
    pub task_key: String,
    pub avg_tokens_model: f64,
    pub avg_tokens_vanilla: f64,
}

/// Mean over tasks of the per-task token ratio. The per-task-first order
/// matters: pooling tokens before dividing would weight tasks by length.
pub fn compression_rate(stats: &[TaskStats]) -> Result<f64> {
    if stats.is_empty() {
        return Err(HarnessError::Config("no tasks to compare".into()));
    }
    let mut sum = 0.0;
    for s in stats {
        if s.avg_tokens_vanilla <= 0.0 {
            return Err(HarnessError::Config(format!(
                "task {} has a zero vanilla token average",
                s.task_key
            )));
        }
        sum += s.avg_tokens_model / s.avg_tokens_vanilla;
    }
    Ok(sum / stats.len() as f64)
}

fn per_task_means(records: &[TraceRecord]) -> BTreeMap<String, f64> {
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for r in records {
        let entry = sums.entry(r.task_id.to_string()).or_insert((0.0, 0));
        entry.0 += r.token_count as f64;
        entry.1 += 1;
    }
    sums.into_iter()
        .map(|(k, (sum, n))| (k, sum / n as f64))
        .collect()
}

/// Joins two run directories' `traces.jsonl` on task id.
pub fn task_stats_from_dirs(model_dir: &Path, vanilla_dir: &Path) -> Result<Vec<TaskStats>> {
    let model: Vec<TraceRecord> = read_jsonl(&model_dir.join("traces.jsonl"))?;
    let vanilla: Vec<TraceRecord> = read_jsonl(&vanilla_dir.join("traces.jsonl"))?;
    let model_means = per_task_means(&model);
    let vanilla_means = per_task_means(&vanilla);
    let stats: Vec<TaskStats> = model_means
        .iter()
        .filter_map(|(key, &m)| {
            vanilla_means.get(key).map(|&v| TaskStats {
                task_key: key.clone(),
                avg_tokens_model: m,
                avg_tokens_vanilla: v,
            })
        })
        .collect();
    if stats.is_empty() {
        return Err(HarnessError::Config(
            "the two trace files share no task ids".into(),
        ));
    }
    Ok(stats)
}

/// Summary of the density distribution after 1.5*IQR outlier trimming.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityReport {
    pub count: usize,
    pub trimmed_count: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

/// Linear-interpolation quantile on sorted data (the `(n-1)p` convention).
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Quartiles are taken on the raw data, the trim window is
/// `[q1 - 1.5*iqr, q3 + 1.5*iqr]`, and the summary is recomputed over the
/// surviving points.
pub fn density_report(densities: &[f64]) -> Result<DensityReport> {
    if densities.is_empty() {
        return Err(HarnessError::Config("no traces to summarize".into()));
    }
    let mut sorted = densities.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q1 = quantile(&sorted, 0.25);
    let q3 = quantile(&sorted, 0.75);
    let iqr = q3 - q1;
    let lo = q1 - 1.5 * iqr;
    let hi = q3 + 1.5 * iqr;
    let kept: Vec<f64> = sorted
        .iter()
        .copied()
        .filter(|&d| d >= lo && d <= hi)
        .collect();
    let mean = kept.iter().sum::<f64>() / kept.len() as f64;
    Ok(DensityReport {
        count: densities.len(),
        trimmed_count: kept.len(),
        mean,
        median: quantile(&kept, 0.5),
        q1: quantile(&kept, 0.25),
        q3: quantile(&kept, 0.75),
    })
}

pub fn densities_from_traces(records: &[TraceRecord]) -> Vec<f64> {
    records
        .iter()
        .filter(|r| r.token_count > 0)
        .map(|r| r.k as f64 / r.token_count as f64)
        .collect()
}

/// Word-level densities for plain-text traces: steps per word.
pub fn densities_from_text(lines: &[&str], triggers: &[&str]) -> Vec<f64> {
    lines
        .iter()
        .filter(|l| count_words(l) > 0)
        .map(|l| {
            let k = (text_trigger_offsets(l, triggers).len() + 1) as f64;
            k / count_words(l) as f64
        })
        .collect()
}

/// Proportions over the step-type partition plus the average step count.
#[derive(Clone, Debug, PartialEq)]
pub struct CompositionReport {
    pub forward: f64,
    pub verification: f64,
    pub redundant: f64,
    pub avg_step_count: f64,
}

fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn normalized_edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> f64 {
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 0.0;
    }
    levenshtein(a, b) as f64 / longest as f64
}

/// Classifies a trace's steps given each step's items and whether it opens
/// with a trigger; returns (forward, verification, redundant) counts.
fn classify_steps<T: PartialEq>(steps: &[(Vec<T>, bool)], threshold: f64) -> (usize, usize, usize) {
    let mut forward = 0;
    let mut verification = 0;
    let mut redundant = 0;
    for (i, (step, opens_with_trigger)) in steps.iter().enumerate() {
        let is_redundant = steps[..i]
            .iter()
            .any(|(earlier, _)| normalized_edit_distance(step, earlier) < threshold);
        if is_redundant {
            redundant += 1;
        } else if *opens_with_trigger {
            verification += 1;
        } else {
            forward += 1;
        }
    }
    (forward, verification, redundant)
}

fn composition_from_counts(
    forward: usize,
    verification: usize,
    redundant: usize,
    traces: usize,
) -> CompositionReport {
    let total = (forward + verification + redundant) as f64;
    CompositionReport {
        forward: forward as f64 / total,
        verification: verification as f64 / total,
        redundant: redundant as f64 / total,
        avg_step_count: total / traces as f64,
    }
}

/// Step composition over token traces; segmentation comes from the recorded
/// trigger positions.
pub fn composition_report(records: &[TraceRecord], threshold: f64) -> Result<CompositionReport> {
    if records.is_empty() {
        return Err(HarnessError::Config("no traces to classify".into()));
    }
    let mut forward = 0;
    let mut verification = 0;
    let mut redundant = 0;
    for r in records {
        let mut bounds = vec![0usize];
        bounds.extend(r.trigger_positions.iter().copied());
        bounds.push(r.tokens.len());
        let mut steps: Vec<(Vec<&str>, bool)> = Vec::new();
        for w in bounds.windows(2) {
            let step: Vec<&str> = r.tokens[w[0]..w[1]].iter().map(|s| s.as_str()).collect();
            let opens_with_trigger = r.trigger_positions.contains(&w[0]) && !steps.is_empty();
            steps.push((step, opens_with_trigger));
        }
        let (f, v, d) = classify_steps(&steps, threshold);
        forward += f;
        verification += v;
        redundant += d;
    }
    Ok(composition_from_counts(
        forward,
        verification,
        redundant,
        records.len(),
    ))
}

/// Step composition over plain-text traces, one reasoning text per line,
/// using whole-word trigger matching and word-level edit distance.
pub fn composition_report_text(
    lines: &[&str],
    triggers: &[&str],
    threshold: f64,
) -> Result<CompositionReport> {
    if lines.is_empty() {
        return Err(HarnessError::Config("no traces to classify".into()));
    }
    let mut forward = 0;
    let mut verification = 0;
    let mut redundant = 0;
    for line in lines {
        let segments = segment_text(line, triggers);
        let steps: Vec<(Vec<&str>, bool)> = segments
            .iter()
            .enumerate()
            .map(|(i, seg)| {
                let words: Vec<&str> = seg
                    .split(|c: char| !(c.is_alphanumeric() || c == '_'))
                    .filter(|w| !w.is_empty())
                    .collect();
                (words, i > 0)
            })
            .collect();
        let (f, v, d) = classify_steps(&steps, threshold);
        forward += f;
        verification += v;
        redundant += d;
    }
    Ok(composition_from_counts(
        forward,
        verification,
        redundant,
        lines.len(),
    ))
}

/// One run's metrics keyed by step.
#[derive(Clone, Debug)]
pub struct DynamicsRun {
    pub name: String,
    pub rows: BTreeMap<u64, (f64, f64)>,
}

/// Step-aligned accuracy/length columns for one or more runs. Steps missing
/// from a run are listed in `gaps` and left empty, never interpolated.
#[derive(Clone, Debug)]
pub struct DynamicsTable {
    pub steps: Vec<u64>,
    pub runs: Vec<DynamicsRun>,
    pub gaps: Vec<(String, u64)>,
}

pub fn dynamics_table(metrics_files: &[PathBuf]) -> Result<DynamicsTable> {
    if metrics_files.is_empty() {
        return Err(HarnessError::Config("no metrics files given".into()));
    }
    let mut runs = Vec::new();
    for path in metrics_files {
        let rows: Vec<MetricsRow> = read_jsonl(path)?;
        let mut map = BTreeMap::new();
        for row in rows {
            map.insert(row.step_index, (row.accuracy, row.mean_tokens));
        }
        runs.push(DynamicsRun {
            name: path.display().to_string(),
            rows: map,
        });
    }
    let mut steps: Vec<u64> = runs.iter().flat_map(|r| r.rows.keys().copied()).collect();
    steps.sort_unstable();
    steps.dedup();
    let mut gaps = Vec::new();
    for run in &runs {
        for &s in &steps {
            if !run.rows.contains_key(&s) {
                gaps.push((run.name.clone(), s));
            }
        }
    }
    Ok(DynamicsTable { steps, runs, gaps })
}
