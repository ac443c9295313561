//! Checkpoint evaluation: plain autoregressive generation with the inference
//! sampling settings and no truncation gate. The trained stopping behavior
//! has to carry the efficiency on its own, which is the whole point; the
//! answer-induction machinery is never invoked here.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use stepgrpo_core::policy::{log_softmax, sample_token_top_p, Policy, PolicyParams};
use stepgrpo_core::reward::{accuracy_reward, format_reward, total_reward, RewardConfig};
use stepgrpo_core::rollout::{Completion, TerminalReason};
use stepgrpo_core::seeds::derive_seed;
use stepgrpo_core::stepseg::step_count;
use stepgrpo_core::toylang::{generate_task, Task, Vocab};

use crate::checkpoint::load_checkpoint;
use crate::error::{HarnessError, Result};
use crate::trace::{JsonlWriter, TraceRecord};

const EVAL_STREAM: u64 = 0xe7a1;

/// `start:count:difficulty` task range.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TaskSpec {
    pub start_seed: u64,
    pub count: usize,
    pub difficulty: u32,
}

impl TaskSpec {
    pub fn parse(text: &str) -> Result<TaskSpec> {
        let parts: Vec<&str> = text.split(':').collect();
        let fail = || {
            HarnessError::Config(format!(
                "task spec `{text}` should be `seed:count:difficulty`"
            ))
        };
        if parts.len() != 3 {
            return Err(fail());
        }
        let spec = TaskSpec {
            start_seed: parts[0].parse().map_err(|_| fail())?,
            count: parts[1].parse().map_err(|_| fail())?,
            difficulty: parts[2].parse().map_err(|_| fail())?,
        };
        if spec.count == 0 || spec.difficulty == 0 {
            return Err(fail());
        }
        Ok(spec)
    }
}

/// Inference-time sampling settings.
#[derive(Clone, Copy, Debug)]
pub struct EvalOptions {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: usize,
    pub samples_per_task: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            temperature: 0.6,
            top_p: 0.9,
            max_tokens: 128,
            samples_per_task: 4,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EvalTaskRow {
    pub task_id: u64,
    pub ground_truth: String,
    pub samples: usize,
    pub accuracy: f64,
    pub mean_tokens: f64,
    pub mean_k: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EvalSummary {
    pub accuracy: f64,
    pub mean_tokens: f64,
    pub mean_k: f64,
    pub tasks: Vec<EvalTaskRow>,
}

/// Plain generation, trigger positions recorded but never acted on.
pub fn generate_plain(
    params: &PolicyParams,
    vocab: &Vocab,
    task: &Task,
    opts: &EvalOptions,
    rng: &mut ChaCha8Rng,
) -> Result<Completion> {
    let triggers = vocab.trigger_tokens();
    let mut ctx = task.prompt.clone();
    let mut tokens = Vec::new();
    let mut logprobs = Vec::new();
    let mut trigger_positions = Vec::new();
    let terminal = loop {
        if tokens.len() >= opts.max_tokens {
            break TerminalReason::MaxTokens;
        }
        let logits = params.next_token_logits(&ctx)?;
        let tok = sample_token_top_p(&logits, opts.temperature, opts.top_p, rng)?;
        logprobs.push(log_softmax(&logits)[tok.index()]);
        tokens.push(tok);
        ctx.push(tok);
        if tok == vocab.eos() {
            break TerminalReason::Eos;
        }
        if triggers.contains(&tok) {
            trigger_positions.push(tokens.len() - 1);
        }
    };
    let k = step_count(&tokens, &triggers);
    Ok(Completion {
        task_id: task.id,
        tokens,
        token_logprobs: logprobs,
        truncated: false,
        trigger_positions,
        induced_answer: None,
        answer_confidence: None,
        terminal_reason: terminal,
        step_count: k,
    })
}

/// Evaluates a checkpoint over `tasks.count` tasks with seeds
/// `start_seed..start_seed+count`, `samples_per_task` generations each.
/// Writes `traces.jsonl` and `summary.json` into `out_dir` when given.
pub fn evaluate(
    checkpoint: &Path,
    tasks: &TaskSpec,
    opts: &EvalOptions,
    out_dir: Option<&Path>,
) -> Result<EvalSummary> {
    let (params, vocab) = load_checkpoint(checkpoint)?;
    let reward_cfg = RewardConfig::default();

    let mut writer = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(HarnessError::io(dir))?;
            Some(JsonlWriter::create(&dir.join("traces.jsonl"))?)
        }
        None => None,
    };

    let mut task_rows = Vec::with_capacity(tasks.count);
    let mut all_correct = 0usize;
    let mut all_tokens = 0.0;
    let mut all_k = 0.0;
    let mut total = 0usize;

    for i in 0..tasks.count {
        let task = generate_task(&vocab, tasks.start_seed + i as u64, tasks.difficulty)?;
        let mut correct = 0usize;
        let mut tok_sum = 0.0;
        let mut k_sum = 0.0;
        for sample in 0..opts.samples_per_task {
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(&[EVAL_STREAM, task.id, sample as u64]));
            let completion = generate_plain(&params, &vocab, &task, opts, &mut rng)?;
            let r_acc = accuracy_reward(&completion, &task, &vocab);
            let r_form = format_reward(&completion, &vocab);
            // no group at inference time: the baseline is absent by definition
            let breakdown = total_reward(r_acc, r_form, completion.step_count, None, &reward_cfg)?;
            correct += r_acc as usize;
            tok_sum += completion.tokens.len() as f64;
            k_sum += completion.step_count as f64;
            if let Some(w) = writer.as_mut() {
                w.write(&TraceRecord::from_completion(
                    0,
                    &task,
                    sample,
                    &completion,
                    &vocab,
                    &breakdown,
                    None,
                ))?;
            }
        }
        let n = opts.samples_per_task as f64;
        all_correct += correct;
        all_tokens += tok_sum;
        all_k += k_sum;
        total += opts.samples_per_task;
        task_rows.push(EvalTaskRow {
            task_id: task.id,
            ground_truth: task.ground_truth.clone(),
            samples: opts.samples_per_task,
            accuracy: correct as f64 / n,
            mean_tokens: tok_sum / n,
            mean_k: k_sum / n,
        });
    }

    let summary = EvalSummary {
        accuracy: all_correct as f64 / total as f64,
        mean_tokens: all_tokens / total as f64,
        mean_k: all_k / total as f64,
        tasks: task_rows,
    };

    if let Some(w) = writer {
        w.finish()?;
    }
    if let Some(dir) = out_dir {
        let path = dir.join("summary.json");
        let text = serde_json::to_string_pretty(&summary)
            .map_err(|e| HarnessError::Internal(e.to_string()))?;
        std::fs::write(&path, text).map_err(HarnessError::io(&path))?;
    }
    Ok(summary)
}
