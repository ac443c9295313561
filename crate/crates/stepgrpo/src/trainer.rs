//! The training loop: freeze the old policy, roll out groups through the
//! confidence gate, score step-aware rewards against the group baseline,
//! standardize advantages, and take one exact-gradient ascent step on the
//! clipped KL-regularized objective per training step.

use std::path::{Path, PathBuf};

use stepgrpo_core::grpo::{
    apply_update, compute_advantages, objective_gradient, objective_parts, GroupBatch,
    OptimizerState,
};
use stepgrpo_core::policy::{FeatureSpec, PolicyParams, PolicySnapshot, SnapshotTag, VerboseBias};
use stepgrpo_core::reward::{
    accuracy_reward, format_reward, group_baseline, total_reward, RewardConfig,
};
use stepgrpo_core::rollout::{sample_group, RolloutConfig};
use stepgrpo_core::seeds::derive_seed;
use stepgrpo_core::toylang::{build_vocab, generate_task, TokenId, Vocab};

use crate::checkpoint::save_checkpoint;
use crate::config::TrainConfig;
use crate::error::{HarnessError, Result};
use crate::trace::{JsonlWriter, MetricsRow, TraceRecord};

/// Digit base of the canonical training vocabulary.
pub const DIGIT_BASE: usize = 10;
/// Greedy answer-induction budget.
pub const MAX_ANSWER_TOKENS: usize = 8;
/// Checkpoint cadence (plus init and final).
pub const CHECKPOINT_EVERY: usize = 10;

const TASK_STREAM: u64 = 1;
const GROUP_STREAM: u64 = 2;

pub struct TrainSummary {
    pub run_dir: PathBuf,
    pub final_metrics: MetricsRow,
}

/// Builds the canonical vocabulary for the configured triggers and resolves
/// the trigger symbols. Trigger names must come from the canonical lexicon
/// (`wait`, `alt`, `check`, `hmm`, then `trig{i}`) so a checkpoint alone can
/// rebuild the vocabulary later.
pub fn vocab_for_config(cfg: &TrainConfig) -> Result<(Vocab, Vec<TokenId>)> {
    let vocab = build_vocab(cfg.triggers.len(), DIGIT_BASE)
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let canonical: Vec<&str> = vocab
        .trigger_tokens()
        .into_iter()
        .map(|t| vocab.symbol(t))
        .collect();
    let mut resolved = Vec::with_capacity(cfg.triggers.len());
    for name in &cfg.triggers {
        match vocab.lookup(name) {
            Some(t) if vocab.trigger_tokens().contains(&t) => resolved.push(t),
            _ => {
                return Err(HarnessError::Config(format!(
                    "trigger `{name}` is not canonical; with {} triggers the lexicon is {:?}",
                    cfg.triggers.len(),
                    canonical
                )))
            }
        }
    }
    Ok((vocab, resolved))
}

pub fn rollout_config(cfg: &TrainConfig, vocab: &Vocab, triggers: Vec<TokenId>) -> RolloutConfig {
    RolloutConfig {
        triggers,
        delta: cfg.delta,
        induction_prompt: vec![vocab.end_think(), vocab.answer_sep()],
        max_tokens: cfg.max_tokens,
        max_answer_tokens: MAX_ANSWER_TOKENS,
        temperature: cfg.temperature,
        dynamic_rollout_enabled: cfg.dynamic_rollout_enabled,
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in values {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

/// Runs the full training loop, writing `config.txt`, `lexicon.txt`,
/// `traces.jsonl`, `metrics.jsonl`, and checkpoints into `out_dir`.
/// Byte-deterministic in the config (including its seed).
pub fn train(cfg: &TrainConfig, out_dir: &Path) -> Result<TrainSummary> {
    cfg.validate()?;
    let (vocab, trigger_ids) = vocab_for_config(cfg)?;
    let rollout_cfg = rollout_config(cfg, &vocab, trigger_ids);
    rollout_cfg
        .validate(&vocab)
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let reward_cfg = RewardConfig {
        alpha: cfg.alpha,
        beta: cfg.beta,
        baseline_mode: cfg.baseline_mode,
        step_reward_enabled: cfg.step_reward_enabled,
    };

    std::fs::create_dir_all(out_dir).map_err(HarnessError::io(out_dir))?;
    crate::config::save_config(cfg, &out_dir.join("config.txt"))?;
    std::fs::write(out_dir.join("lexicon.txt"), vocab.to_lexicon())
        .map_err(HarnessError::io(out_dir.join("lexicon.txt")))?;

    let spec = FeatureSpec::for_vocab(&vocab);
    let mut params = PolicyParams::verbose_init(&vocab, spec, &VerboseBias::default());
    let reference = PolicySnapshot::new(&params, SnapshotTag::Reference);
    let mut opt = OptimizerState::new(cfg.learning_rate, cfg.clip_epsilon, cfg.kl_coef);

    save_checkpoint(&params, &vocab, &out_dir.join("ckpt-init.txt"))?;
    let mut traces = JsonlWriter::create(&out_dir.join("traces.jsonl"))?;
    let mut metrics = JsonlWriter::create(&out_dir.join("metrics.jsonl"))?;
    let mut last_row = None;

    for step in 0..cfg.total_steps {
        let old = PolicySnapshot::new(&params, SnapshotTag::Old);
        let mut batches = Vec::with_capacity(cfg.rollout_batch);
        let mut step_records = Vec::new();

        for slot in 0..cfg.rollout_batch {
            let task_seed = derive_seed(&[cfg.seed, TASK_STREAM, step as u64, slot as u64]);
            let task = generate_task(&vocab, task_seed, cfg.difficulty)?;
            let master = derive_seed(&[cfg.seed, GROUP_STREAM, step as u64, slot as u64]);
            let completions =
                sample_group(&old, &vocab, &task, cfg.group_size, &rollout_cfg, master)?;

            let ks: Vec<usize> = completions.iter().map(|c| c.step_count).collect();
            let r_accs: Vec<u8> = completions
                .iter()
                .map(|c| accuracy_reward(c, &task, &vocab))
                .collect();
            let correct: Vec<bool> = r_accs.iter().map(|&r| r == 1).collect();
            let mu = group_baseline(&ks, &correct, reward_cfg.baseline_mode)?;

            let mut rewards = Vec::with_capacity(completions.len());
            let mut breakdowns = Vec::with_capacity(completions.len());
            for (i, completion) in completions.iter().enumerate() {
                let b = total_reward(
                    r_accs[i],
                    format_reward(completion, &vocab),
                    completion.step_count,
                    mu,
                    &reward_cfg,
                )?;
                rewards.push(b.total);
                breakdowns.push(b);
            }
            let advantages = compute_advantages(&rewards)?;

            for (i, completion) in completions.iter().enumerate() {
                step_records.push(TraceRecord::from_completion(
                    step as u64,
                    &task,
                    i,
                    completion,
                    &vocab,
                    &breakdowns[i],
                    Some(advantages[i]),
                ));
            }
            batches.push(GroupBatch {
                prompt: task.prompt.clone(),
                completions,
                rewards,
                advantages,
            });
        }

        let parts = objective_parts(&params, &old, &reference, &batches, &opt)?;
        let gradient = objective_gradient(&params, &old, &reference, &batches, &opt)?;
        apply_update(&mut params, &gradient, &mut opt)?;

        let n = step_records.len() as f64;
        let row = MetricsRow {
            step_index: step as u64,
            mean_reward: step_records.iter().map(|r| r.total).sum::<f64>() / n,
            accuracy: step_records.iter().filter(|r| r.correct).count() as f64 / n,
            mean_tokens: step_records
                .iter()
                .map(|r| r.token_count as f64)
                .sum::<f64>()
                / n,
            mean_k: step_records.iter().map(|r| r.k as f64).sum::<f64>() / n,
            mean_confidence_at_exit: mean(step_records.iter().filter_map(|r| r.answer_confidence)),
            kl_value: parts.kl_mean,
        };
        for record in &step_records {
            traces.write(record)?;
        }
        metrics.write(&row)?;
        last_row = Some(row);

        if (step + 1) % CHECKPOINT_EVERY == 0 {
            save_checkpoint(
                &params,
                &vocab,
                &out_dir.join(format!("ckpt-step-{:04}.txt", step + 1)),
            )?;
        }
    }

    save_checkpoint(&params, &vocab, &out_dir.join("ckpt-final.txt"))?;
    traces.finish()?;
    metrics.finish()?;

    Ok(TrainSummary {
        run_dir: out_dir.to_path_buf(),
        final_metrics: last_row.expect("total_steps >= 1 was validated"),
    })
}
