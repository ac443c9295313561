//! Dynamic truncated rollout.
//!
//! Free generation pauses whenever the sampled token is a trigger. The
//! rollout then force-appends the answer-inducing prompt, decodes a tentative
//! answer greedily, and scores its confidence as the mean log-probability of
//! the answer tokens. If the geometric-mean token probability exceeds the
//! threshold, generation ends there and the completion keeps the trigger,
//! the induction prompt, and the induced answer; otherwise the tentative
//! answer is discarded and free generation resumes.
//!
//! The confidence gate is rng-free (greedy decoding), so runs with different
//! thresholds share the same sampling stream up to the exit point.

use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::policy::{argmax, log_softmax, sample_token, Policy, PolicyError};
use crate::seeds::derive_seed;
use crate::stepseg;
use crate::toylang::{Role, Task, TokenId, Vocab};

/// Counts every answer-induction probe process-wide. The evaluation path
/// must leave it untouched; tests and the harness assert on it.
static INDUCTION_CALLS: AtomicU64 = AtomicU64::new(0);

pub fn induction_call_count() -> u64 {
    INDUCTION_CALLS.load(Ordering::Relaxed)
}

pub fn reset_induction_call_count() {
    INDUCTION_CALLS.store(0, Ordering::Relaxed);
}

#[derive(Debug, PartialEq, Eq, thiserror::Error)]
pub enum RolloutError {
    #[error("delta must lie strictly between 0 and 1")]
    BadDelta,
    #[error("max_tokens must be at least 1")]
    BadMaxTokens,
    #[error("induction prompt must be non-empty and begin with the end-think token")]
    BadInductionPrompt,
    #[error("trigger set must be non-empty")]
    NoTriggers,
    #[error("group size must be at least 2")]
    BadGroupSize,
    #[error("answer log-probability list must be non-empty")]
    EmptyAnswer,
    #[error("policy error: {0}")]
    Policy(#[from] PolicyError),
}

/// Knobs of the truncated-rollout gate.
#[derive(Clone, Debug)]
pub struct RolloutConfig {
    pub triggers: Vec<TokenId>,
    pub delta: f64,
    pub induction_prompt: Vec<TokenId>,
    pub max_tokens: usize,
    pub max_answer_tokens: usize,
    pub temperature: f64,
    pub dynamic_rollout_enabled: bool,
}

impl RolloutConfig {
    /// Defaults for a vocabulary: gate on every trigger token, induction
    /// prompt `</think> ans` (the toy rendering of "the final answer is"),
    /// threshold 0.95, temperature 1.
    pub fn for_vocab(vocab: &Vocab) -> Self {
        RolloutConfig {
            triggers: vocab.trigger_tokens(),
            delta: 0.95,
            induction_prompt: alloc::vec![vocab.end_think(), vocab.answer_sep()],
            max_tokens: 128,
            max_answer_tokens: 8,
            temperature: 1.0,
            dynamic_rollout_enabled: true,
        }
    }

    pub fn validate(&self, vocab: &Vocab) -> Result<(), RolloutError> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(RolloutError::BadDelta);
        }
        if self.max_tokens == 0 {
            return Err(RolloutError::BadMaxTokens);
        }
        match self.induction_prompt.first() {
            Some(&t) if vocab.role(t) == Role::EndThink => {}
            _ => return Err(RolloutError::BadInductionPrompt),
        }
        if self.triggers.is_empty() {
            return Err(RolloutError::NoTriggers);
        }
        Ok(())
    }
}

/// Why a rollout stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TerminalReason {
    ConfidentExit,
    Eos,
    MaxTokens,
}

impl TerminalReason {
    pub fn as_str(self) -> &'static str {
        match self {
            TerminalReason::ConfidentExit => "confident_exit",
            TerminalReason::Eos => "eos",
            TerminalReason::MaxTokens => "max_tokens",
        }
    }
}

/// One sampled trajectory with its per-token log-probabilities under the
/// policy that generated it.
#[derive(Clone, Debug)]
pub struct Completion {
    pub task_id: u64,
    pub tokens: Vec<TokenId>,
    pub token_logprobs: Vec<f64>,
    pub truncated: bool,
    pub trigger_positions: Vec<usize>,
    pub induced_answer: Option<Vec<TokenId>>,
    pub answer_confidence: Option<f64>,
    pub terminal_reason: TerminalReason,
    pub step_count: usize,
}

/// Mean log-probability of the induced answer tokens.
pub fn answer_confidence(answer_logprobs: &[f64]) -> Result<f64, RolloutError> {
    if answer_logprobs.is_empty() {
        return Err(RolloutError::EmptyAnswer);
    }
    Ok(answer_logprobs.iter().sum::<f64>() / answer_logprobs.len() as f64)
}

/// Exit iff the geometric-mean token probability strictly exceeds `delta`.
/// `confidence` is a mean log-probability, so the comparison happens on the
/// probability scale.
pub fn truncation_decision(confidence: f64, delta: f64) -> bool {
    libm::exp(confidence) > delta
}

/// Result of one answer-induction probe.
#[derive(Clone, Debug)]
pub struct InducedAnswer {
    /// Log-probabilities of the forced induction-prompt tokens.
    pub induction_logprobs: Vec<f64>,
    pub answer: Vec<TokenId>,
    pub answer_logprobs: Vec<f64>,
    /// Mean answer-token log-probability; `-inf` when the answer is empty so
    /// an empty induction can never truncate.
    pub confidence: f64,
}

/// Forces the induction prompt onto `history` and decodes a tentative answer
/// greedily until an answer separator, eos, or `max_answer_tokens`.
/// Confidence covers the answer tokens only; the forced prompt tokens are
/// scored but excluded from the mean.
pub fn induce_answer<P: Policy>(
    policy: &P,
    vocab: &Vocab,
    history: &[TokenId],
    cfg: &RolloutConfig,
) -> Result<InducedAnswer, RolloutError> {
    INDUCTION_CALLS.fetch_add(1, Ordering::Relaxed);
    let mut ctx: Vec<TokenId> = history.to_vec();
    let mut induction_logprobs = Vec::with_capacity(cfg.induction_prompt.len());
    for &tok in &cfg.induction_prompt {
        let logits = policy.next_token_logits(&ctx)?;
        induction_logprobs.push(log_softmax(&logits)[tok.index()]);
        ctx.push(tok);
    }
    let mut answer = Vec::new();
    let mut answer_logprobs = Vec::new();
    for _ in 0..cfg.max_answer_tokens {
        let logits = policy.next_token_logits(&ctx)?;
        let tok = argmax(&logits);
        if tok == vocab.answer_sep() || tok == vocab.eos() {
            break;
        }
        answer_logprobs.push(log_softmax(&logits)[tok.index()]);
        answer.push(tok);
        ctx.push(tok);
    }
    let confidence = answer_confidence(&answer_logprobs).unwrap_or(f64::NEG_INFINITY);
    Ok(InducedAnswer {
        induction_logprobs,
        answer,
        answer_logprobs,
        confidence,
    })
}

/// Runs one rollout for `task` under `policy`.
///
/// With the gate enabled, every sampled trigger token pauses generation for
/// an answer-induction probe; a confident probe ends the completion with the
/// induction prompt and induced answer appended (their log-probabilities are
/// recorded like any retained token). With the gate disabled this is plain
/// autoregressive sampling, though trigger positions are still recorded.
pub fn run_rollout<P: Policy, R: Rng + ?Sized>(
    policy: &P,
    vocab: &Vocab,
    task: &Task,
    cfg: &RolloutConfig,
    rng: &mut R,
) -> Result<Completion, RolloutError> {
    let eos = vocab.eos();
    let mut ctx = task.prompt.clone();
    let mut tokens = Vec::new();
    let mut logprobs = Vec::new();
    let mut trigger_positions = Vec::new();
    let mut induced_answer = None;
    let mut confidence = None;
    let mut truncated = false;

    let terminal = loop {
        if tokens.len() >= cfg.max_tokens {
            break TerminalReason::MaxTokens;
        }
        let logits = policy.next_token_logits(&ctx)?;
        let tok = sample_token(&logits, cfg.temperature, rng)?;
        logprobs.push(log_softmax(&logits)[tok.index()]);
        tokens.push(tok);
        ctx.push(tok);
        if tok == eos {
            break TerminalReason::Eos;
        }
        if cfg.triggers.contains(&tok) {
            trigger_positions.push(tokens.len() - 1);
            if cfg.dynamic_rollout_enabled {
                let probe = induce_answer(policy, vocab, &ctx, cfg)?;
                if !probe.answer.is_empty() && truncation_decision(probe.confidence, cfg.delta) {
                    // appended tokens still count toward step quantification,
                    // so triggers among them are recorded (without pausing)
                    for (&t, &lp) in cfg.induction_prompt.iter().zip(&probe.induction_logprobs) {
                        if cfg.triggers.contains(&t) {
                            trigger_positions.push(tokens.len());
                        }
                        tokens.push(t);
                        logprobs.push(lp);
                        ctx.push(t);
                    }
                    for (&t, &lp) in probe.answer.iter().zip(&probe.answer_logprobs) {
                        if cfg.triggers.contains(&t) {
                            trigger_positions.push(tokens.len());
                        }
                        tokens.push(t);
                        logprobs.push(lp);
                        ctx.push(t);
                    }
                    induced_answer = Some(probe.answer);
                    confidence = Some(probe.confidence);
                    truncated = true;
                    break TerminalReason::ConfidentExit;
                }
                // low confidence: tentative answer discarded, free
                // generation resumes from the unchanged context
            }
        }
    };

    let step_count = stepseg::step_count(&tokens, &cfg.triggers);
    Ok(Completion {
        task_id: task.id,
        tokens,
        token_logprobs: logprobs,
        truncated,
        trigger_positions,
        induced_answer,
        answer_confidence: confidence,
        terminal_reason: terminal,
        step_count,
    })
}

/// Samples a group of independent rollouts. Member `i` draws from a ChaCha
/// stream seeded by `(master_seed, task.id, i)`, so groups are reproducible
/// and members are permutation-independent.
pub fn sample_group<P: Policy>(
    policy: &P,
    vocab: &Vocab,
    task: &Task,
    group_size: usize,
    cfg: &RolloutConfig,
    master_seed: u64,
) -> Result<Vec<Completion>, RolloutError> {
    if group_size < 2 {
        return Err(RolloutError::BadGroupSize);
    }
    let mut group = Vec::with_capacity(group_size);
    for member in 0..group_size {
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(&[master_seed, task.id, member as u64]));
        group.push(run_rollout(policy, vocab, task, cfg, &mut rng)?);
    }
    Ok(group)
}
