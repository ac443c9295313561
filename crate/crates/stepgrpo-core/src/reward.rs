//! Step-aware relative reward.
//!
//! `R = alpha * R_acc * [1 - beta * tanh((k - mu) / mu)] + (1 - alpha) * R_form`
//!
//! where `mu` is the mean step count of the group's *correct* completions.
//! Excluding incorrect completions keeps short give-up answers and circular
//! failures from skewing the baseline; with no correct completion in the
//! group the efficiency term is omitted entirely (factor 1). The tanh bounds
//! the efficiency incentive to `(1 - beta, 1 + beta)`: fewer steps than the
//! baseline earn a bonus, more steps a penalty.

use alloc::string::String;
use alloc::vec::Vec;

use crate::rollout::Completion;
use crate::toylang::{check_answer, Role, Task, TokenId, Vocab};

#[derive(Debug, PartialEq, Eq, thiserror::Error)]
pub enum RewardError {
    #[error("step_counts and correct_flags must have equal, non-zero length")]
    LengthMismatch,
    #[error("step count must be at least 1")]
    BadStepCount,
    #[error("baseline must be positive when present")]
    BadBaseline,
}

/// Which completions feed the step baseline.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BaselineMode {
    CorrectOnly,
    AllSamples,
}

impl BaselineMode {
    pub fn as_str(self) -> &'static str {
        match self {
            BaselineMode::CorrectOnly => "correct_only",
            BaselineMode::AllSamples => "all_samples",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "correct_only" => BaselineMode::CorrectOnly,
            "all_samples" => BaselineMode::AllSamples,
            _ => return None,
        })
    }
}

/// Reward weights and ablation switches.
#[derive(Clone, Copy, Debug)]
pub struct RewardConfig {
    pub alpha: f64,
    pub beta: f64,
    pub baseline_mode: BaselineMode,
    pub step_reward_enabled: bool,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            alpha: 0.1,
            beta: 0.5,
            baseline_mode: BaselineMode::CorrectOnly,
            step_reward_enabled: true,
        }
    }
}

/// The reward decomposition for one completion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RewardBreakdown {
    pub r_acc: u8,
    pub r_form: u8,
    pub k: usize,
    pub mu: Option<f64>,
    pub efficiency_factor: f64,
    pub total: f64,
}

/// Extracts the answer text: after the first end-think token, past one
/// optional answer separator, the maximal run of digit tokens. `None` when
/// there is no end-think token or the digit run is empty.
pub fn extract_answer(tokens: &[TokenId], vocab: &Vocab) -> Option<String> {
    let end = tokens.iter().position(|&t| t == vocab.end_think())?;
    let mut rest = &tokens[end + 1..];
    if rest.first() == Some(&vocab.answer_sep()) {
        rest = &rest[1..];
    }
    let digits: String = rest
        .iter()
        .take_while(|&&t| vocab.role(t) == Role::Digit)
        .map(|&t| vocab.symbol(t))
        .collect();
    if digits.is_empty() {
        None
    } else {
        Some(digits)
    }
}

/// 1 iff the extracted answer grades correct against the task.
pub fn accuracy_reward(completion: &Completion, task: &Task, vocab: &Vocab) -> u8 {
    match extract_answer(&completion.tokens, vocab) {
        Some(answer) if check_answer(task, &answer) => 1,
        _ => 0,
    }
}

/// 1 iff the completion is structurally well-formed: exactly one end-think
/// token, immediately followed by exactly one answer separator, then a
/// non-empty digit span terminated by eos or the end of the sequence.
pub fn format_reward(completion: &Completion, vocab: &Vocab) -> u8 {
    let tokens = &completion.tokens;
    let n_end = tokens.iter().filter(|&&t| t == vocab.end_think()).count();
    let n_sep = tokens.iter().filter(|&&t| t == vocab.answer_sep()).count();
    if n_end != 1 || n_sep != 1 {
        return 0;
    }
    let end = tokens.iter().position(|&t| t == vocab.end_think()).unwrap();
    if tokens.get(end + 1) != Some(&vocab.answer_sep()) {
        return 0;
    }
    let tail = &tokens[end + 2..];
    let span = match tail.last() {
        None => return 0,
        Some(&t) if t == vocab.eos() => &tail[..tail.len() - 1],
        Some(_) => tail,
    };
    if span.is_empty() || !span.iter().all(|&t| vocab.role(t) == Role::Digit) {
        return 0;
    }
    1
}

/// The dynamic step baseline. `CorrectOnly` averages the step counts of the
/// correct completions and is absent when none are correct; `AllSamples`
/// averages over the whole group.
pub fn group_baseline(
    step_counts: &[usize],
    correct_flags: &[bool],
    mode: BaselineMode,
) -> Result<Option<f64>, RewardError> {
    if step_counts.len() != correct_flags.len() || step_counts.is_empty() {
        return Err(RewardError::LengthMismatch);
    }
    let selected: Vec<f64> = step_counts
        .iter()
        .zip(correct_flags)
        .filter(|(_, &c)| mode == BaselineMode::AllSamples || c)
        .map(|(&k, _)| k as f64)
        .collect();
    if selected.is_empty() {
        return Ok(None);
    }
    Ok(Some(selected.iter().sum::<f64>() / selected.len() as f64))
}

/// Combines accuracy, step efficiency, and format compliance into the total
/// reward. With the baseline absent or the step reward disabled the
/// efficiency factor is 1.
pub fn total_reward(
    r_acc: u8,
    r_form: u8,
    k: usize,
    mu: Option<f64>,
    cfg: &RewardConfig,
) -> Result<RewardBreakdown, RewardError> {
    if k == 0 {
        return Err(RewardError::BadStepCount);
    }
    if let Some(m) = mu {
        if m <= 0.0 {
            return Err(RewardError::BadBaseline);
        }
    }
    let efficiency_factor = match mu {
        Some(m) if cfg.step_reward_enabled => 1.0 - cfg.beta * libm::tanh((k as f64 - m) / m),
        _ => 1.0,
    };
    let total = cfg.alpha * r_acc as f64 * efficiency_factor + (1.0 - cfg.alpha) * r_form as f64;
    Ok(RewardBreakdown {
        r_acc,
        r_form,
        k,
        mu,
        efficiency_factor,
        total,
    })
}
