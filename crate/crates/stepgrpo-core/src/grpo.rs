//! Group-relative policy optimization: within-group standardized advantages,
//! the clipped importance-weighted objective with an exact KL penalty, its
//! analytic gradient, and the parameter update.
//!
//! The objective averages per completion (each completion's token sum is
//! normalized by its own length) and across completions:
//!
//! `J = mean_i [ (1/|o_i|) sum_t min(r_t A_i, clip(r_t, 1-eps, 1+eps) A_i)
//!               - beta_kl * (1/|o_i|) sum_t KL(pi_theta || pi_ref)(ctx_t) ]`
//!
//! with `r_t` the token-level probability ratio against the frozen old
//! policy. The KL term is computed exactly by summing over the vocabulary at
//! every retained token context; at desk scale that is cheap and removes
//! estimator noise from the tests.

use alloc::vec;
use alloc::vec::Vec;

use crate::policy::{log_softmax, Policy, PolicyError, PolicyParams, PolicySnapshot};
use crate::rollout::Completion;
use crate::toylang::TokenId;

/// Groups with reward spread below this are treated as degenerate and get
/// all-zero advantages.
pub const DEGENERATE_STD: f64 = 1e-8;

#[derive(Debug, PartialEq, Eq, thiserror::Error)]
pub enum GrpoError {
    #[error("a group needs at least 2 rewards")]
    GroupTooSmall,
    #[error("batch list must be non-empty")]
    EmptyBatches,
    #[error("completion {0} has no tokens")]
    EmptyCompletion(usize),
    #[error("completions, rewards, and advantages must have equal length")]
    LengthMismatch,
    #[error("gradient shape mismatch")]
    ShapeMismatch,
    #[error("policy error: {0}")]
    Policy(#[from] PolicyError),
}

/// One task's rollout group with its scores.
#[derive(Clone, Debug)]
pub struct GroupBatch {
    /// Prompt shared by the group's completions; needed to rebuild each
    /// token's context.
    pub prompt: Vec<TokenId>,
    pub completions: Vec<Completion>,
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
}

impl GroupBatch {
    fn validate(&self, index: usize) -> Result<(), GrpoError> {
        if self.completions.len() != self.rewards.len()
            || self.completions.len() != self.advantages.len()
        {
            return Err(GrpoError::LengthMismatch);
        }
        if self.completions.iter().any(|c| c.tokens.is_empty()) {
            return Err(GrpoError::EmptyCompletion(index));
        }
        Ok(())
    }
}

/// Optimizer knobs and step counter.
#[derive(Clone, Copy, Debug)]
pub struct OptimizerState {
    pub learning_rate: f64,
    pub clip_epsilon: f64,
    pub kl_coef: f64,
    pub step_index: u64,
}

impl OptimizerState {
    pub fn new(learning_rate: f64, clip_epsilon: f64, kl_coef: f64) -> Self {
        OptimizerState {
            learning_rate,
            clip_epsilon,
            kl_coef,
            step_index: 0,
        }
    }
}

/// Standardizes rewards within the group using the population standard
/// deviation; a spread below [`DEGENERATE_STD`] yields all-zero advantages
/// so degenerate groups drop out of the update without changing shapes.
pub fn compute_advantages(rewards: &[f64]) -> Result<Vec<f64>, GrpoError> {
    if rewards.len() < 2 {
        return Err(GrpoError::GroupTooSmall);
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let std = libm::sqrt(var);
    if std < DEGENERATE_STD {
        return Ok(vec![0.0; rewards.len()]);
    }
    Ok(rewards.iter().map(|r| (r - mean) / std).collect())
}

/// `pi_theta(token|context) / pi_old(token|context)` as
/// `exp(log_prob_new - log_prob_old)`.
pub fn importance_ratio(
    params: &PolicyParams,
    old: &PolicySnapshot,
    context: &[TokenId],
    token: TokenId,
) -> Result<f64, GrpoError> {
    let lp_new = params.log_prob(context, token)?;
    let lp_old = old.params().log_prob(context, token)?;
    Ok(libm::exp(lp_new - lp_old))
}

/// Exact `KL(pi_theta(.|context) || pi_ref(.|context))` summed over the
/// vocabulary.
pub fn kl_term(
    params: &PolicyParams,
    reference: &PolicySnapshot,
    context: &[TokenId],
) -> Result<f64, GrpoError> {
    let lsm_new = log_softmax(&params.next_token_logits(context)?);
    let lsm_ref = log_softmax(&reference.params().next_token_logits(context)?);
    Ok(kl_from_logsoftmax(&lsm_new, &lsm_ref))
}

fn kl_from_logsoftmax(lsm_p: &[f64], lsm_q: &[f64]) -> f64 {
    lsm_p
        .iter()
        .zip(lsm_q)
        .map(|(&lp, &lq)| libm::exp(lp) * (lp - lq))
        .sum()
}

/// The evaluated pieces of the objective, kept separate so the harness can
/// log the KL component.
#[derive(Clone, Copy, Debug, Default)]
pub struct ObjectiveParts {
    /// Mean per-completion clipped policy term.
    pub policy_term: f64,
    /// Mean per-completion (length-normalized) KL to the reference policy.
    pub kl_mean: f64,
}

impl ObjectiveParts {
    pub fn total(&self, kl_coef: f64) -> f64 {
        self.policy_term - kl_coef * self.kl_mean
    }
}

fn clip(x: f64, lo: f64, hi: f64) -> f64 {
    x.max(lo).min(hi)
}

/// The clipped, KL-penalized surrogate value.
pub fn surrogate_objective(
    params: &PolicyParams,
    old: &PolicySnapshot,
    reference: &PolicySnapshot,
    batches: &[GroupBatch],
    opt: &OptimizerState,
) -> Result<f64, GrpoError> {
    Ok(objective_parts(params, old, reference, batches, opt)?.total(opt.kl_coef))
}

/// Evaluates both objective components over the batches.
pub fn objective_parts(
    params: &PolicyParams,
    old: &PolicySnapshot,
    reference: &PolicySnapshot,
    batches: &[GroupBatch],
    opt: &OptimizerState,
) -> Result<ObjectiveParts, GrpoError> {
    if batches.is_empty() {
        return Err(GrpoError::EmptyBatches);
    }
    let mut policy_sum = 0.0;
    let mut kl_sum = 0.0;
    let mut completion_count = 0usize;
    for (bi, batch) in batches.iter().enumerate() {
        batch.validate(bi)?;
        for (completion, &adv) in batch.completions.iter().zip(&batch.advantages) {
            let n = completion.tokens.len() as f64;
            let mut ctx = batch.prompt.clone();
            let mut pol_acc = 0.0;
            let mut kl_acc = 0.0;
            for &tok in &completion.tokens {
                let lsm_new = log_softmax(&params.next_token_logits(&ctx)?);
                let lsm_old = log_softmax(&old.params().next_token_logits(&ctx)?);
                let lsm_ref = log_softmax(&reference.params().next_token_logits(&ctx)?);
                let ratio = libm::exp(lsm_new[tok.index()] - lsm_old[tok.index()]);
                let clipped = clip(ratio, 1.0 - opt.clip_epsilon, 1.0 + opt.clip_epsilon);
                pol_acc += (ratio * adv).min(clipped * adv);
                kl_acc += kl_from_logsoftmax(&lsm_new, &lsm_ref);
                ctx.push(tok);
            }
            policy_sum += pol_acc / n;
            kl_sum += kl_acc / n;
            completion_count += 1;
        }
    }
    let n = completion_count as f64;
    Ok(ObjectiveParts {
        policy_term: policy_sum / n,
        kl_mean: kl_sum / n,
    })
}

/// Analytic gradient of [`surrogate_objective`] with respect to every entry
/// of the parameter table (ascent direction).
///
/// Per token, the policy part contributes
/// `w * ratio * A * (onehot(tok) - softmax)` on the two active feature rows
/// unless the min selects the clipped, flat arm (ratio beyond the clip range
/// on the side the advantage cares about), which contributes zero. The KL
/// part follows `dKL/dlogit_u = p_u * ((log p_u - log q_u) - KL)`.
pub fn objective_gradient(
    params: &PolicyParams,
    old: &PolicySnapshot,
    reference: &PolicySnapshot,
    batches: &[GroupBatch],
    opt: &OptimizerState,
) -> Result<Vec<f64>, GrpoError> {
    if batches.is_empty() {
        return Err(GrpoError::EmptyBatches);
    }
    let spec = params.spec();
    let vocab = spec.vocab_size;
    let mut grad = vec![0.0; spec.feature_count() * vocab];
    let total_completions: usize = batches.iter().map(|b| b.completions.len()).sum();
    let outer = 1.0 / total_completions as f64;

    for (bi, batch) in batches.iter().enumerate() {
        batch.validate(bi)?;
        for (completion, &adv) in batch.completions.iter().zip(&batch.advantages) {
            let weight = outer / completion.tokens.len() as f64;
            let mut ctx = batch.prompt.clone();
            for &tok in &completion.tokens {
                let (f_tok, f_pos) = spec.active_features(&ctx)?;
                let lsm_new = log_softmax(&params.next_token_logits(&ctx)?);
                let lsm_old = log_softmax(&old.params().next_token_logits(&ctx)?);
                let lsm_ref = log_softmax(&reference.params().next_token_logits(&ctx)?);
                let probs: Vec<f64> = lsm_new.iter().map(|&l| libm::exp(l)).collect();
                let ratio = libm::exp(lsm_new[tok.index()] - lsm_old[tok.index()]);

                let clipped_flat = (adv > 0.0 && ratio > 1.0 + opt.clip_epsilon)
                    || (adv < 0.0 && ratio < 1.0 - opt.clip_epsilon);
                let pg_coef = if clipped_flat {
                    0.0
                } else {
                    weight * ratio * adv
                };

                let kl_ctx = kl_from_logsoftmax(&lsm_new, &lsm_ref);
                for f in [f_tok, f_pos] {
                    let row = &mut grad[f * vocab..(f + 1) * vocab];
                    for (u, slot) in row.iter_mut().enumerate() {
                        let indicator = if u == tok.index() { 1.0 } else { 0.0 };
                        let pg = pg_coef * (indicator - probs[u]);
                        let dkl = probs[u] * ((lsm_new[u] - lsm_ref[u]) - kl_ctx);
                        *slot += pg - weight * opt.kl_coef * dkl;
                    }
                }
                ctx.push(tok);
            }
        }
    }
    Ok(grad)
}

/// One gradient-ascent step: `params += learning_rate * gradient`.
pub fn apply_update(
    params: &mut PolicyParams,
    gradient: &[f64],
    opt: &mut OptimizerState,
) -> Result<(), GrpoError> {
    params
        .add_scaled(gradient, opt.learning_rate)
        .map_err(|_| GrpoError::ShapeMismatch)?;
    opt.step_index += 1;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{FeatureSpec, SnapshotTag};
    use crate::rollout::TerminalReason;
    use crate::toylang::{build_vocab, Vocab};
    use approx::assert_relative_eq;

    fn vocab() -> Vocab {
        build_vocab(1, 4).unwrap() // 12 tokens
    }

    fn spec_for(v: &Vocab) -> FeatureSpec {
        FeatureSpec {
            vocab_size: v.len(),
            position_buckets: 3,
            bucket_width: 4,
        }
    }

    // small deterministic pseudo-random table fill
    fn fill(params: &mut PolicyParams, salt: u64) {
        let spec = params.spec();
        for f in 0..spec.feature_count() {
            for v in 0..spec.vocab_size {
                let x = crate::seeds::derive_seed(&[salt, f as u64, v as u64]);
                params.row_mut(f)[v] = ((x % 2000) as f64 / 1000.0) - 1.0;
            }
        }
    }

    fn completion(tokens: Vec<TokenId>) -> Completion {
        let n = tokens.len();
        Completion {
            task_id: 0,
            tokens,
            token_logprobs: vec![0.0; n],
            truncated: false,
            trigger_positions: vec![],
            induced_answer: None,
            answer_confidence: None,
            terminal_reason: TerminalReason::Eos,
            step_count: 1,
        }
    }

    fn tiny_batches(v: &Vocab, advantages: Vec<f64>) -> Vec<GroupBatch> {
        let prompt = vec![v.digit(0), v.digit(1)];
        let completions = vec![
            completion(vec![v.digit(2), v.digit(3), v.eos()]),
            completion(vec![v.digit(1), v.trigger_tokens()[0], v.eos()]),
        ];
        vec![GroupBatch {
            prompt,
            rewards: vec![0.0; completions.len()],
            advantages,
            completions,
        }]
    }

    #[test]
    fn advantages_frozen_values() {
        let a = compute_advantages(&[1.0, 0.5, 0.0]).unwrap();
        // population std of {1, .5, 0} is sqrt(1/6)
        let s = (1.0f64 / 6.0).sqrt();
        assert_relative_eq!(a[0], 0.5 / s, max_relative = 1e-12);
        assert_relative_eq!(a[0], 1.224744871391589, max_relative = 1e-9);
        assert_relative_eq!(a[1], 0.0, epsilon = 1e-12);
        assert_relative_eq!(a[2], -1.224744871391589, max_relative = 1e-9);
    }

    #[test]
    fn advantages_degenerate_group_is_zero() {
        assert_eq!(compute_advantages(&[0.7, 0.7, 0.7]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn advantages_standardized() {
        let rewards = [0.3, 1.7, -2.0, 0.9, 0.1];
        let a = compute_advantages(&rewards).unwrap();
        let mean: f64 = a.iter().sum::<f64>() / a.len() as f64;
        let var: f64 = a.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / a.len() as f64;
        assert_relative_eq!(mean, 0.0, epsilon = 1e-10);
        assert_relative_eq!(var.sqrt(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn advantages_need_two_rewards() {
        assert_eq!(compute_advantages(&[1.0]), Err(GrpoError::GroupTooSmall));
    }

    #[test]
    fn ratio_is_one_for_identical_policies() {
        let v = vocab();
        let mut params = PolicyParams::zeros(spec_for(&v));
        fill(&mut params, 5);
        let old = PolicySnapshot::new(&params, SnapshotTag::Old);
        for tok in 0..v.len() {
            let r = importance_ratio(&params, &old, &[v.digit(0)], TokenId(tok as u16)).unwrap();
            assert_relative_eq!(r, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn ratio_matches_scalar_softmax() {
        let v = vocab();
        let spec = spec_for(&v);
        let mut a = PolicyParams::zeros(spec);
        let mut b = PolicyParams::zeros(spec);
        fill(&mut a, 1);
        fill(&mut b, 2);
        let ctx = [v.digit(2)];
        let tok = v.digit(1);
        let old = PolicySnapshot::new(&b, SnapshotTag::Old);
        let r = importance_ratio(&a, &old, &ctx, tok).unwrap();
        // independent route: explicit softmax on both logit vectors
        let soft = |p: &PolicyParams| -> f64 {
            let logits = p.next_token_logits(&ctx).unwrap();
            let z: f64 = logits.iter().map(|l| l.exp()).sum();
            logits[tok.index()].exp() / z
        };
        assert_relative_eq!(r, soft(&a) / soft(&b), max_relative = 1e-12);
    }

    #[test]
    fn kl_zero_at_reference() {
        let v = vocab();
        let mut params = PolicyParams::zeros(spec_for(&v));
        fill(&mut params, 9);
        let r = PolicySnapshot::new(&params, SnapshotTag::Reference);
        let kl = kl_term(&params, &r, &[v.digit(0), v.digit(1)]).unwrap();
        assert_relative_eq!(kl, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn kl_non_negative() {
        let v = vocab();
        let spec = spec_for(&v);
        for salt in 0..20 {
            let mut a = PolicyParams::zeros(spec);
            let mut b = PolicyParams::zeros(spec);
            fill(&mut a, salt);
            fill(&mut b, salt + 100);
            let r = PolicySnapshot::new(&b, SnapshotTag::Reference);
            let kl = kl_term(&a, &r, &[v.digit(0)]).unwrap();
            assert!(kl >= 0.0, "kl = {kl}");
        }
    }

    #[test]
    fn kl_matches_hand_sum() {
        // two hand-set 3-token distributions via direct sum p ln(p/q)
        let lsm_p = log_softmax(&[0.2, -0.4, 1.0]);
        let lsm_q = log_softmax(&[-0.5, 0.5, 0.0]);
        let got = kl_from_logsoftmax(&lsm_p, &lsm_q);
        let p: Vec<f64> = lsm_p.iter().map(|l| l.exp()).collect();
        let q: Vec<f64> = lsm_q.iter().map(|l| l.exp()).collect();
        let want: f64 = (0..3).map(|i| p[i] * (p[i] / q[i]).ln()).sum();
        assert_relative_eq!(got, want, max_relative = 1e-12);
    }

    #[test]
    fn objective_zero_when_everything_matches_and_advantages_zero() {
        let v = vocab();
        let mut params = PolicyParams::zeros(spec_for(&v));
        fill(&mut params, 3);
        let old = PolicySnapshot::new(&params, SnapshotTag::Old);
        let r = PolicySnapshot::new(&params, SnapshotTag::Reference);
        let batches = tiny_batches(&v, vec![0.0, 0.0]);
        let opt = OptimizerState::new(1e-6, 0.2, 0.01);
        let j = surrogate_objective(&params, &old, &r, &batches, &opt).unwrap();
        assert_relative_eq!(j, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn objective_reduces_to_kl_when_params_equal_old() {
        let v = vocab();
        let spec = spec_for(&v);
        let mut params = PolicyParams::zeros(spec);
        let mut other = PolicyParams::zeros(spec);
        fill(&mut params, 3);
        fill(&mut other, 77);
        let old = PolicySnapshot::new(&params, SnapshotTag::Old);
        let refp = PolicySnapshot::new(&other, SnapshotTag::Reference);
        let adv = vec![0.7, -1.3];
        let batches = tiny_batches(&v, adv.clone());
        let opt = OptimizerState::new(1e-6, 0.2, 0.01);
        let j = surrogate_objective(&params, &old, &refp, &batches, &opt).unwrap();
        let parts = objective_parts(&params, &old, &refp, &batches, &opt).unwrap();
        // ratios are exactly 1, so the policy term is the mean advantage
        let mean_adv = (adv[0] + adv[1]) / 2.0;
        assert_relative_eq!(parts.policy_term, mean_adv, epsilon = 1e-12);
        assert_relative_eq!(j, mean_adv - opt.kl_coef * parts.kl_mean, epsilon = 1e-12);
        assert!(parts.kl_mean > 0.0);
    }

    // independent brute-force evaluation, written against the formula rather
    // than sharing any code with the implementation
    fn brute_force_objective(
        params: &PolicyParams,
        old: &PolicySnapshot,
        refp: &PolicySnapshot,
        batches: &[GroupBatch],
        opt: &OptimizerState,
    ) -> f64 {
        let softmax = |p: &PolicyParams, ctx: &[TokenId]| -> Vec<f64> {
            let logits = p.next_token_logits(ctx).unwrap();
            let z: f64 = logits.iter().map(|l| l.exp()).sum();
            logits.iter().map(|l| l.exp() / z).collect()
        };
        let mut total = 0.0;
        let mut count = 0usize;
        for b in batches {
            for (c, &a) in b.completions.iter().zip(&b.advantages) {
                let mut ctx = b.prompt.clone();
                let mut term = 0.0;
                for &tok in &c.tokens {
                    let pn = softmax(params, &ctx);
                    let po = softmax(old.params(), &ctx);
                    let pr = softmax(refp.params(), &ctx);
                    let ratio = pn[tok.index()] / po[tok.index()];
                    let clipped = ratio
                        .max(1.0 - opt.clip_epsilon)
                        .min(1.0 + opt.clip_epsilon);
                    let kl: f64 = pn.iter().zip(&pr).map(|(&p, &q)| p * (p / q).ln()).sum();
                    term += (ratio * a).min(clipped * a) - opt.kl_coef * kl;
                    ctx.push(tok);
                }
                total += term / c.tokens.len() as f64;
                count += 1;
            }
        }
        total / count as f64
    }

    #[test]
    fn objective_matches_brute_force_enumeration() {
        let v = vocab();
        let spec = spec_for(&v);
        for salt in 0..10 {
            let mut params = PolicyParams::zeros(spec);
            let mut po = PolicyParams::zeros(spec);
            let mut pr = PolicyParams::zeros(spec);
            fill(&mut params, salt);
            fill(&mut po, salt + 40);
            fill(&mut pr, salt + 80);
            let old = PolicySnapshot::new(&po, SnapshotTag::Old);
            let refp = PolicySnapshot::new(&pr, SnapshotTag::Reference);
            let batches = tiny_batches(&v, vec![1.3, -0.8]);
            let opt = OptimizerState::new(1e-6, 0.2, 0.01);
            let got = surrogate_objective(&params, &old, &refp, &batches, &opt).unwrap();
            let want = brute_force_objective(&params, &old, &refp, &batches, &opt);
            assert_relative_eq!(got, want, max_relative = 1e-10);
        }
    }

    fn numeric_gradient(
        params: &PolicyParams,
        old: &PolicySnapshot,
        refp: &PolicySnapshot,
        batches: &[GroupBatch],
        opt: &OptimizerState,
        h: f64,
    ) -> Vec<f64> {
        let spec = params.spec();
        let table = params.table().to_vec();
        let mut grad = vec![0.0; table.len()];
        for i in 0..table.len() {
            let mut plus = table.clone();
            plus[i] += h;
            let mut minus = table.clone();
            minus[i] -= h;
            let jp = surrogate_objective(
                &PolicyParams::from_table(spec, plus).unwrap(),
                old,
                refp,
                batches,
                opt,
            )
            .unwrap();
            let jm = surrogate_objective(
                &PolicyParams::from_table(spec, minus).unwrap(),
                old,
                refp,
                batches,
                opt,
            )
            .unwrap();
            grad[i] = (jp - jm) / (2.0 * h);
        }
        grad
    }

    pub(crate) fn max_rel_error(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(&x, &y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-6))
            .fold(0.0, f64::max)
    }

    #[test]
    fn gradient_zero_for_identical_policies_and_zero_advantages() {
        let v = vocab();
        let mut params = PolicyParams::zeros(spec_for(&v));
        fill(&mut params, 3);
        let old = PolicySnapshot::new(&params, SnapshotTag::Old);
        let refp = PolicySnapshot::new(&params, SnapshotTag::Reference);
        let batches = tiny_batches(&v, vec![0.0, 0.0]);
        let opt = OptimizerState::new(1e-6, 0.2, 0.01);
        let g = objective_gradient(&params, &old, &refp, &batches, &opt).unwrap();
        assert!(g.iter().all(|&x| x.abs() < 1e-12));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let v = vocab();
        let spec = spec_for(&v);
        for salt in 0..6 {
            let mut params = PolicyParams::zeros(spec);
            let mut po = PolicyParams::zeros(spec);
            let mut pr = PolicyParams::zeros(spec);
            fill(&mut params, salt);
            fill(&mut po, salt + 21);
            fill(&mut pr, salt + 42);
            let old = PolicySnapshot::new(&po, SnapshotTag::Old);
            let refp = PolicySnapshot::new(&pr, SnapshotTag::Reference);
            let batches = tiny_batches(&v, vec![1.1, -0.6]);
            let opt = OptimizerState::new(1e-6, 0.2, 0.01);
            let analytic = objective_gradient(&params, &old, &refp, &batches, &opt).unwrap();
            let numeric = numeric_gradient(&params, &old, &refp, &batches, &opt, 1e-5);
            let err = max_rel_error(&analytic, &numeric);
            assert!(err <= 1e-4, "salt {salt}: max rel error {err}");
        }
    }

    #[test]
    fn gradient_reduces_to_reinforce_at_old_params() {
        // at params == old with kl_coef = 0 the update direction is the
        // plain advantage-weighted score function
        let v = vocab();
        let spec = spec_for(&v);
        let mut params = PolicyParams::zeros(spec);
        fill(&mut params, 13);
        let old = PolicySnapshot::new(&params, SnapshotTag::Old);
        let refp = PolicySnapshot::new(&params, SnapshotTag::Reference);
        let adv = vec![0.9, -1.4];
        let batches = tiny_batches(&v, adv.clone());
        let opt = OptimizerState::new(1e-6, 0.2, 0.0);
        let analytic = objective_gradient(&params, &old, &refp, &batches, &opt).unwrap();

        // separately implemented REINFORCE-style gradient
        let mut reinforce = vec![0.0; params.table().len()];
        let total: usize = batches.iter().map(|b| b.completions.len()).sum();
        for b in &batches {
            for (c, &a) in b.completions.iter().zip(&b.advantages) {
                let w = 1.0 / (total as f64 * c.tokens.len() as f64);
                let mut ctx = b.prompt.clone();
                for &tok in &c.tokens {
                    let (f1, f2) = spec.active_features(&ctx).unwrap();
                    let logits = params.next_token_logits(&ctx).unwrap();
                    let z: f64 = logits.iter().map(|l| l.exp()).sum();
                    for f in [f1, f2] {
                        for u in 0..spec.vocab_size {
                            let p = logits[u].exp() / z;
                            let ind = if u == tok.index() { 1.0 } else { 0.0 };
                            reinforce[f * spec.vocab_size + u] += w * a * (ind - p);
                        }
                    }
                    ctx.push(tok);
                }
            }
        }
        let err = max_rel_error(&analytic, &reinforce);
        assert!(err <= 1e-9, "max rel error {err}");
    }

    #[test]
    fn ascent_step_improves_frozen_batch_objective() {
        let v = vocab();
        let spec = spec_for(&v);
        let mut params = PolicyParams::zeros(spec);
        fill(&mut params, 4);
        let old = PolicySnapshot::new(&params, SnapshotTag::Old);
        let refp = PolicySnapshot::new(&params, SnapshotTag::Reference);
        let batches = tiny_batches(&v, vec![1.0, -1.0]);
        let mut opt = OptimizerState::new(1e-6, 0.2, 0.01);
        let before = surrogate_objective(&params, &old, &refp, &batches, &opt).unwrap();
        let g = objective_gradient(&params, &old, &refp, &batches, &opt).unwrap();
        apply_update(&mut params, &g, &mut opt).unwrap();
        let after = surrogate_objective(&params, &old, &refp, &batches, &opt).unwrap();
        assert!(after >= before, "objective fell: {before} -> {after}");
        assert_eq!(opt.step_index, 1);
    }

    #[test]
    fn apply_update_is_linear() {
        let v = vocab();
        let spec = spec_for(&v);
        let base = {
            let mut p = PolicyParams::zeros(spec);
            fill(&mut p, 8);
            p
        };
        let g1: Vec<f64> = (0..base.table().len())
            .map(|i| (i % 5) as f64 * 0.1)
            .collect();
        let g2: Vec<f64> = (0..base.table().len())
            .map(|i| (i % 3) as f64 * -0.2)
            .collect();
        let mut opt = OptimizerState::new(0.5, 0.2, 0.0);

        let mut sequential = base.clone();
        apply_update(&mut sequential, &g1, &mut opt).unwrap();
        apply_update(&mut sequential, &g2, &mut opt).unwrap();

        let summed: Vec<f64> = g1.iter().zip(&g2).map(|(a, b)| a + b).collect();
        let mut combined = base.clone();
        apply_update(&mut combined, &summed, &mut opt).unwrap();

        for (a, b) in sequential.table().iter().zip(combined.table()) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn apply_update_zero_gradient_is_identity() {
        let v = vocab();
        let spec = spec_for(&v);
        let mut p = PolicyParams::zeros(spec);
        fill(&mut p, 2);
        let before = p.clone();
        let len = p.table().len();
        let mut opt = OptimizerState::new(1.0, 0.2, 0.0);
        apply_update(&mut p, &vec![0.0; len], &mut opt).unwrap();
        assert_eq!(p.table(), before.table());
        // lr = 1 with all-ones gradient shifts every entry by exactly 1
        apply_update(&mut p, &vec![1.0; len], &mut opt).unwrap();
        for (&a, &b) in p.table().iter().zip(before.table()) {
            assert_relative_eq!(a, b + 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn per_token_term_respects_clipping_envelope() {
        let eps = 0.2;
        for i in 0..500 {
            let ratio = libm::exp(((i % 100) as f64 - 50.0) / 10.0);
            let adv = ((i % 37) as f64 - 18.0) / 6.0;
            let clipped = clip(ratio, 1.0 - eps, 1.0 + eps);
            let term = (ratio * adv).min(clipped * adv);
            assert!(term <= ratio.max(1.0 + eps) * adv.abs() + 1e-15);
            if adv > 0.0 {
                assert!(term <= (1.0 + eps) * adv + 1e-15);
            }
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let v = vocab();
        let mut p = PolicyParams::zeros(spec_for(&v));
        let mut opt = OptimizerState::new(1.0, 0.2, 0.0);
        assert_eq!(
            apply_update(&mut p, &[1.0, 2.0], &mut opt),
            Err(GrpoError::ShapeMismatch)
        );
    }

    #[test]
    fn empty_completion_rejected() {
        let v = vocab();
        let mut params = PolicyParams::zeros(spec_for(&v));
        fill(&mut params, 3);
        let old = PolicySnapshot::new(&params, SnapshotTag::Old);
        let refp = PolicySnapshot::new(&params, SnapshotTag::Reference);
        let batches = vec![GroupBatch {
            prompt: vec![v.digit(0)],
            completions: vec![completion(vec![])],
            rewards: vec![0.0],
            advantages: vec![0.0],
        }];
        let opt = OptimizerState::new(1e-6, 0.2, 0.01);
        assert!(matches!(
            surrogate_objective(&params, &old, &refp, &batches, &opt),
            Err(GrpoError::EmptyCompletion(0))
        ));
    }
}
