//! Generative-policy contract and the tabular softmax reference policy.
//!
//! The reference policy is a linear softmax model over two context features:
//! the identity of the last context token and a capped position bucket. That
//! is deliberately the smallest featurization that can express "stop earlier":
//! rich enough to learn when to emit a trigger, `</think>`, or `<eos>`, and
//! small enough that exact per-context softmax, KL, and finite-difference
//! gradient checks stay cheap.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::toylang::{Role, TokenId, Vocab};

#[derive(Debug, PartialEq, Eq, thiserror::Error)]
pub enum PolicyError {
    #[error("context must be non-empty")]
    EmptyContext,
    #[error("token index {0} outside vocabulary of size {1}")]
    UnknownToken(usize, usize),
    #[error("logits must all be finite")]
    NonFiniteLogits,
    #[error("temperature must be positive and finite")]
    BadTemperature,
    #[error("top-p must lie in (0, 1]")]
    BadTopP,
    #[error("parameter table shape mismatch")]
    ShapeMismatch,
}

/// Context featurization: last-token one-hot concatenated with a
/// position-bucket one-hot (buckets of width [`FeatureSpec::bucket_width`],
/// capped at `position_buckets`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FeatureSpec {
    pub vocab_size: usize,
    pub position_buckets: usize,
    pub bucket_width: usize,
}

impl FeatureSpec {
    pub const DEFAULT_BUCKETS: usize = 16;
    pub const DEFAULT_BUCKET_WIDTH: usize = 8;

    pub fn for_vocab(vocab: &Vocab) -> Self {
        FeatureSpec {
            vocab_size: vocab.len(),
            position_buckets: Self::DEFAULT_BUCKETS,
            bucket_width: Self::DEFAULT_BUCKET_WIDTH,
        }
    }

    pub fn feature_count(&self) -> usize {
        self.vocab_size + self.position_buckets
    }

    /// The two active feature rows for a context: its last token and the
    /// bucket of the position about to be generated.
    pub fn active_features(&self, context: &[TokenId]) -> Result<(usize, usize), PolicyError> {
        let last = *context.last().ok_or(PolicyError::EmptyContext)?;
        if last.index() >= self.vocab_size {
            return Err(PolicyError::UnknownToken(last.index(), self.vocab_size));
        }
        let bucket = (context.len() / self.bucket_width).min(self.position_buckets - 1);
        Ok((last.index(), self.vocab_size + bucket))
    }
}

/// Anything that maps a context to next-token logits. The softmax of the
/// logits is the next-token distribution; `log_prob` is its log-softmax, so
/// sampling and scoring share one normalization.
pub trait Policy {
    fn vocab_size(&self) -> usize;

    fn next_token_logits(&self, context: &[TokenId]) -> Result<Vec<f64>, PolicyError>;

    fn log_prob(&self, context: &[TokenId], token: TokenId) -> Result<f64, PolicyError> {
        if token.index() >= self.vocab_size() {
            return Err(PolicyError::UnknownToken(token.index(), self.vocab_size()));
        }
        let logits = self.next_token_logits(context)?;
        Ok(log_softmax(&logits)[token.index()])
    }
}

/// Numerically stable log-softmax; the single normalization used everywhere
/// so recorded and recomputed log-probabilities agree bit for bit.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for &l in logits {
        sum += libm::exp(l - max);
    }
    let lse = max + libm::log(sum);
    logits.iter().map(|&l| l - lse).collect()
}

/// Parameters of the tabular policy: one logit row per feature, laid out
/// row-major as `feature_count x vocab_size`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyParams {
    spec: FeatureSpec,
    table: Vec<f64>,
}

impl PolicyParams {
    pub fn zeros(spec: FeatureSpec) -> Self {
        PolicyParams {
            spec,
            table: vec![0.0; spec.feature_count() * spec.vocab_size],
        }
    }

    pub fn from_table(spec: FeatureSpec, table: Vec<f64>) -> Result<Self, PolicyError> {
        if table.len() != spec.feature_count() * spec.vocab_size {
            return Err(PolicyError::ShapeMismatch);
        }
        if !table.iter().all(|v| v.is_finite()) {
            return Err(PolicyError::NonFiniteLogits);
        }
        Ok(PolicyParams { spec, table })
    }

    pub fn spec(&self) -> FeatureSpec {
        self.spec
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn row(&self, feature: usize) -> &[f64] {
        let v = self.spec.vocab_size;
        &self.table[feature * v..(feature + 1) * v]
    }

    pub fn row_mut(&mut self, feature: usize) -> &mut [f64] {
        let v = self.spec.vocab_size;
        &mut self.table[feature * v..(feature + 1) * v]
    }

    /// Adds `step` into every entry. Shapes must match.
    pub fn add_scaled(&mut self, delta: &[f64], scale: f64) -> Result<(), PolicyError> {
        if delta.len() != self.table.len() {
            return Err(PolicyError::ShapeMismatch);
        }
        for (w, d) in self.table.iter_mut().zip(delta) {
            *w += scale * d;
        }
        Ok(())
    }
}

impl Policy for PolicyParams {
    fn vocab_size(&self) -> usize {
        self.spec.vocab_size
    }

    fn next_token_logits(&self, context: &[TokenId]) -> Result<Vec<f64>, PolicyError> {
        let (f_tok, f_pos) = self.spec.active_features(context)?;
        let tok_row = self.row(f_tok);
        let pos_row = self.row(f_pos);
        Ok(tok_row.iter().zip(pos_row).map(|(a, b)| a + b).collect())
    }
}

/// Hand-designed starting bias for the "overthinking" policy.
///
/// Generic column biases apply to the last-token rows of plain, digit, and
/// trigger tokens: plain continuation dominates, triggers appear regularly,
/// digits and the control tokens are suppressed so the policy rambles. The
/// structural biases pre-wire the answer tail (`</think>` tends to be
/// followed by `ans`, `ans` by some digit, a digit by `<eos>`) so
/// format-complete completions occur at a learnable rate while the stopping
/// decision itself stays untrained.
#[derive(Clone, Copy, Debug)]
pub struct VerboseBias {
    pub continuation: f64,
    pub digit: f64,
    pub trigger: f64,
    pub end_think: f64,
    pub answer_sep: f64,
    pub eos: f64,
    pub sep_after_end_think: f64,
    pub answer_digit: f64,
    pub eos_after_digit: f64,
}

impl Default for VerboseBias {
    fn default() -> Self {
        VerboseBias {
            continuation: 2.0,
            digit: -6.0,
            trigger: 0.8,
            end_think: -1.0,
            answer_sep: -5.0,
            eos: -6.0,
            sep_after_end_think: 6.0,
            answer_digit: 4.0,
            eos_after_digit: 5.0,
        }
    }
}

impl PolicyParams {
    /// The initial verbose policy: rambles through plain tokens, emits
    /// triggers regularly, and rarely stops on its own.
    pub fn verbose_init(vocab: &Vocab, spec: FeatureSpec, bias: &VerboseBias) -> Self {
        let mut params = PolicyParams::zeros(spec);
        let answer_sep = vocab.answer_sep();
        let eos = vocab.eos();
        for f in 0..vocab.len() {
            let last = TokenId(f as u16);
            match vocab.role(last) {
                Role::EndThink => {
                    params.row_mut(f)[answer_sep.index()] = bias.sep_after_end_think;
                }
                Role::AnswerSep => {
                    let row = params.row_mut(f);
                    for (v, slot) in row.iter_mut().enumerate() {
                        if vocab.role(TokenId(v as u16)) == Role::Digit {
                            *slot = bias.answer_digit;
                        }
                    }
                }
                Role::Eos => {}
                role => {
                    let row = params.row_mut(f);
                    for (v, slot) in row.iter_mut().enumerate() {
                        *slot = match vocab.role(TokenId(v as u16)) {
                            Role::Plain => bias.continuation,
                            Role::Digit => bias.digit,
                            Role::Trigger => bias.trigger,
                            Role::EndThink => bias.end_think,
                            Role::AnswerSep => bias.answer_sep,
                            Role::Eos => bias.eos,
                        };
                    }
                    if role == Role::Digit {
                        row[eos.index()] = bias.eos_after_digit;
                    }
                }
            }
        }
        params
    }
}

/// Tag distinguishing the two frozen snapshots the optimizer needs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SnapshotTag {
    Old,
    Reference,
}

/// A frozen copy of [`PolicyParams`]; immutable after creation.
#[derive(Clone, Debug)]
pub struct PolicySnapshot {
    params: PolicyParams,
    tag: SnapshotTag,
}

impl PolicySnapshot {
    pub fn new(params: &PolicyParams, tag: SnapshotTag) -> Self {
        PolicySnapshot {
            params: params.clone(),
            tag,
        }
    }

    pub fn params(&self) -> &PolicyParams {
        &self.params
    }

    pub fn tag(&self) -> SnapshotTag {
        self.tag
    }
}

impl Policy for PolicySnapshot {
    fn vocab_size(&self) -> usize {
        self.params.vocab_size()
    }

    fn next_token_logits(&self, context: &[TokenId]) -> Result<Vec<f64>, PolicyError> {
        self.params.next_token_logits(context)
    }
}

fn softmax_probs(logits: &[f64], temperature: f64) -> Result<Vec<f64>, PolicyError> {
    if temperature <= 0.0 || !temperature.is_finite() {
        return Err(PolicyError::BadTemperature);
    }
    if !logits.iter().all(|l| l.is_finite()) {
        return Err(PolicyError::NonFiniteLogits);
    }
    let scaled: Vec<f64> = logits.iter().map(|&l| l / temperature).collect();
    let lsm = log_softmax(&scaled);
    Ok(lsm.iter().map(|&l| libm::exp(l)).collect())
}

/// Draws a token from `softmax(logits / temperature)` by inverse CDF on one
/// uniform draw from `rng`.
pub fn sample_token<R: Rng + ?Sized>(
    logits: &[f64],
    temperature: f64,
    rng: &mut R,
) -> Result<TokenId, PolicyError> {
    let probs = softmax_probs(logits, temperature)?;
    Ok(pick(&probs, rng.gen::<f64>()))
}

/// Nucleus sampling: restricts to the smallest probability-sorted prefix with
/// mass at least `top_p`, renormalizes, then samples. `top_p = 1` is plain
/// temperature sampling.
pub fn sample_token_top_p<R: Rng + ?Sized>(
    logits: &[f64],
    temperature: f64,
    top_p: f64,
    rng: &mut R,
) -> Result<TokenId, PolicyError> {
    if !(top_p > 0.0 && top_p <= 1.0) {
        return Err(PolicyError::BadTopP);
    }
    if top_p >= 1.0 {
        return sample_token(logits, temperature, rng);
    }
    let probs = softmax_probs(logits, temperature)?;
    let mut order: Vec<usize> = (0..probs.len()).collect();
    // ties broken by index so the nucleus is deterministic
    order.sort_by(|&a, &b| probs[b].partial_cmp(&probs[a]).unwrap().then(a.cmp(&b)));
    let mut kept = Vec::with_capacity(order.len());
    let mut mass = 0.0;
    for idx in order {
        kept.push(idx);
        mass += probs[idx];
        if mass >= top_p {
            break;
        }
    }
    let renorm: Vec<f64> = kept.iter().map(|&i| probs[i] / mass).collect();
    let pos = pick(&renorm, rng.gen::<f64>());
    Ok(TokenId(kept[pos.index()] as u16))
}

fn pick(probs: &[f64], u: f64) -> TokenId {
    let mut cum = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        cum += p;
        if u < cum {
            return TokenId(i as u16);
        }
    }
    TokenId((probs.len() - 1) as u16)
}

/// Index of the largest logit, first occurrence on ties.
pub fn argmax(logits: &[f64]) -> TokenId {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, &l) in logits.iter().enumerate() {
        if l > best_val {
            best_val = l;
            best = i;
        }
    }
    TokenId(best as u16)
}

const DOMINANT_LOGIT: f64 = 1.0e3;

/// A deterministic test policy that replays a fixed token script and, once a
/// rollout has appended the answer-inducing prompt, replays a fixed answer
/// with a configurable per-token probability.
///
/// Branch detection: while the generated suffix still matches the script the
/// policy is on its main branch; the first divergence can only be the forced
/// induction prompt, after which emitted tokens index into the answer script.
#[derive(Clone, Debug)]
pub struct ScriptedPolicy {
    prompt_len: usize,
    script: Vec<TokenId>,
    answer: Vec<TokenId>,
    answer_gap: f64,
    vocab_size: usize,
    answer_sep: TokenId,
    eos: TokenId,
}

/// See [`ScriptedPolicy`]. Emits `script` in order with probability ~1, then
/// `<eos>`.
pub fn make_scripted_policy(
    vocab: &Vocab,
    prompt_len: usize,
    script: Vec<TokenId>,
) -> ScriptedPolicy {
    ScriptedPolicy {
        prompt_len,
        script,
        answer: Vec::new(),
        answer_gap: DOMINANT_LOGIT,
        vocab_size: vocab.len(),
        answer_sep: vocab.answer_sep(),
        eos: vocab.eos(),
    }
}

impl ScriptedPolicy {
    /// Configures the answer branch to replay `answer` where each answer
    /// token carries probability `per_token_prob`.
    pub fn with_answer(mut self, answer: Vec<TokenId>, per_token_prob: f64) -> Self {
        assert!(per_token_prob > 0.0 && per_token_prob <= 1.0);
        self.answer = answer;
        self.answer_gap = if per_token_prob >= 1.0 {
            DOMINANT_LOGIT
        } else {
            // gap g with softmax prob p against vocab_size-1 zero logits
            let others = (self.vocab_size - 1) as f64;
            libm::log(others * per_token_prob / (1.0 - per_token_prob))
        };
        self
    }

    fn dominant(&self, token: TokenId, gap: f64) -> Vec<f64> {
        let mut logits = vec![0.0; self.vocab_size];
        logits[token.index()] = gap;
        logits
    }
}

impl Policy for ScriptedPolicy {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn next_token_logits(&self, context: &[TokenId]) -> Result<Vec<f64>, PolicyError> {
        if context.is_empty() {
            return Err(PolicyError::EmptyContext);
        }
        let generated = if context.len() > self.prompt_len {
            &context[self.prompt_len..]
        } else {
            &[]
        };
        let matched = generated
            .iter()
            .zip(&self.script)
            .take_while(|(a, b)| a == b)
            .count();
        if matched == generated.len() {
            // main branch
            let next = self.script.get(matched).copied().unwrap_or(self.eos);
            return Ok(self.dominant(next, DOMINANT_LOGIT));
        }
        // diverged: generated[matched..] is the induction prompt plus any
        // answer tokens decoded so far
        let extra = generated.len() - matched;
        let next = if extra == 1 {
            self.answer_sep
        } else {
            self.answer.get(extra - 2).copied().unwrap_or(self.eos)
        };
        Ok(self.dominant(next, self.answer_gap))
    }
}
