//! Token alphabet and synthetic arithmetic-chain tasks.
//!
//! The toy language is small enough that exact softmax math over the whole
//! vocabulary stays cheap: a handful of plain "reasoning" tokens, one digit
//! token per value of the chosen base, a set of trigger tokens marking
//! step boundaries, and three control tokens (`</think>`, `ans`, `<eos>`).
//!
//! A task is a chain of single-digit operands; the ground truth is their sum
//! modulo [`ANSWER_CAP`], rendered in the vocabulary's digit alphabet.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::seeds::derive_seed;

/// Answers are reduced modulo this cap so they stay at most three digits.
pub const ANSWER_CAP: u64 = 1000;

/// Probability mass of the focus operand in [`generate_task`]. Operands are
/// a mixture of a fixed focus digit and a uniform draw, which concentrates
/// the answer distribution: a policy that cannot read the prompt can still
/// be right often, the way a capable model is right on an easy benchmark.
/// That keeps the correct-only baseline populated and the efficiency term
/// live at desk scale.
pub const OPERAND_FOCUS_WEIGHT: f64 = 0.85;

/// Hard ceiling on vocabulary size; keeps per-context softmax and KL exact
/// and cheap.
pub const MAX_VOCAB: usize = 128;

const PLAIN_SYMBOLS: [&str; 5] = ["sum", "plus", "ask", "so", "note"];
const TRIGGER_SYMBOLS: [&str; 4] = ["wait", "alt", "check", "hmm"];
const END_THINK_SYMBOL: &str = "</think>";
const ANSWER_SEP_SYMBOL: &str = "ans";
const EOS_SYMBOL: &str = "<eos>";

/// Index of a token in a [`Vocab`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TokenId(pub u16);

impl TokenId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Role of a token in the toy language.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Plain,
    Digit,
    Trigger,
    EndThink,
    AnswerSep,
    Eos,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Plain => "plain",
            Role::Digit => "digit",
            Role::Trigger => "trigger",
            Role::EndThink => "end_think",
            Role::AnswerSep => "answer_sep",
            Role::Eos => "eos",
        }
    }

    fn from_str(s: &str) -> Option<Role> {
        Some(match s {
            "plain" => Role::Plain,
            "digit" => Role::Digit,
            "trigger" => Role::Trigger,
            "end_think" => Role::EndThink,
            "answer_sep" => Role::AnswerSep,
            "eos" => Role::Eos,
            _ => return None,
        })
    }
}

#[derive(Debug, PartialEq, Eq, thiserror::Error)]
pub enum ToylangError {
    #[error("trigger_count must be at least 1")]
    NoTriggers,
    #[error("digit_base {0} outside supported range 2..=36")]
    BadDigitBase(usize),
    #[error("vocabulary would have {0} tokens, limit is {MAX_VOCAB}")]
    VocabTooLarge(usize),
    #[error("difficulty must be at least 1")]
    BadDifficulty,
    #[error("unknown token symbol `{0}`")]
    UnknownSymbol(String),
    #[error("malformed lexicon line {0}")]
    BadLexiconLine(usize),
}

/// The token alphabet: ordered symbols plus a role per token.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    symbols: Vec<String>,
    roles: Vec<Role>,
    digit_base: usize,
    trigger_count: usize,
    end_think: TokenId,
    answer_sep: TokenId,
    eos: TokenId,
}

/// Builds the canonical vocabulary: plain tokens, `digit_base` digits,
/// `trigger_count` triggers, then `</think>`, `ans`, `<eos>`.
///
/// Trigger symbols are drawn from a fixed lexicon (`wait`, `alt`, `check`,
/// `hmm`) and fall back to `trig{i}` past its end, so a vocabulary is fully
/// determined by `(trigger_count, digit_base)`.
pub fn build_vocab(trigger_count: usize, digit_base: usize) -> Result<Vocab, ToylangError> {
    if trigger_count == 0 {
        return Err(ToylangError::NoTriggers);
    }
    if !(2..=36).contains(&digit_base) {
        return Err(ToylangError::BadDigitBase(digit_base));
    }
    let total = PLAIN_SYMBOLS.len() + digit_base + trigger_count + 3;
    if total > MAX_VOCAB {
        return Err(ToylangError::VocabTooLarge(total));
    }

    let mut symbols = Vec::with_capacity(total);
    let mut roles = Vec::with_capacity(total);
    for s in PLAIN_SYMBOLS {
        symbols.push(s.to_string());
        roles.push(Role::Plain);
    }
    for d in 0..digit_base {
        symbols.push(String::from(digit_char(d)));
        roles.push(Role::Digit);
    }
    for t in 0..trigger_count {
        let sym = TRIGGER_SYMBOLS
            .get(t)
            .map(|s| s.to_string())
            .unwrap_or_else(|| format!("trig{t}"));
        symbols.push(sym);
        roles.push(Role::Trigger);
    }
    symbols.push(END_THINK_SYMBOL.to_string());
    roles.push(Role::EndThink);
    symbols.push(ANSWER_SEP_SYMBOL.to_string());
    roles.push(Role::AnswerSep);
    symbols.push(EOS_SYMBOL.to_string());
    roles.push(Role::Eos);

    let n = symbols.len();
    Ok(Vocab {
        symbols,
        roles,
        digit_base,
        trigger_count,
        end_think: TokenId((n - 3) as u16),
        answer_sep: TokenId((n - 2) as u16),
        eos: TokenId((n - 1) as u16),
    })
}

fn digit_char(d: usize) -> char {
    if d < 10 {
        (b'0' + d as u8) as char
    } else {
        (b'a' + (d - 10) as u8) as char
    }
}

impl Vocab {
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn digit_base(&self) -> usize {
        self.digit_base
    }

    pub fn trigger_count(&self) -> usize {
        self.trigger_count
    }

    pub fn symbol(&self, token: TokenId) -> &str {
        &self.symbols[token.index()]
    }

    pub fn role(&self, token: TokenId) -> Role {
        self.roles[token.index()]
    }

    pub fn end_think(&self) -> TokenId {
        self.end_think
    }

    pub fn answer_sep(&self) -> TokenId {
        self.answer_sep
    }

    pub fn eos(&self) -> TokenId {
        self.eos
    }

    pub fn lookup(&self, symbol: &str) -> Option<TokenId> {
        self.symbols
            .iter()
            .position(|s| s == symbol)
            .map(|i| TokenId(i as u16))
    }

    /// All tokens with the trigger role, in vocabulary order.
    pub fn trigger_tokens(&self) -> Vec<TokenId> {
        self.tokens_with_role(Role::Trigger)
    }

    pub fn tokens_with_role(&self, role: Role) -> Vec<TokenId> {
        (0..self.len())
            .map(|i| TokenId(i as u16))
            .filter(|&t| self.role(t) == role)
            .collect()
    }

    /// Token id of the digit with value `d` (`d < digit_base`).
    pub fn digit(&self, d: usize) -> TokenId {
        debug_assert!(d < self.digit_base);
        TokenId((PLAIN_SYMBOLS.len() + d) as u16)
    }

    fn digit_value(&self, token: TokenId) -> Option<u64> {
        if self.role(token) == Role::Digit {
            Some((token.index() - PLAIN_SYMBOLS.len()) as u64)
        } else {
            None
        }
    }

    /// Renders a value in this vocabulary's digit alphabet.
    pub fn render_value(&self, mut value: u64) -> String {
        let base = self.digit_base as u64;
        let mut digits = Vec::new();
        loop {
            digits.push(digit_char((value % base) as usize));
            value /= base;
            if value == 0 {
                break;
            }
        }
        digits.iter().rev().collect()
    }

    /// Token sequence spelling `value` in the digit alphabet.
    pub fn value_tokens(&self, value: u64) -> Vec<TokenId> {
        self.render_value(value)
            .chars()
            .map(|c| {
                self.lookup(&String::from(c))
                    .expect("digit symbol is always in the vocabulary")
            })
            .collect()
    }

    /// One `symbol<TAB>role` line per token, LF endings.
    pub fn to_lexicon(&self) -> String {
        let mut out = String::new();
        for i in 0..self.len() {
            let t = TokenId(i as u16);
            out.push_str(self.symbol(t));
            out.push('\t');
            out.push_str(self.role(t).as_str());
            out.push('\n');
        }
        out
    }

    /// Parses a lexicon produced by [`Vocab::to_lexicon`].
    pub fn from_lexicon(text: &str) -> Result<Vocab, ToylangError> {
        let mut symbols = Vec::new();
        let mut roles = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (sym, role) = line
                .split_once('\t')
                .ok_or(ToylangError::BadLexiconLine(lineno + 1))?;
            let role = Role::from_str(role).ok_or(ToylangError::BadLexiconLine(lineno + 1))?;
            symbols.push(sym.to_string());
            roles.push(role);
        }
        let find_unique = |want: Role| -> Result<TokenId, ToylangError> {
            let mut found = None;
            for (i, &r) in roles.iter().enumerate() {
                if r == want {
                    if found.is_some() {
                        return Err(ToylangError::BadLexiconLine(i + 1));
                    }
                    found = Some(TokenId(i as u16));
                }
            }
            found.ok_or(ToylangError::BadLexiconLine(0))
        };
        let end_think = find_unique(Role::EndThink)?;
        let answer_sep = find_unique(Role::AnswerSep)?;
        let eos = find_unique(Role::Eos)?;
        let digit_base = roles.iter().filter(|&&r| r == Role::Digit).count();
        let trigger_count = roles.iter().filter(|&&r| r == Role::Trigger).count();
        Ok(Vocab {
            symbols,
            roles,
            digit_base,
            trigger_count,
            end_think,
            answer_sep,
            eos,
        })
    }
}

/// A synthetic reasoning problem: a prompt encoding an addition chain and its
/// exact answer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Task {
    pub id: u64,
    pub prompt: Vec<TokenId>,
    pub ground_truth: String,
    pub difficulty: u32,
}

/// Generates the task for `(seed, difficulty)`: `difficulty` single-digit
/// operands, prompt `sum d (plus d)* ask`, ground truth = operand sum modulo
/// [`ANSWER_CAP`] rendered in the digit alphabet. The trailing `ask` marker
/// closes the question so generation never starts from a digit context.
/// Pure in its arguments.
pub fn generate_task(vocab: &Vocab, seed: u64, difficulty: u32) -> Result<Task, ToylangError> {
    if difficulty == 0 {
        return Err(ToylangError::BadDifficulty);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, difficulty as u64, 0x7a5c]));
    let sum_kw = vocab.lookup("sum").expect("canonical plain token");
    let plus_kw = vocab.lookup("plus").expect("canonical plain token");
    let ask_kw = vocab.lookup("ask").expect("canonical plain token");

    let mut prompt = Vec::new();
    prompt.push(sum_kw);
    let mut total: u64 = 0;
    let focus = 2 % vocab.digit_base() as u64;
    for i in 0..difficulty {
        if i > 0 {
            prompt.push(plus_kw);
        }
        let operand = if rng.gen::<f64>() < OPERAND_FOCUS_WEIGHT {
            focus
        } else {
            rng.gen_range(0..vocab.digit_base() as u64)
        };
        total = (total + operand) % ANSWER_CAP;
        prompt.extend(vocab.value_tokens(operand));
    }
    prompt.push(ask_kw);
    Ok(Task {
        id: seed,
        prompt,
        ground_truth: vocab.render_value(total),
        difficulty,
    })
}

/// Re-derives the answer from a prompt by summing its digit groups; the
/// independent check used in tests and by the trace tooling.
pub fn prompt_answer(vocab: &Vocab, prompt: &[TokenId]) -> String {
    let mut total: u64 = 0;
    let mut current: Option<u64> = None;
    let base = vocab.digit_base() as u64;
    for &t in prompt {
        match vocab.digit_value(t) {
            Some(d) => current = Some(current.unwrap_or(0) * base + d),
            None => {
                if let Some(v) = current.take() {
                    total = (total + v) % ANSWER_CAP;
                }
            }
        }
    }
    if let Some(v) = current {
        total = (total + v) % ANSWER_CAP;
    }
    vocab.render_value(total)
}

/// Exact-match grading after normalization: trim ASCII whitespace, strip
/// leading zeros (keeping a lone final zero).
pub fn check_answer(task: &Task, answer_text: &str) -> bool {
    normalize_answer(answer_text) == normalize_answer(&task.ground_truth)
}

fn normalize_answer(text: &str) -> &str {
    let trimmed = text.trim();
    let stripped = trimmed.trim_start_matches('0');
    if stripped.is_empty() && !trimmed.is_empty() {
        "0"
    } else {
        stripped
    }
}
