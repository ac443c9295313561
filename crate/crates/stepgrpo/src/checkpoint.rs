//! Plain-text policy checkpoints.
//!
//! Format, LF line endings throughout:
//!
//! ```text
//! stepgrpo-ckpt v1
//! feature_spec last_token+pos_bucket vocab=19 triggers=2 digit_base=10 buckets=16 bucket_width=8
//! <vocab_size decimal floats, space separated>   // one line per feature row
//! ```
//!
//! The descriptor carries enough to rebuild both the vocabulary and the
//! featurization, so `eval` and `rollout` need nothing but the checkpoint.
//! Floats are written with Rust's shortest round-trip formatting, so
//! save/load is exact.

use std::path::Path;

use stepgrpo_core::policy::{FeatureSpec, PolicyParams};
use stepgrpo_core::toylang::{build_vocab, Vocab};

use crate::error::{HarnessError, Result};

const MAGIC: &str = "stepgrpo-ckpt v1";
const FEATURIZATION: &str = "last_token+pos_bucket";

pub fn checkpoint_text(params: &PolicyParams, vocab: &Vocab) -> String {
    let spec = params.spec();
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    out.push_str(&format!(
        "feature_spec {FEATURIZATION} vocab={} triggers={} digit_base={} buckets={} bucket_width={}\n",
        spec.vocab_size,
        vocab.trigger_count(),
        vocab.digit_base(),
        spec.position_buckets,
        spec.bucket_width,
    ));
    for f in 0..spec.feature_count() {
        let row: Vec<String> = params.row(f).iter().map(|w| w.to_string()).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn save_checkpoint(params: &PolicyParams, vocab: &Vocab, path: &Path) -> Result<()> {
    std::fs::write(path, checkpoint_text(params, vocab)).map_err(HarnessError::io(path))
}

pub fn load_checkpoint(path: &Path) -> Result<(PolicyParams, Vocab)> {
    let text = std::fs::read_to_string(path).map_err(HarnessError::io(path))?;
    parse_checkpoint(&text).map_err(|(line, msg)| HarnessError::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    })
}

fn parse_checkpoint(text: &str) -> std::result::Result<(PolicyParams, Vocab), (usize, String)> {
    let mut lines = text.lines().enumerate();
    let (_, magic) = lines.next().ok_or((1, "empty checkpoint".to_string()))?;
    if magic != MAGIC {
        return Err((1, format!("bad header `{magic}`, expected `{MAGIC}`")));
    }
    let (_, descriptor) = lines
        .next()
        .ok_or((2, "missing feature_spec".to_string()))?;
    let mut fields = descriptor.split_whitespace();
    if fields.next() != Some("feature_spec") || fields.next() != Some(FEATURIZATION) {
        return Err((2, format!("bad feature_spec `{descriptor}`")));
    }
    let mut vocab_size = None;
    let mut triggers = None;
    let mut digit_base = None;
    let mut buckets = None;
    let mut bucket_width = None;
    for field in fields {
        let (key, value) = field
            .split_once('=')
            .ok_or((2, format!("bad descriptor field `{field}`")))?;
        let value: usize = value
            .parse()
            .map_err(|_| (2, format!("bad descriptor value `{field}`")))?;
        match key {
            "vocab" => vocab_size = Some(value),
            "triggers" => triggers = Some(value),
            "digit_base" => digit_base = Some(value),
            "buckets" => buckets = Some(value),
            "bucket_width" => bucket_width = Some(value),
            _ => return Err((2, format!("unknown descriptor key `{key}`"))),
        }
    }
    let missing = |name: &str| (2, format!("descriptor missing `{name}`"));
    let vocab_size = vocab_size.ok_or_else(|| missing("vocab"))?;
    let triggers = triggers.ok_or_else(|| missing("triggers"))?;
    let digit_base = digit_base.ok_or_else(|| missing("digit_base"))?;
    let buckets = buckets.ok_or_else(|| missing("buckets"))?;
    let bucket_width = bucket_width.ok_or_else(|| missing("bucket_width"))?;

    let vocab = build_vocab(triggers, digit_base).map_err(|e| (2, e.to_string()))?;
    if vocab.len() != vocab_size {
        return Err((
            2,
            format!(
                "descriptor says vocab={vocab_size} but triggers={triggers} digit_base={digit_base} builds {} tokens",
                vocab.len()
            ),
        ));
    }
    let spec = FeatureSpec {
        vocab_size,
        position_buckets: buckets,
        bucket_width,
    };

    let mut table = Vec::with_capacity(spec.feature_count() * vocab_size);
    let mut rows = 0;
    for (lineno, line) in lines {
        if line.is_empty() {
            continue;
        }
        let mut row = Vec::with_capacity(vocab_size);
        for tok in line.split_whitespace() {
            let w: f64 = tok
                .parse()
                .map_err(|_| (lineno + 1, format!("bad float `{tok}`")))?;
            row.push(w);
        }
        if row.len() != vocab_size {
            return Err((
                lineno + 1,
                format!("row has {} entries, expected {vocab_size}", row.len()),
            ));
        }
        table.extend(row);
        rows += 1;
    }
    if rows != spec.feature_count() {
        return Err((0, format!("{rows} rows, expected {}", spec.feature_count())));
    }
    let params = PolicyParams::from_table(spec, table).map_err(|e| (0, e.to_string()))?;
    Ok((params, vocab))
}
