//! Flat `key = value` training configuration.
//!
//! The file format is a plain UTF-8 text file, one `key = value` per line,
//! `#` comments allowed, keys exactly matching the [`TrainConfig`] field
//! names. Unknown keys, duplicates, malformed lines, and out-of-range values
//! are rejected with the offending key or line. Missing keys fall back to
//! the desk-scale defaults.

use std::fmt::Write as _;
use std::path::Path;

use stepgrpo_core::reward::BaselineMode;

use crate::error::{HarnessError, Result};

/// Every knob of the pipeline plus the ablation switches.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    pub clip_epsilon: f64,
    pub kl_coef: f64,
    pub learning_rate: f64,
    pub group_size: usize,
    pub rollout_batch: usize,
    pub total_steps: usize,
    pub max_tokens: usize,
    pub difficulty: u32,
    pub seed: u64,
    pub triggers: Vec<String>,
    pub baseline_mode: BaselineMode,
    pub step_reward_enabled: bool,
    pub dynamic_rollout_enabled: bool,
    pub temperature: f64,
    pub eval_temperature: f64,
    pub eval_top_p: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 0.1,
            beta: 0.5,
            delta: 0.95,
            clip_epsilon: 0.2,
            kl_coef: 0.01,
            learning_rate: 10.0,
            group_size: 5,
            rollout_batch: 16,
            total_steps: 100,
            max_tokens: 128,
            difficulty: 2,
            seed: 42,
            triggers: vec!["wait".into(), "alt".into()],
            baseline_mode: BaselineMode::CorrectOnly,
            step_reward_enabled: true,
            dynamic_rollout_enabled: true,
            temperature: 1.0,
            eval_temperature: 0.6,
            eval_top_p: 0.9,
        }
    }
}

const KEYS: [&str; 19] = [
    "alpha",
    "beta",
    "delta",
    "clip_epsilon",
    "kl_coef",
    "learning_rate",
    "group_size",
    "rollout_batch",
    "total_steps",
    "max_tokens",
    "difficulty",
    "seed",
    "triggers",
    "baseline_mode",
    "step_reward_enabled",
    "dynamic_rollout_enabled",
    "temperature",
    "eval_temperature",
    "eval_top_p",
];

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha = {} outside [0, 1]", self.alpha));
        }
        if !self.beta.is_finite() || self.beta <= 0.0 {
            return bad(format!("beta = {} must be positive", self.beta));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta = {} outside (0, 1)", self.delta));
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return bad(format!(
                "clip_epsilon = {} outside (0, 1)",
                self.clip_epsilon
            ));
        }
        if !self.kl_coef.is_finite() || self.kl_coef < 0.0 {
            return bad(format!("kl_coef = {} must be non-negative", self.kl_coef));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return bad(format!(
                "learning_rate = {} must be positive",
                self.learning_rate
            ));
        }
        if self.group_size < 2 {
            return bad(format!(
                "group_size = {} must be at least 2",
                self.group_size
            ));
        }
        if self.rollout_batch == 0 {
            return bad("rollout_batch must be at least 1".into());
        }
        if self.total_steps == 0 {
            return bad("total_steps must be at least 1".into());
        }
        if self.max_tokens == 0 {
            return bad("max_tokens must be at least 1".into());
        }
        if self.difficulty == 0 {
            return bad("difficulty must be at least 1".into());
        }
        if self.triggers.is_empty() {
            return bad("triggers must list at least one trigger token".into());
        }
        if !self.temperature.is_finite() || self.temperature <= 0.0 {
            return bad(format!(
                "temperature = {} must be positive",
                self.temperature
            ));
        }
        if !self.eval_temperature.is_finite() || self.eval_temperature <= 0.0 {
            return bad(format!(
                "eval_temperature = {} must be positive",
                self.eval_temperature
            ));
        }
        if !(self.eval_top_p > 0.0 && self.eval_top_p <= 1.0) {
            return bad(format!("eval_top_p = {} outside (0, 1]", self.eval_top_p));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "alpha = {}", self.alpha);
        let _ = writeln!(out, "beta = {}", self.beta);
        let _ = writeln!(out, "delta = {}", self.delta);
        let _ = writeln!(out, "clip_epsilon = {}", self.clip_epsilon);
        let _ = writeln!(out, "kl_coef = {}", self.kl_coef);
        let _ = writeln!(out, "learning_rate = {}", self.learning_rate);
        let _ = writeln!(out, "group_size = {}", self.group_size);
        let _ = writeln!(out, "rollout_batch = {}", self.rollout_batch);
        let _ = writeln!(out, "total_steps = {}", self.total_steps);
        let _ = writeln!(out, "max_tokens = {}", self.max_tokens);
        let _ = writeln!(out, "difficulty = {}", self.difficulty);
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "triggers = {}", self.triggers.join(","));
        let _ = writeln!(out, "baseline_mode = {}", self.baseline_mode.as_str());
        let _ = writeln!(out, "step_reward_enabled = {}", self.step_reward_enabled);
        let _ = writeln!(
            out,
            "dynamic_rollout_enabled = {}",
            self.dynamic_rollout_enabled
        );
        let _ = writeln!(out, "temperature = {}", self.temperature);
        let _ = writeln!(out, "eval_temperature = {}", self.eval_temperature);
        let _ = writeln!(out, "eval_top_p = {}", self.eval_top_p);
        out
    }

    pub fn from_text(text: &str) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::default();
        let mut seen: Vec<&str> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                HarnessError::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            let canon = KEYS
                .iter()
                .find(|&&k| k == key)
                .ok_or_else(|| HarnessError::Config(format!("unknown key `{key}`")))?;
            if seen.contains(canon) {
                return Err(HarnessError::Config(format!("duplicate key `{key}`")));
            }
            seen.push(canon);
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| HarnessError::Config(format!("key `{key}`: cannot parse `{value}`")))
        }
        match key {
            "alpha" => self.alpha = num(key, value)?,
            "beta" => self.beta = num(key, value)?,
            "delta" => self.delta = num(key, value)?,
            "clip_epsilon" => self.clip_epsilon = num(key, value)?,
            "kl_coef" => self.kl_coef = num(key, value)?,
            "learning_rate" => self.learning_rate = num(key, value)?,
            "group_size" => self.group_size = num(key, value)?,
            "rollout_batch" => self.rollout_batch = num(key, value)?,
            "total_steps" => self.total_steps = num(key, value)?,
            "max_tokens" => self.max_tokens = num(key, value)?,
            "difficulty" => self.difficulty = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "triggers" => {
                self.triggers = value
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect();
            }
            "baseline_mode" => {
                self.baseline_mode = BaselineMode::parse(value).ok_or_else(|| {
                    HarnessError::Config(format!(
                        "key `baseline_mode`: expected correct_only or all_samples, got `{value}`"
                    ))
                })?;
            }
            "step_reward_enabled" => self.step_reward_enabled = num(key, value)?,
            "dynamic_rollout_enabled" => self.dynamic_rollout_enabled = num(key, value)?,
            "temperature" => self.temperature = num(key, value)?,
            "eval_temperature" => self.eval_temperature = num(key, value)?,
            "eval_top_p" => self.eval_top_p = num(key, value)?,
            _ => unreachable!("keys are validated against KEYS"),
        }
        Ok(())
    }
}

pub fn load_config(path: &Path) -> Result<TrainConfig> {
    let text = std::fs::read_to_string(path).map_err(HarnessError::io(path))?;
    TrainConfig::from_text(&text)
}

pub fn save_config(cfg: &TrainConfig, path: &Path) -> Result<()> {
    std::fs::write(path, cfg.to_text()).map_err(HarnessError::io(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_identity() {
        let cfg = TrainConfig {
            learning_rate: 0.0375,
            seed: 987654321,
            triggers: vec!["wait".into()],
            ..TrainConfig::default()
        };
        let parsed = TrainConfig::from_text(&cfg.to_text()).unwrap();
        assert_eq!(parsed, cfg);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = TrainConfig::from_text("deltaa = 0.5\n").unwrap_err();
        assert!(err.to_string().contains("deltaa"), "{err}");
    }

    #[test]
    fn out_of_range_value_rejected() {
        let err = TrainConfig::from_text("delta = 1.5\n").unwrap_err();
        assert!(err.to_string().contains("delta"), "{err}");
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn duplicate_key_rejected() {
        let err = TrainConfig::from_text("alpha = 0.1\nalpha = 0.2\n").unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn comments_and_blanks_ignored() {
        let cfg = TrainConfig::from_text("# comment\n\nalpha = 0.25\n").unwrap();
        assert_eq!(cfg.alpha, 0.25);
    }

    #[test]
    fn defaults_validate() {
        TrainConfig::default().validate().unwrap();
    }
}
