//! Experiment configuration: parse, merge, validate, echo.
//!
//! Resolution pipeline: preset draft, then config-file draft, then flag
//! overrides, merged field-by-field (later wins); `resolve` validates the
//! merged draft, reporting every violation at once, and fills per-policy
//! detector parameters from the top-level defaults.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::policy::{make_policy, EnvInfo, PolicySpec, POLICY_KINDS};

use super::CliError;

/// Top-level detector parameter defaults, applied to any policy section
/// that leaves them unset.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectorDefaults {
    pub epsilon: Option<f64>,
    pub m: Option<u32>,
    pub h: Option<f64>,
    pub alpha: Option<f64>,
    pub xi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnvConfig {
    Flipping { horizon: usize, delta: f64 },
    Switching { num_arms: usize, horizon: usize, beta: f64 },
    Trace { path: PathBuf, horizon: usize },
}

impl EnvConfig {
    pub fn horizon(&self) -> usize {
        match self {
            EnvConfig::Flipping { horizon, .. }
            | EnvConfig::Switching { horizon, .. }
            | EnvConfig::Trace { horizon, .. } => *horizon,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            EnvConfig::Flipping { .. } => "flipping",
            EnvConfig::Switching { .. } => "switching",
            EnvConfig::Trace { .. } => "trace",
        }
    }
}

/// Fully resolved experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    pub trials: usize,
    pub seed: u64,
    /// Breakpoint count used for baseline tuning; `None` means use the
    /// realized count from the constructed schedule.
    pub gamma: Option<usize>,
    pub out_dir: PathBuf,
    pub detector: DetectorDefaults,
    pub policies: Vec<PolicySpec>,
}

/// Pre-validation accumulation of fields from presets, files, and flags.
#[derive(Debug, Clone, Default)]
pub struct ConfigDraft {
    pub env: Option<String>,
    pub horizon: Option<usize>,
    pub num_arms: Option<usize>,
    pub delta: Option<f64>,
    pub beta: Option<f64>,
    pub trace: Option<PathBuf>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub gamma: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub detector: DetectorDefaults,
    pub policies: Vec<PolicySpec>,
}

impl ConfigDraft {
    /// Field-by-field overlay: values set in `other` win; a nonempty
    /// policy list in `other` replaces the current list.
    pub fn overlay(mut self, other: ConfigDraft) -> ConfigDraft {
        macro_rules! take {
            ($f:ident) => {
                if other.$f.is_some() {
                    self.$f = other.$f;
                }
            };
        }
        take!(env);
        take!(horizon);
        take!(num_arms);
        take!(delta);
        take!(beta);
        take!(trace);
        take!(trials);
        take!(seed);
        take!(gamma);
        take!(out_dir);
        macro_rules! take_det {
            ($f:ident) => {
                if other.detector.$f.is_some() {
                    self.detector.$f = other.detector.$f;
                }
            };
        }
        take_det!(epsilon);
        take_det!(m);
        take_det!(h);
        take_det!(alpha);
        take_det!(xi);
        if !other.policies.is_empty() {
            self.policies = other.policies;
        }
        self
    }
}

/// Named benchmark presets (environment plus detector parameters).
pub fn preset(name: &str) -> Option<ConfigDraft> {
    let mut draft = ConfigDraft::default();
    match name {
        "flipping" => {
            draft.env = Some("flipping".into());
            draft.horizon = Some(100_000);
            draft.delta = Some(0.1);
            draft.gamma = Some(2);
            draft.detector = DetectorDefaults {
                epsilon: Some(0.1),
                m: Some(100),
                h: Some(50.0),
                alpha: Some(0.001),
                xi: Some(1.0),
            };
        }
        "switching" => {
            draft.env = Some("switching".into());
            draft.num_arms = Some(5);
            draft.horizon = Some(1_000_000);
            draft.beta = Some(1e-5);
            draft.gamma = Some(10);
            draft.detector = DetectorDefaults {
                epsilon: Some(0.1),
                m: Some(100),
                h: Some(20.0),
                alpha: Some(0.01),
                xi: Some(1.0),
            };
        }
        "trace" => {
            draft.env = Some("trace".into());
            draft.detector = DetectorDefaults {
                epsilon: Some(0.005),
                m: Some(100),
                h: Some(200.0),
                alpha: Some(0.024),
                xi: Some(1.0),
            };
        }
        _ => return None,
    }
    draft.policies = vec![PolicySpec::new("cusum-ucb")];
    Some(draft)
}

fn parse_value<T: std::str::FromStr>(
    key: &str,
    value: &str,
    line: usize,
    violations: &mut Vec<String>,
) -> Option<T> {
    match value.parse() {
        Ok(v) => Some(v),
        Err(_) => {
            violations.push(format!("line {line}: value `{value}` invalid for key `{key}`"));
            None
        }
    }
}

/// Parses config text. Collects every violation instead of stopping at
/// the first.
pub fn parse_config_text(text: &str) -> Result<ConfigDraft, CliError> {
    let mut draft = ConfigDraft::default();
    let mut violations = Vec::new();
    let mut current_policy: Option<PolicySpec> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let stripped = raw.split('#').next().unwrap_or("").trim();
        if stripped.is_empty() {
            continue;
        }
        if stripped == "[policy]" {
            if let Some(p) = current_policy.take() {
                draft.policies.push(p);
            }
            current_policy = Some(PolicySpec::default());
            continue;
        }
        let Some((key, value)) = stripped.split_once('=') else {
            violations.push(format!("line {line}: expected `key = value`, got `{stripped}`"));
            continue;
        };
        let key = key.trim();
        let value = value.trim();
        if let Some(policy) = current_policy.as_mut() {
            match key {
                "kind" => policy.kind = value.to_string(),
                "eps" => policy.epsilon = parse_value(key, value, line, &mut violations),
                "M" => policy.m = parse_value(key, value, line, &mut violations),
                "h" => policy.h = parse_value(key, value, line, &mut violations),
                "alpha" => policy.alpha = parse_value(key, value, line, &mut violations),
                "xi" => policy.xi = parse_value(key, value, line, &mut violations),
                "discount" => policy.discount = parse_value(key, value, line, &mut violations),
                "scale" => policy.padding_scale = parse_value(key, value, line, &mut violations),
                "window" => policy.window = parse_value(key, value, line, &mut violations),
                "eta" => policy.learning_rate = parse_value(key, value, line, &mut violations),
                "mixing" => policy.mixing = parse_value(key, value, line, &mut violations),
                "batch" => policy.batch = parse_value(key, value, line, &mut violations),
                "vt" => {
                    policy.variation_budget = parse_value(key, value, line, &mut violations)
                }
                "interval" => policy.interval = parse_value(key, value, line, &mut violations),
                "delta_conf" => {
                    policy.confidence = parse_value(key, value, line, &mut violations)
                }
                _ => violations.push(format!("line {line}: unknown policy key `{key}`")),
            }
        } else {
            match key {
                "env" => draft.env = Some(value.to_string()),
                "T" => draft.horizon = parse_value(key, value, line, &mut violations),
                "K" => draft.num_arms = parse_value(key, value, line, &mut violations),
                "delta" => draft.delta = parse_value(key, value, line, &mut violations),
                "beta" => draft.beta = parse_value(key, value, line, &mut violations),
                "trace" => draft.trace = Some(PathBuf::from(value)),
                "trials" => draft.trials = parse_value(key, value, line, &mut violations),
                "seed" => draft.seed = parse_value(key, value, line, &mut violations),
                "gamma" => draft.gamma = parse_value(key, value, line, &mut violations),
                "out" => draft.out_dir = Some(PathBuf::from(value)),
                "eps" => draft.detector.epsilon = parse_value(key, value, line, &mut violations),
                "M" => draft.detector.m = parse_value(key, value, line, &mut violations),
                "h" => draft.detector.h = parse_value(key, value, line, &mut violations),
                "alpha" => draft.detector.alpha = parse_value(key, value, line, &mut violations),
                "xi" => draft.detector.xi = parse_value(key, value, line, &mut violations),
                _ => violations.push(format!("line {line}: unknown key `{key}`")),
            }
        }
    }
    if let Some(p) = current_policy.take() {
        draft.policies.push(p);
    }
    for (i, p) in draft.policies.iter().enumerate() {
        if p.kind.is_empty() {
            violations.push(format!("policy section {} is missing `kind`", i + 1));
        }
    }
    if violations.is_empty() {
        Ok(draft)
    } else {
        Err(CliError::Validation(violations.join("; ")))
    }
}

fn default_out_dir() -> PathBuf {
    std::env::var_os("CDBANDIT_OUT").map_or_else(|| PathBuf::from("cdbandit-out"), PathBuf::from)
}

/// Validates the merged draft into an [`ExperimentConfig`], listing every
/// violation in one error.
pub fn resolve(draft: ConfigDraft) -> Result<ExperimentConfig, CliError> {
    let mut violations = Vec::new();
    let env = match draft.env.as_deref() {
        Some("flipping") => {
            let horizon = draft.horizon.unwrap_or(0);
            if horizon < 3 {
                violations.push(format!("flipping needs T >= 3, got {horizon}"));
            }
            let delta = draft.delta.unwrap_or_else(|| {
                violations.push("flipping needs `delta`".into());
                f64::NAN
            });
            if !(delta > 0.0 && delta < 0.5) {
                violations.push(format!("delta must lie in (0, 0.5), got {delta}"));
            }
            Some(EnvConfig::Flipping { horizon, delta })
        }
        Some("switching") => {
            let horizon = draft.horizon.unwrap_or(0);
            if horizon == 0 {
                violations.push("switching needs T >= 1".into());
            }
            let num_arms = draft.num_arms.unwrap_or(0);
            if num_arms == 0 {
                violations.push("switching needs K >= 1".into());
            }
            let beta = draft.beta.unwrap_or_else(|| {
                violations.push("switching needs `beta`".into());
                f64::NAN
            });
            if !(0.0..=1.0).contains(&beta) {
                violations.push(format!("beta must lie in [0, 1], got {beta}"));
            }
            Some(EnvConfig::Switching { num_arms, horizon, beta })
        }
        Some("trace") => {
            let horizon = draft.horizon.unwrap_or(0);
            if horizon == 0 {
                violations.push("trace needs T >= 1".into());
            }
            match draft.trace.clone() {
                Some(path) => Some(EnvConfig::Trace { path, horizon }),
                None => {
                    violations.push("trace environment needs `trace = <path>`".into());
                    None
                }
            }
        }
        Some(other) => {
            violations.push(format!(
                "unknown env `{other}` (expected flipping, switching, or trace)"
            ));
            None
        }
        None => {
            violations.push("missing `env` (flipping, switching, or trace)".into());
            None
        }
    };
    let trials = draft.trials.unwrap_or(100);
    if trials == 0 {
        violations.push("trials must be >= 1".into());
    }
    let mut policies = draft.policies.clone();
    if policies.is_empty() {
        violations.push("at least one policy required".into());
    }
    for p in policies.iter_mut() {
        if p.epsilon.is_none() {
            p.epsilon = draft.detector.epsilon;
        }
        if p.m.is_none() {
            p.m = draft.detector.m;
        }
        if p.h.is_none() {
            p.h = draft.detector.h;
        }
        if p.alpha.is_none() {
            p.alpha = draft.detector.alpha;
        }
        if p.xi.is_none() {
            p.xi = draft.detector.xi;
        }
    }
    {
        let mut seen = std::collections::HashSet::new();
        for p in &policies {
            if !seen.insert(p.kind.clone()) {
                violations.push(format!("duplicate policy kind `{}`", p.kind));
            }
        }
    }
    // Probe each policy build so parameter problems surface here, together.
    let probe_info = EnvInfo {
        num_arms: match &env {
            Some(EnvConfig::Flipping { .. }) => 2,
            Some(EnvConfig::Switching { num_arms, .. }) => (*num_arms).max(1),
            _ => 2,
        },
        horizon: draft.horizon.unwrap_or(1000).max(3),
        gamma_hint: draft.gamma.unwrap_or(1).max(1) as f64,
    };
    for p in &policies {
        if !POLICY_KINDS.contains(&p.kind.as_str()) {
            violations.push(format!("unknown policy kind `{}`", p.kind));
            continue;
        }
        if let Err(e) = make_policy(p, &probe_info) {
            violations.push(e.to_string());
        }
    }
    if !violations.is_empty() {
        return Err(CliError::Validation(violations.join("; ")));
    }
    Ok(ExperimentConfig {
        env: env.expect("validated"),
        trials,
        seed: draft.seed.unwrap_or(0),
        gamma: draft.gamma,
        out_dir: draft.out_dir.unwrap_or_else(default_out_dir),
        detector: draft.detector,
        policies,
    })
}

fn push_kv<T: std::fmt::Display>(out: &mut String, key: &str, value: T) {
    let _ = writeln!(out, "{key} = {value}");
}

fn push_opt<T: std::fmt::Display>(out: &mut String, key: &str, value: &Option<T>) {
    if let Some(v) = value {
        let _ = writeln!(out, "{key} = {v}");
    }
}

/// Renders the resolved config in the input format (round-trip closure:
/// parsing and resolving the echo reproduces the config).
pub fn echo_config(cfg: &ExperimentConfig) -> String {
    let mut out = String::new();
    match &cfg.env {
        EnvConfig::Flipping { horizon, delta } => {
            push_kv(&mut out, "env", "flipping");
            push_kv(&mut out, "T", horizon);
            push_kv(&mut out, "delta", delta);
        }
        EnvConfig::Switching { num_arms, horizon, beta } => {
            push_kv(&mut out, "env", "switching");
            push_kv(&mut out, "T", horizon);
            push_kv(&mut out, "K", num_arms);
            push_kv(&mut out, "beta", beta);
        }
        EnvConfig::Trace { path, horizon } => {
            push_kv(&mut out, "env", "trace");
            push_kv(&mut out, "T", horizon);
            push_kv(&mut out, "trace", path.display());
        }
    }
    push_kv(&mut out, "trials", cfg.trials);
    push_kv(&mut out, "seed", cfg.seed);
    push_opt(&mut out, "gamma", &cfg.gamma);
    push_kv(&mut out, "out", cfg.out_dir.display());
    push_opt(&mut out, "eps", &cfg.detector.epsilon);
    push_opt(&mut out, "M", &cfg.detector.m);
    push_opt(&mut out, "h", &cfg.detector.h);
    push_opt(&mut out, "alpha", &cfg.detector.alpha);
    push_opt(&mut out, "xi", &cfg.detector.xi);
    for p in &cfg.policies {
        out.push_str("\n[policy]\n");
        push_kv(&mut out, "kind", &p.kind);
        push_opt(&mut out, "eps", &p.epsilon);
        push_opt(&mut out, "M", &p.m);
        push_opt(&mut out, "h", &p.h);
        push_opt(&mut out, "alpha", &p.alpha);
        push_opt(&mut out, "xi", &p.xi);
        push_opt(&mut out, "discount", &p.discount);
        push_opt(&mut out, "scale", &p.padding_scale);
        push_opt(&mut out, "window", &p.window);
        push_opt(&mut out, "eta", &p.learning_rate);
        push_opt(&mut out, "mixing", &p.mixing);
        push_opt(&mut out, "batch", &p.batch);
        push_opt(&mut out, "vt", &p.variation_budget);
        push_opt(&mut out, "interval", &p.interval);
        push_opt(&mut out, "delta_conf", &p.confidence);
    }
    out
}
