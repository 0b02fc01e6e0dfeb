//! Subcommand implementations.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bench::{compare, fit_power_law, run_experiment, Comparison, RegretTrace};
use crate::detect::{
    estimate_detection_metrics, conditional_bounds, detection_bounds, detection_constants, tuned_params,
    DetectionExperiment, DetectorKind, DetectorParams, ConditionalBounds,
};
use crate::env::{count_breakpoints, flipping_env, load_trace, switching_env, MeanSchedule};
use crate::policy::{make_policy, EnvInfo};
use crate::seeding::trial_seed;

use super::config::{echo_config, parse_config_text, preset, resolve, ConfigDraft, EnvConfig};
use super::{
    CliError, ConstantsArgs, DetectEvalArgs, ExperimentConfig, FitArgs, RunArgs,
    TraceValidateArgs,
};

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn build_schedule(cfg: &ExperimentConfig) -> Result<MeanSchedule, CliError> {
    match &cfg.env {
        EnvConfig::Flipping { horizon, delta } => {
            flipping_env(*horizon, *delta).map_err(|e| CliError::Validation(e.to_string()))
        }
        EnvConfig::Switching { num_arms, horizon, beta } => {
            let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(cfg.seed, "env", 0));
            switching_env(*num_arms, *horizon, *beta, &mut rng)
                .map_err(|e| CliError::Validation(e.to_string()))
        }
        EnvConfig::Trace { path, horizon } => load_trace(path, *horizon).map_err(|e| match e {
            crate::env::EnvError::Io(io) => CliError::Io(format!("{}: {io}", path.display())),
            other => CliError::Validation(other.to_string()),
        }),
    }
}

fn comparison_report(
    cfg: &ExperimentConfig,
    realized_gamma: usize,
    cmp: &Comparison,
    traces: &[RegretTrace],
) -> String {
    let mut out = String::new();
    for line in echo_config(cfg).lines() {
        let _ = writeln!(out, "# {line}");
    }
    let _ = writeln!(out, "horizon = {}", cmp.horizon);
    let _ = writeln!(out, "trials = {}", cfg.trials);
    let _ = writeln!(out, "seed = {}", cfg.seed);
    let _ = writeln!(out, "gamma_realized = {realized_gamma}");
    for (row, trace) in cmp.rows.iter().zip(traces) {
        let p = format!("policy.{}", row.label);
        let _ = writeln!(out, "{p}.final_regret = {}", row.final_mean_regret);
        let _ = writeln!(out, "{p}.fit_a = {}", row.fit.a);
        let _ = writeln!(out, "{p}.fit_b = {}", row.fit.b);
        let _ = writeln!(out, "{p}.fit_c = {}", row.fit.c);
        let _ = writeln!(out, "{p}.fit_residual = {}", row.fit.residual_norm);
        let _ = writeln!(out, "{p}.fit_degenerate = {}", row.fit.degenerate);
        let total_suboptimal: f64 = trace.mean_suboptimal_plays.iter().sum();
        let _ = writeln!(out, "{p}.suboptimal_plays = {total_suboptimal}");
    }
    for r in &cmp.ratios {
        let _ = writeln!(out, "ratio.{}/{} = {}", r.numerator, r.denominator, r.ratio);
    }
    out
}

fn trace_csv(trace: &RegretTrace) -> String {
    let mut out = String::with_capacity(trace.horizon * 24);
    out.push_str("t,mean_regret,se\n");
    for t in 0..trace.horizon {
        let _ = writeln!(out, "{},{},{}", t + 1, trace.mean[t], trace.se[t]);
    }
    out
}

/// Runs every configured policy against the environment, writing one trace
/// file per policy plus `summary.txt` and `config.resolved` into the output
/// directory. Deterministic bytes for fixed (config, seed), any `workers`.
pub fn cmd_run(cfg: &ExperimentConfig, workers: usize) -> Result<Comparison, CliError> {
    let schedule = build_schedule(cfg)?;
    let realized_gamma = count_breakpoints(&schedule, 0.0);
    let info = EnvInfo {
        num_arms: schedule.num_arms(),
        horizon: schedule.horizon(),
        gamma_hint: cfg.gamma.unwrap_or(realized_gamma).max(1) as f64,
    };
    for spec in &cfg.policies {
        make_policy(spec, &info).map_err(|e| CliError::Validation(e.to_string()))?;
    }
    fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| CliError::Io(format!("{}: {e}", cfg.out_dir.display())))?;
    let mut traces = Vec::new();
    for spec in &cfg.policies {
        let mut trace = run_experiment(&schedule, spec, &info, cfg.trials, cfg.seed, workers)
            .map_err(|e| CliError::Validation(e.to_string()))?;
        write_file(
            &cfg.out_dir.join(format!("{}_trace.csv", spec.kind)),
            &trace_csv(&trace),
        )?;
        // The comparison needs only the aggregate series; at preset scale
        // (T = 1e6, several policies) the per-trial series would otherwise
        // hold gigabytes across the loop.
        trace.trial_series = Vec::new();
        traces.push(trace);
    }
    let refs: Vec<&RegretTrace> = traces.iter().collect();
    let cmp = compare(&refs).map_err(|e| CliError::Validation(e.to_string()))?;
    write_file(&cfg.out_dir.join("config.resolved"), &echo_config(cfg))?;
    write_file(
        &cfg.out_dir.join("summary.txt"),
        &comparison_report(cfg, realized_gamma, &cmp, &traces),
    )?;
    Ok(cmp)
}

pub(super) fn run_command(args: RunArgs) -> Result<(), CliError> {
    let mut draft = ConfigDraft::default();
    if let Some(name) = &args.preset {
        draft = preset(name)
            .ok_or_else(|| CliError::Validation(format!("unknown preset `{name}`")))?;
    }
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        draft = draft.overlay(parse_config_text(&text)?);
    }
    let flags = ConfigDraft {
        env: args.env,
        horizon: args.horizon,
        num_arms: args.num_arms,
        delta: args.delta,
        beta: args.beta,
        trace: args.trace,
        trials: args.trials,
        seed: args.seed,
        gamma: args.gamma,
        out_dir: args.out,
        detector: super::config::DetectorDefaults {
            epsilon: args.eps,
            m: args.m,
            h: args.h,
            alpha: args.alpha,
            xi: args.xi,
        },
        policies: args
            .policies
            .map(|kinds| kinds.iter().map(|k| crate::policy::PolicySpec::new(k)).collect())
            .unwrap_or_default(),
    };
    let cfg = resolve(draft.overlay(flags))?;
    if args.dry_run {
        print!("{}", echo_config(&cfg));
        return Ok(());
    }
    let realized = {
        let cmp = cmd_run(&cfg, args.workers.max(1))?;
        println!("wrote {}", cfg.out_dir.display());
        println!("{:<12} {:>14} {:>10} {:>12}", "policy", "final_regret", "fit_b", "fit_resid");
        for row in &cmp.rows {
            println!(
                "{:<12} {:>14.4} {:>10.4} {:>12.4}",
                row.label, row.final_mean_regret, row.fit.b, row.fit.residual_norm
            );
        }
        cmp
    };
    drop(realized);
    Ok(())
}

/// Inputs for the detector evaluation table.
#[derive(Debug, Clone, Copy)]
pub struct DetectEvalParams {
    pub kind: DetectorKind,
    pub params: DetectorParams,
    pub pre: f64,
    pub post: f64,
    pub change_slot: usize,
    pub horizon: usize,
    pub trials: usize,
    pub seed: u64,
    pub lambda: Option<f64>,
    pub gamma: Option<usize>,
    pub num_arms: usize,
    pub pin_estimate: Option<f64>,
}

/// Runs the Monte-Carlo metrics and formats them beside the theoretical
/// bounds as `key = value` lines. Undefined lambda leaves bound lines
/// blank and adds a warning line.
pub fn cmd_detect_eval(p: &DetectEvalParams) -> Result<String, CliError> {
    let exp = DetectionExperiment {
        kind: p.kind,
        params: p.params,
        pre_mean: p.pre,
        post_mean: p.post,
        change_slot: p.change_slot,
        horizon: p.horizon,
        trials: p.trials,
        base_seed: p.seed,
        pinned_estimate: p.pin_estimate,
    };
    let metrics =
        estimate_detection_metrics(&exp).map_err(|e| CliError::Validation(e.to_string()))?;
    let mut out = String::new();
    let _ = writeln!(out, "detector = {}", p.kind.name());
    let _ = writeln!(out, "trials = {}", metrics.trials);
    let _ = writeln!(out, "empirical_mean_delay = {}", metrics.mean_delay);
    let _ = writeln!(out, "empirical_false_alarms = {}", metrics.mean_false_alarms);
    let _ = writeln!(out, "misses = {}", metrics.misses);
    let u0_hat = p.pin_estimate.unwrap_or(p.pre);
    match conditional_bounds(u0_hat, p.pre, p.post, p.params.epsilon, p.params.h, p.horizon) {
        Ok(ConditionalBounds::Conditional { delay_bound, false_alarm_bound, .. }) => {
            let _ = writeln!(out, "conditional_delay_bound = {delay_bound}");
            let _ = writeln!(out, "conditional_false_alarm_bound = {false_alarm_bound}");
        }
        Ok(ConditionalBounds::BadEstimate { restart_bound }) => {
            let _ = writeln!(out, "restart_bound = {restart_bound}");
        }
        Err(_) => {
            let _ = writeln!(out, "conditional_delay_bound =");
        }
    }
    match p.lambda {
        Some(lambda) => {
            let bounds = detection_bounds(
                p.params.epsilon,
                p.params.m,
                Some(lambda),
                p.params.h,
                p.horizon,
            )
            .map_err(|e| CliError::Validation(e.to_string()))?;
            let _ = writeln!(out, "lambda = {lambda}");
            let _ = writeln!(out, "delay_bound = {}", bounds.delay_bound);
            let _ = writeln!(out, "false_alarm_bound = {}", bounds.false_alarm_bound);
            if let Some(gamma) = p.gamma {
                let c = detection_constants(p.params.epsilon, p.params.m, Some(lambda))
                    .map_err(|e| CliError::Validation(e.to_string()))?;
                match tuned_params(p.horizon, gamma, p.num_arms, c.c1, c.c2) {
                    Ok(t) => {
                        let _ = writeln!(out, "tuned_h = {}", t.h);
                        let _ = writeln!(out, "tuned_alpha = {}", t.alpha);
                        let _ = writeln!(out, "tuned_alpha_raw = {}", t.alpha_raw);
                        let _ = writeln!(out, "tuned_alpha_clamped = {}", t.clamped);
                    }
                    Err(e) => {
                        let _ = writeln!(out, "tuned_error = {e}");
                    }
                }
            }
        }
        None => {
            let _ = writeln!(out, "lambda = undefined");
            let _ = writeln!(out, "delay_bound =");
            let _ = writeln!(out, "false_alarm_bound =");
        }
    }
    Ok(out)
}

pub(super) fn detect_eval_command(args: DetectEvalArgs) -> Result<(), CliError> {
    let kind = match args.detector.as_str() {
        "cusum" => DetectorKind::Cusum,
        "pht" => DetectorKind::Pht,
        other => {
            return Err(CliError::Validation(format!(
                "unknown detector `{other}` (expected cusum or pht)"
            )))
        }
    };
    let params = DetectorParams::new(args.eps, args.m, args.h)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let p = DetectEvalParams {
        kind,
        params,
        pre: args.pre,
        post: args.post,
        change_slot: args.change_slot,
        horizon: args.horizon,
        trials: args.trials,
        seed: args.seed,
        lambda: args.lambda,
        gamma: args.gamma,
        num_arms: args.num_arms,
        pin_estimate: args.pin_estimate,
    };
    let report = cmd_detect_eval(&p)?;
    print!("{report}");
    if p.lambda.is_none() {
        eprintln!("warning: lambda undefined; theoretical bound lines left blank");
    }
    Ok(())
}

pub(super) fn constants_command(args: ConstantsArgs) -> Result<(), CliError> {
    let c = detection_constants(args.eps, args.m, Some(args.lambda))
        .map_err(|e| CliError::Validation(e.to_string()))?;
    println!("c1_minus = {}", c.c1_minus);
    println!("c1_plus = {}", c.c1_plus);
    println!("c1 = {}", c.c1);
    println!("ln_c1_minus = {}", c.ln_c1_minus);
    println!("ln_c1_plus = {}", c.ln_c1_plus);
    println!("ln_c1 = {}", c.ln_c1);
    println!("c2 = {}", c.c2);
    if let (Some(horizon), Some(h)) = (args.horizon, args.h) {
        let b = detection_bounds(args.eps, args.m, Some(args.lambda), h, horizon)
            .map_err(|e| CliError::Validation(e.to_string()))?;
        println!("delay_bound = {}", b.delay_bound);
        println!("false_alarm_bound = {}", b.false_alarm_bound);
    }
    if let (Some(horizon), Some(gamma), Some(k)) = (args.horizon, args.gamma, args.num_arms) {
        let t = tuned_params(horizon, gamma, k, c.c1, c.c2)
            .map_err(|e| CliError::Validation(e.to_string()))?;
        println!("tuned_h = {}", t.h);
        println!("tuned_alpha = {}", t.alpha);
        println!("tuned_alpha_raw = {}", t.alpha_raw);
        println!("tuned_alpha_clamped = {}", t.clamped);
    }
    Ok(())
}

pub(super) fn fit_command(args: FitArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.input)
        .map_err(|e| CliError::Io(format!("{}: {e}", args.input.display())))?;
    let mut series = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let cells: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        let Some(cell) = cells.get(args.column) else {
            return Err(CliError::Validation(format!(
                "line {}: no column {}",
                idx + 1,
                args.column
            )));
        };
        match cell.parse::<f64>() {
            Ok(v) => series.push(v),
            Err(_) if idx == 0 => continue, // header row
            Err(_) => {
                return Err(CliError::Validation(format!(
                    "line {}: `{cell}` is not a number",
                    idx + 1
                )))
            }
        }
    }
    let fit = fit_power_law(&series).map_err(|e| CliError::Validation(e.to_string()))?;
    println!("points = {}", series.len());
    println!("a = {}", fit.a);
    println!("b = {}", fit.b);
    println!("c = {}", fit.c);
    println!("residual_norm = {}", fit.residual_norm);
    println!("converged = {}", fit.converged);
    println!("degenerate = {}", fit.degenerate);
    Ok(())
}

pub(super) fn trace_validate_command(args: TraceValidateArgs) -> Result<(), CliError> {
    let schedule = load_trace(&args.input, args.horizon).map_err(|e| match e {
        crate::env::EnvError::Io(io) => CliError::Io(format!("{}: {io}", args.input.display())),
        other => CliError::Validation(other.to_string()),
    })?;
    println!("ok = true");
    println!("K = {}", schedule.num_arms());
    println!("T = {}", schedule.horizon());
    println!("bins = {}", schedule.segments().len());
    println!("threshold = {}", args.threshold);
    println!("breakpoints = {}", count_breakpoints(&schedule, args.threshold));
    Ok(())
}
