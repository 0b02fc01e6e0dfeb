//! Experiment execution: seeded multi-trial rollouts and regret accounting.
//!
//! A trial rolls a fresh policy against a schedule for `t = 1..=T`,
//! accumulating per-slot pseudo-regret `best_mean(t) - mean(t, chosen)`
//! (ground-truth means, not realized rewards) and the count of plays on
//! strictly suboptimal arms. Trials are embarrassingly parallel; each draws
//! its ChaCha8 stream from `trial_seed(base_seed, label, trial)` and the
//! reduction to mean/SE runs in trial-index order with compensated
//! summation, so results are bitwise identical for any worker count.

mod fit;

pub use fit::{fit_power_law, FitResult};

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::env::{bernoulli, EnvError, MeanSchedule};
use crate::policy::{make_policy, EnvInfo, Policy, PolicySpec};
use crate::seeding::trial_seed;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("policy expects {policy_arms} arms but schedule has {schedule_arms}")]
    ArmMismatch { policy_arms: usize, schedule_arms: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("traces have mismatched horizons: {0} vs {1}")]
    HorizonMismatch(usize, usize),
    #[error("curve fit needs at least 8 points, got {0}")]
    SeriesTooShort(usize),
    #[error("series contains a non-finite value at index {0}")]
    NonFiniteValue(usize),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// Neumaier compensated summation; used wherever a reduction order is
/// part of the determinism contract.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Cumulative pseudo-regret across trials, with trial-averaged series.
#[derive(Debug, Clone)]
pub struct RegretTrace {
    pub label: String,
    pub horizon: usize,
    pub trials: usize,
    /// Per-trial cumulative series, each of length `horizon`.
    pub trial_series: Vec<Vec<f64>>,
    /// Pointwise trial mean (ordered compensated reduction).
    pub mean: Vec<f64>,
    /// Pointwise standard error of the mean; zeros when `trials == 1`.
    pub se: Vec<f64>,
    /// Mean count of plays on strictly suboptimal arms, per arm.
    pub mean_suboptimal_plays: Vec<f64>,
}

impl RegretTrace {
    pub fn final_mean_regret(&self) -> f64 {
        *self.mean.last().expect("nonempty series")
    }
}

/// Pseudo-regret of playing `chosen` at slot `t`: zero exactly when the
/// chosen arm's mean attains the slot maximum.
pub fn pseudo_regret_increment(
    schedule: &MeanSchedule,
    t: usize,
    chosen: usize,
) -> Result<f64, BenchError> {
    let mean = schedule.mean_at(t, chosen)?;
    let best = schedule.best_mean(t)?;
    Ok(best - mean)
}

struct TrialOutput {
    series: Vec<f64>,
    suboptimal_plays: Vec<u64>,
}

fn run_trial(
    schedule: &MeanSchedule,
    policy: &mut dyn Policy,
    seed: u64,
) -> TrialOutput {
    let horizon = schedule.horizon();
    let num_arms = schedule.num_arms();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cursor = schedule.cursor();
    let mut series = Vec::with_capacity(horizon);
    let mut suboptimal_plays = vec![0u64; num_arms];
    let mut cumulative = KahanSum::default();
    for t in 1..=horizon {
        let arm = policy.select(&mut rng);
        debug_assert!(arm < num_arms);
        let means = cursor.means_at(t);
        let mean = means[arm];
        let best = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let reward = bernoulli(mean, &mut rng);
        policy.update(arm, reward);
        cumulative.add(best - mean);
        series.push(cumulative.value());
        if mean != best {
            suboptimal_plays[arm] += 1;
        }
    }
    TrialOutput { series, suboptimal_plays }
}

/// Rolls `trials` independent trials of the policy produced by `factory`
/// and reduces them into a [`RegretTrace`]. `workers` caps the thread
/// count; the output does not depend on it.
pub fn run_experiment_with<'a, F>(
    schedule: &MeanSchedule,
    label: &str,
    factory: F,
    trials: usize,
    base_seed: u64,
    workers: usize,
) -> Result<RegretTrace, BenchError>
where
    F: Fn() -> Box<dyn Policy + 'a> + Sync,
{
    if trials == 0 {
        return Err(BenchError::InvalidParameter("trials must be >= 1".into()));
    }
    let probe = factory();
    if probe.num_arms() != schedule.num_arms() {
        return Err(BenchError::ArmMismatch {
            policy_arms: probe.num_arms(),
            schedule_arms: schedule.num_arms(),
        });
    }
    drop(probe);

    let workers = workers.max(1).min(trials);
    let mut outputs: Vec<Option<TrialOutput>> = Vec::with_capacity(trials);
    outputs.resize_with(trials, || None);
    if workers == 1 {
        for (trial, slot) in outputs.iter_mut().enumerate() {
            let mut policy = factory();
            let seed = trial_seed(base_seed, label, trial as u64);
            *slot = Some(run_trial(schedule, policy.as_mut(), seed));
        }
    } else {
        let next = AtomicUsize::new(0);
        let shared = Mutex::new(&mut outputs);
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let trial = next.fetch_add(1, Ordering::Relaxed);
                    if trial >= trials {
                        break;
                    }
                    let mut policy = factory();
                    let seed = trial_seed(base_seed, label, trial as u64);
                    let out = run_trial(schedule, policy.as_mut(), seed);
                    shared.lock().expect("poisoned")[trial] = Some(out);
                });
            }
        });
    }
    let outputs: Vec<TrialOutput> =
        outputs.into_iter().map(|o| o.expect("trial completed")).collect();

    let horizon = schedule.horizon();
    let num_arms = schedule.num_arms();
    let trials_f = trials as f64;
    let mut mean = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let mut acc = KahanSum::default();
        for out in &outputs {
            acc.add(out.series[t]);
        }
        mean.push(acc.value() / trials_f);
    }
    let mut se = vec![0.0; horizon];
    if trials > 1 {
        for (t, se_t) in se.iter_mut().enumerate() {
            let mut acc = KahanSum::default();
            for out in &outputs {
                let d = out.series[t] - mean[t];
                acc.add(d * d);
            }
            *se_t = (acc.value() / (trials_f * (trials_f - 1.0))).sqrt();
        }
    }
    let mut mean_suboptimal_plays = Vec::with_capacity(num_arms);
    for arm in 0..num_arms {
        let mut acc = KahanSum::default();
        for out in &outputs {
            acc.add(out.suboptimal_plays[arm] as f64);
        }
        mean_suboptimal_plays.push(acc.value() / trials_f);
    }
    Ok(RegretTrace {
        label: label.to_string(),
        horizon,
        trials,
        trial_series: outputs.into_iter().map(|o| o.series).collect(),
        mean,
        se,
        mean_suboptimal_plays,
    })
}

/// Rolls a policy described by `spec` against the schedule; the trace is
/// labeled with the policy kind.
pub fn run_experiment(
    schedule: &MeanSchedule,
    spec: &PolicySpec,
    info: &EnvInfo,
    trials: usize,
    base_seed: u64,
    workers: usize,
) -> Result<RegretTrace, BenchError> {
    make_policy(spec, info).map_err(|e| BenchError::InvalidParameter(e.to_string()))?;
    run_experiment_with(
        schedule,
        &spec.kind,
        || make_policy(spec, info).expect("validated above"),
        trials,
        base_seed,
        workers,
    )
}

/// One comparison row: final regret plus the fitted power-law curve.
#[derive(Debug, Clone)]
pub struct ComparisonRow {
    pub label: String,
    pub final_mean_regret: f64,
    pub fit: FitResult,
}

/// Pairwise final-regret ratio between two traces.
#[derive(Debug, Clone)]
pub struct RatioEntry {
    pub numerator: String,
    pub denominator: String,
    pub ratio: f64,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub horizon: usize,
    pub rows: Vec<ComparisonRow>,
    pub ratios: Vec<RatioEntry>,
}

/// Final regrets, fitted exponents, and pairwise ratios for a set of
/// traces sharing one horizon.
pub fn compare(traces: &[&RegretTrace]) -> Result<Comparison, BenchError> {
    let Some(first) = traces.first() else {
        return Err(BenchError::InvalidParameter("at least one trace required".into()));
    };
    let horizon = first.horizon;
    for t in traces.iter().skip(1) {
        if t.horizon != horizon {
            return Err(BenchError::HorizonMismatch(horizon, t.horizon));
        }
    }
    let mut rows = Vec::with_capacity(traces.len());
    for t in traces {
        rows.push(ComparisonRow {
            label: t.label.clone(),
            final_mean_regret: t.final_mean_regret(),
            fit: fit_power_law(&t.mean)?,
        });
    }
    let mut ratios = Vec::new();
    for i in 0..traces.len() {
        for j in (i + 1)..traces.len() {
            ratios.push(RatioEntry {
                numerator: traces[i].label.clone(),
                denominator: traces[j].label.clone(),
                ratio: traces[i].final_mean_regret() / traces[j].final_mean_regret(),
            });
        }
    }
    Ok(Comparison { horizon, rows, ratios })
}
