//! Piecewise-stationary Bernoulli reward environments.
//!
//! A [`MeanSchedule`] assigns every (slot, arm) pair an expected reward in
//! `[0, 1]` through an ordered list of piecewise-constant segments. Slots
//! are 1-indexed (`1..=T`); arms are 0-indexed. Schedules are immutable
//! after construction and safe to share across workers; sampling takes an
//! externally supplied random stream.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::RngCore;
use thiserror::Error;

/// Errors from schedule construction, lookup, and trace I/O.
#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("segment {index}: {reason}")]
    InvalidSegment { index: usize, reason: String },
    #[error("slot {t} out of range 1..={horizon}")]
    SlotOutOfRange { t: usize, horizon: usize },
    #[error("arm {arm} out of range 0..{num_arms}")]
    ArmOutOfRange { arm: usize, num_arms: usize },
    #[error("line {line}: {reason}")]
    TraceParse { line: usize, reason: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One stationary stretch: `means[i]` holds from `start` (inclusive) to the
/// next segment's start (exclusive), the last segment running to the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start: usize,
    pub means: Vec<f64>,
}

/// Ground-truth expected reward per arm per slot, piecewise constant.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanSchedule {
    num_arms: usize,
    horizon: usize,
    segments: Vec<Segment>,
}

impl MeanSchedule {
    pub fn num_arms(&self) -> usize {
        self.num_arms
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Expected reward of `arm` at slot `t` (1-indexed). Total on the
    /// domain `1..=T` x `0..K`.
    pub fn mean_at(&self, t: usize, arm: usize) -> Result<f64, EnvError> {
        self.check_slot(t)?;
        if arm >= self.num_arms {
            return Err(EnvError::ArmOutOfRange { arm, num_arms: self.num_arms });
        }
        Ok(self.segments[self.segment_index(t)].means[arm])
    }

    /// Index of the segment covering slot `t` (binary search on starts).
    fn segment_index(&self, t: usize) -> usize {
        match self.segments.binary_search_by(|s| s.start.cmp(&t)) {
            Ok(i) => i,
            Err(i) => i - 1,
        }
    }

    fn check_slot(&self, t: usize) -> Result<(), EnvError> {
        if t < 1 || t > self.horizon {
            return Err(EnvError::SlotOutOfRange { t, horizon: self.horizon });
        }
        Ok(())
    }

    /// Highest expected reward at slot `t`.
    pub fn best_mean(&self, t: usize) -> Result<f64, EnvError> {
        self.check_slot(t)?;
        let means = &self.segments[self.segment_index(t)].means;
        Ok(means.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    }

    /// Sequential O(1)-per-slot access for rollout loops.
    pub fn cursor(&self) -> ScheduleCursor<'_> {
        ScheduleCursor { schedule: self, seg: 0 }
    }
}

/// Forward-moving view over a schedule; `means_at` must be called with
/// nondecreasing `t`.
pub struct ScheduleCursor<'a> {
    schedule: &'a MeanSchedule,
    seg: usize,
}

impl<'a> ScheduleCursor<'a> {
    pub fn means_at(&mut self, t: usize) -> &'a [f64] {
        let segs = self.schedule.segments();
        while self.seg + 1 < segs.len() && segs[self.seg + 1].start <= t {
            self.seg += 1;
        }
        &segs[self.seg].means
    }
}

/// Validated constructor over explicit segments.
///
/// Requirements: first start is slot 1, starts strictly increasing and
/// within `1..=T`, every segment has `K` means, every mean in `[0, 1]`.
pub fn from_segments(
    num_arms: usize,
    horizon: usize,
    segments: Vec<Segment>,
) -> Result<MeanSchedule, EnvError> {
    if num_arms == 0 {
        return Err(EnvError::InvalidParameter("K must be >= 1".into()));
    }
    if horizon == 0 {
        return Err(EnvError::InvalidParameter("T must be >= 1".into()));
    }
    if segments.is_empty() {
        return Err(EnvError::InvalidParameter("at least one segment required".into()));
    }
    for (index, seg) in segments.iter().enumerate() {
        if index == 0 && seg.start != 1 {
            return Err(EnvError::InvalidSegment {
                index,
                reason: format!("first segment must start at slot 1, got {}", seg.start),
            });
        }
        if index > 0 && seg.start <= segments[index - 1].start {
            return Err(EnvError::InvalidSegment {
                index,
                reason: format!(
                    "segment starts must be strictly increasing ({} after {})",
                    seg.start,
                    segments[index - 1].start
                ),
            });
        }
        if seg.start > horizon {
            return Err(EnvError::InvalidSegment {
                index,
                reason: format!("start {} exceeds horizon {horizon}", seg.start),
            });
        }
        if seg.means.len() != num_arms {
            return Err(EnvError::InvalidSegment {
                index,
                reason: format!("expected {num_arms} means, got {}", seg.means.len()),
            });
        }
        for (arm, &m) in seg.means.iter().enumerate() {
            if !(0.0..=1.0).contains(&m) || m.is_nan() {
                return Err(EnvError::InvalidSegment {
                    index,
                    reason: format!("mean {m} for arm {arm} outside [0, 1]"),
                });
            }
        }
    }
    Ok(MeanSchedule { num_arms, horizon, segments })
}

/// Two-arm flipping environment: arm 0 stays at 0.5, arm 1 flips from 0.8
/// down to `0.5 - delta` over the middle third of the horizon and back.
///
/// The changed window is `max(2, ceil(T/3)) <= t <= floor(2T/3)`, which
/// reproduces the `T/3 <= t <= 2T/3` window at multiples of 3 and keeps
/// exactly two breakpoints for every `T >= 3`.
pub fn flipping_env(horizon: usize, delta: f64) -> Result<MeanSchedule, EnvError> {
    if horizon < 3 {
        return Err(EnvError::InvalidParameter(format!("T must be >= 3, got {horizon}")));
    }
    if !(delta > 0.0 && delta < 0.5) {
        return Err(EnvError::InvalidParameter(format!(
            "delta must lie in (0, 0.5), got {delta}"
        )));
    }
    let lo = (horizon.div_ceil(3)).max(2);
    let hi = 2 * horizon / 3;
    let outside = vec![0.5, 0.8];
    let inside = vec![0.5, 0.5 - delta];
    let mut segments = vec![Segment { start: 1, means: outside.clone() }];
    segments.push(Segment { start: lo, means: inside });
    if hi < horizon {
        segments.push(Segment { start: hi + 1, means: outside });
    }
    from_segments(2, horizon, segments)
}

/// Hazard-driven switching environment: each arm's mean starts uniform on
/// `[0, 1]` and is independently redrawn each slot with probability `beta`.
///
/// The draw order is fixed (slot-major, then arm-major), so a given
/// `(K, T, beta, seed)` produces the same schedule on every platform.
pub fn switching_env(
    num_arms: usize,
    horizon: usize,
    beta: f64,
    rng: &mut dyn RngCore,
) -> Result<MeanSchedule, EnvError> {
    if num_arms == 0 {
        return Err(EnvError::InvalidParameter("K must be >= 1".into()));
    }
    if horizon == 0 {
        return Err(EnvError::InvalidParameter("T must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(EnvError::InvalidParameter(format!(
            "hazard beta must lie in [0, 1], got {beta}"
        )));
    }
    let mut current: Vec<f64> = (0..num_arms).map(|_| uniform01(rng)).collect();
    let mut segments = vec![Segment { start: 1, means: current.clone() }];
    for t in 2..=horizon {
        let mut changed = false;
        for mean in current.iter_mut() {
            if uniform01(rng) < beta {
                *mean = uniform01(rng);
                changed = true;
            }
        }
        if changed {
            segments.push(Segment { start: t, means: current.clone() });
        }
    }
    from_segments(num_arms, horizon, segments)
}

fn uniform01(rng: &mut dyn RngCore) -> f64 {
    // 53 random bits scaled into [0, 1); identical on every platform.
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// One Bernoulli draw with success probability `mean_at(t, arm)`.
pub fn sample_reward(
    schedule: &MeanSchedule,
    t: usize,
    arm: usize,
    rng: &mut dyn RngCore,
) -> Result<f64, EnvError> {
    let mean = schedule.mean_at(t, arm)?;
    Ok(bernoulli(mean, rng))
}

/// Bernoulli draw used by rollout hot loops (no range checks).
#[inline]
pub fn bernoulli(mean: f64, rng: &mut dyn RngCore) -> f64 {
    if uniform01(rng) < mean {
        1.0
    } else {
        0.0
    }
}

/// Number of slots `t` where some arm's mean moves by more than
/// `threshold` between `t` and `t+1`. Threshold 0 counts every breakpoint.
pub fn count_breakpoints(schedule: &MeanSchedule, threshold: f64) -> usize {
    debug_assert!(threshold >= 0.0, "threshold must be nonnegative");
    let segs = schedule.segments();
    let mut count = 0;
    for w in segs.windows(2) {
        let max_jump = w[0]
            .means
            .iter()
            .zip(&w[1].means)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        if max_jump > threshold {
            count += 1;
        }
    }
    count
}

/// Structural summary: breakpoint count, per-arm suboptimality gaps, and
/// the minimal nonzero distance from shifted means to the `1/M` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSummary {
    pub gamma_t: usize,
    /// `min over slots where arm i is not a best arm of (best - mean)`;
    /// `+inf` when the arm is a best arm at every slot.
    pub per_arm_delta: Vec<f64>,
    /// `None` when every grid distance is exactly zero.
    pub lambda: Option<f64>,
}

/// Computes [`EnvSummary`] for a schedule under detector parameters
/// `(epsilon, M)`.
pub fn summarize(
    schedule: &MeanSchedule,
    epsilon: f64,
    m: u32,
) -> Result<EnvSummary, EnvError> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(EnvError::InvalidParameter(format!(
            "epsilon must lie in (0, 0.5), got {epsilon}"
        )));
    }
    if m == 0 {
        return Err(EnvError::InvalidParameter("M must be >= 1".into()));
    }
    let k = schedule.num_arms();
    let mut per_arm_delta = vec![f64::INFINITY; k];
    let mut lambda = f64::INFINITY;
    let m_f = f64::from(m);
    for seg in schedule.segments() {
        let best = seg.means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (arm, &mean) in seg.means.iter().enumerate() {
            if mean < best {
                per_arm_delta[arm] = per_arm_delta[arm].min(best - mean);
            }
            let low = mean - epsilon;
            let high = mean + epsilon;
            let gap_floor = low - (low * m_f).floor() / m_f;
            let gap_ceil = (high * m_f).ceil() / m_f - high;
            for gap in [gap_floor, gap_ceil] {
                if gap > 0.0 {
                    lambda = lambda.min(gap);
                }
            }
        }
    }
    Ok(EnvSummary {
        gamma_t: count_breakpoints(schedule, 0.0),
        per_arm_delta,
        lambda: if lambda.is_finite() { Some(lambda) } else { None },
    })
}

/// Loads a trace file: header `t,arm_1,...,arm_K`, then one row per bin
/// giving the bin's start slot and K means. Bins extend to the next start;
/// the last bin runs to `horizon`.
pub fn load_trace(path: &Path, horizon: usize) -> Result<MeanSchedule, EnvError> {
    let text = fs::read_to_string(path)?;
    parse_trace(&text, horizon)
}

/// Parses trace text (see [`load_trace`]). Split out for testing.
pub fn parse_trace(text: &str, horizon: usize) -> Result<MeanSchedule, EnvError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or(EnvError::TraceParse { line: 1, reason: "missing header row".into() })?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.first() != Some(&"t") || cols.len() < 2 {
        return Err(EnvError::TraceParse {
            line: 1,
            reason: format!("expected header `t,arm_1,...,arm_K`, got `{header}`"),
        });
    }
    for (i, col) in cols[1..].iter().enumerate() {
        let expected = format!("arm_{}", i + 1);
        if *col != expected {
            return Err(EnvError::TraceParse {
                line: 1,
                reason: format!("expected column `{expected}`, got `{col}`"),
            });
        }
    }
    let num_arms = cols.len() - 1;
    let mut segments = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = raw.split(',').map(str::trim).collect();
        if cells.len() != num_arms + 1 {
            return Err(EnvError::TraceParse {
                line,
                reason: format!("expected {} cells, got {}", num_arms + 1, cells.len()),
            });
        }
        let start: usize = cells[0].parse().map_err(|_| EnvError::TraceParse {
            line,
            reason: format!("bin start `{}` is not a positive integer", cells[0]),
        })?;
        if let Some(prev) = segments.last().map(|s: &Segment| s.start) {
            if start <= prev {
                return Err(EnvError::TraceParse {
                    line,
                    reason: format!("bin starts must be strictly increasing ({start} after {prev})"),
                });
            }
        }
        let mut means = Vec::with_capacity(num_arms);
        for (i, cell) in cells[1..].iter().enumerate() {
            let mean: f64 = cell.parse().map_err(|_| EnvError::TraceParse {
                line,
                reason: format!("cell `{cell}` (arm_{}) is not a number", i + 1),
            })?;
            if !(0.0..=1.0).contains(&mean) || mean.is_nan() {
                return Err(EnvError::TraceParse {
                    line,
                    reason: format!("mean {mean} (arm_{}) outside [0, 1]", i + 1),
                });
            }
            means.push(mean);
        }
        segments.push(Segment { start, means });
    }
    from_segments(num_arms, horizon, segments).map_err(|e| match e {
        EnvError::InvalidSegment { index, reason } => EnvError::TraceParse {
            line: index + 2,
            reason,
        },
        other => other,
    })
}

/// Inverse of [`load_trace`]: shortest round-trip float formatting, so
/// `load(export(s))` reproduces `s` exactly.
pub fn export_trace(schedule: &MeanSchedule) -> String {
    let mut out = String::from("t");
    for i in 1..=schedule.num_arms() {
        let _ = write!(out, ",arm_{i}");
    }
    out.push('\n');
    for seg in schedule.segments() {
        let _ = write!(out, "{}", seg.start);
        for m in &seg.means {
            let _ = write!(out, ",{m}");
        }
        out.push('\n');
    }
    out
}

/// Writes [`export_trace`] output to a file.
pub fn save_trace(schedule: &MeanSchedule, path: &Path) -> Result<(), EnvError> {
    fs::write(path, export_trace(schedule))?;
    Ok(())
}
