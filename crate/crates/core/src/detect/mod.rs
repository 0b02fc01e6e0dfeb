//! Online change detectors for Bernoulli-range streams.
//!
//! Two detectors share the same two-sided random-walk skeleton:
//!
//! - [`CusumState`]: the first `M` samples after a reset form a frozen
//!   burn-in estimate of the pre-change mean; afterwards an upper and a
//!   lower walk track positive and negative drifts of size at least
//!   `epsilon`, and either walk crossing `h` raises an alarm.
//! - [`PhtState`]: a Page-Hinkley variant whose reference is the running
//!   sample mean (including the current observation) instead of a frozen
//!   burn-in estimate; there is no burn-in, so walks are live from the
//!   first sample.
//!
//! Detectors never reset themselves: they report alarms and the caller
//! owns the reset, matching the control loop that drives them.
//!
//! Deviations are computed in the fused form `(n*y - sum) / n` rather than
//! `y - sum/n`. Both are the same real number; the fused form rounds once,
//! so complementing a Bernoulli stream (`y -> 1-y`) negates the deviation
//! bit-for-bit and the two walks swap exactly.

mod bounds;
mod metrics;

pub use bounds::{
    compute_mgf_roots, conditional_bounds, detection_bounds, detection_constants,
    false_alarm_bound_only, tuned_params, MgfRoots, ConditionalBounds, DetectionBounds,
    DetectionConstants, TunedParams,
};
pub use metrics::{estimate_detection_metrics, DetectionExperiment, DetectionMetrics, DetectorKind};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("observation {0} outside [0, 1]")]
    ObservationOutOfRange(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("lambda undefined: every grid distance is zero")]
    LambdaUndefined,
    #[error("domain violation: {0}")]
    DomainViolation(String),
}

/// Shared detector parameters: drift tolerance, burn-in length, threshold.
/// `h = +inf` means the detector never alarms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorParams {
    pub epsilon: f64,
    pub m: u32,
    pub h: f64,
}

impl DetectorParams {
    pub fn new(epsilon: f64, m: u32, h: f64) -> Result<Self, DetectError> {
        if !(epsilon > 0.0 && epsilon < 0.5) {
            return Err(DetectError::InvalidParameter(format!(
                "epsilon must lie in (0, 0.5), got {epsilon}"
            )));
        }
        if m == 0 {
            return Err(DetectError::InvalidParameter("M must be >= 1".into()));
        }
        if h.is_nan() || h < 0.0 {
            return Err(DetectError::InvalidParameter(format!(
                "h must be nonnegative (or +inf), got {h}"
            )));
        }
        Ok(Self { epsilon, m, h })
    }
}

fn check_observation(y: f64) -> Result<(), DetectError> {
    if !(0.0..=1.0).contains(&y) || y.is_nan() {
        return Err(DetectError::ObservationOutOfRange(y));
    }
    Ok(())
}

/// Two-sided CUSUM with a frozen burn-in mean estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct CusumState {
    params: DetectorParams,
    /// Samples seen since the last reset.
    k: u64,
    /// Sum of the first `min(k, M)` samples; frozen once `k >= M`.
    burnin_sum: f64,
    g_plus: f64,
    g_minus: f64,
}

impl CusumState {
    pub fn new(params: DetectorParams) -> Self {
        Self { params, k: 0, burnin_sum: 0.0, g_plus: 0.0, g_minus: 0.0 }
    }

    /// State conditioned on a known reference mean: the burn-in is treated
    /// as already complete with average `u0_hat`. Used to study the
    /// conditional detection behavior given the estimate.
    pub fn with_frozen_mean(params: DetectorParams, u0_hat: f64) -> Result<Self, DetectError> {
        check_observation(u0_hat)?;
        Ok(Self {
            params,
            k: u64::from(params.m),
            burnin_sum: u0_hat * f64::from(params.m),
            g_plus: 0.0,
            g_minus: 0.0,
        })
    }

    pub fn params(&self) -> DetectorParams {
        self.params
    }

    pub fn samples_seen(&self) -> u64 {
        self.k
    }

    /// Burn-in mean estimate; defined once `M` samples have arrived.
    pub fn u0_hat(&self) -> Option<f64> {
        if self.k >= u64::from(self.params.m) {
            Some(self.burnin_sum / f64::from(self.params.m))
        } else {
            None
        }
    }

    pub fn walks(&self) -> (f64, f64) {
        (self.g_plus, self.g_minus)
    }

    /// Whether the next observation will be consumed by the burn-in.
    pub fn in_burnin(&self) -> bool {
        self.k < u64::from(self.params.m)
    }

    /// Feeds one observation; returns whether an alarm fired. The state is
    /// left as-is on alarm (no self-reset).
    pub fn step(&mut self, y: f64) -> Result<bool, DetectError> {
        check_observation(y)?;
        self.k += 1;
        let m = u64::from(self.params.m);
        if self.k <= m {
            self.burnin_sum += y;
            return Ok(false);
        }
        let m_f = f64::from(self.params.m);
        let dev = (m_f * y - self.burnin_sum) / m_f;
        let s_plus = dev - self.params.epsilon;
        let s_minus = -dev - self.params.epsilon;
        self.g_plus = 0.0_f64.max(self.g_plus + s_plus);
        self.g_minus = 0.0_f64.max(self.g_minus + s_minus);
        Ok(self.g_plus >= self.params.h || self.g_minus >= self.params.h)
    }

    /// Back to a fresh post-reset state; parameters are preserved.
    pub fn reset(&mut self) {
        self.k = 0;
        self.burnin_sum = 0.0;
        self.g_plus = 0.0;
        self.g_minus = 0.0;
    }
}

/// Page-Hinkley detector: reference mean is the running average including
/// the current sample; no burn-in gate.
#[derive(Debug, Clone, PartialEq)]
pub struct PhtState {
    params: DetectorParams,
    k: u64,
    running_sum: f64,
    g_plus: f64,
    g_minus: f64,
}

impl PhtState {
    pub fn new(params: DetectorParams) -> Self {
        Self { params, k: 0, running_sum: 0.0, g_plus: 0.0, g_minus: 0.0 }
    }

    pub fn params(&self) -> DetectorParams {
        self.params
    }

    pub fn samples_seen(&self) -> u64 {
        self.k
    }

    /// Running mean over the samples seen so far.
    pub fn y_hat(&self) -> Option<f64> {
        if self.k > 0 {
            Some(self.running_sum / self.k as f64)
        } else {
            None
        }
    }

    pub fn walks(&self) -> (f64, f64) {
        (self.g_plus, self.g_minus)
    }

    pub fn step(&mut self, y: f64) -> Result<bool, DetectError> {
        check_observation(y)?;
        self.k += 1;
        self.running_sum += y;
        let k_f = self.k as f64;
        let dev = (k_f * y - self.running_sum) / k_f;
        let s_plus = dev - self.params.epsilon;
        let s_minus = -dev - self.params.epsilon;
        self.g_plus = 0.0_f64.max(self.g_plus + s_plus);
        self.g_minus = 0.0_f64.max(self.g_minus + s_minus);
        Ok(self.g_plus >= self.params.h || self.g_minus >= self.params.h)
    }

    pub fn reset(&mut self) {
        self.k = 0;
        self.running_sum = 0.0;
        self.g_plus = 0.0;
        self.g_minus = 0.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(epsilon: f64, m: u32, h: f64) -> DetectorParams {
        DetectorParams::new(epsilon, m, h).unwrap()
    }

    #[test]
    fn cusum_burnin_then_alarm() {
        // M=2, eps=0.1, h=0.3; feed 1, 0: burn-in only.
        let mut d = CusumState::new(params(0.1, 2, 0.3));
        assert!(!d.step(1.0).unwrap());
        assert!(!d.step(0.0).unwrap());
        assert_eq!(d.u0_hat(), Some(0.5));
        assert_eq!(d.walks(), (0.0, 0.0));
        // Third sample: s+ = 1 - 0.5 - 0.1 = 0.4 >= h.
        assert!(d.step(1.0).unwrap());
        let (gp, gm) = d.walks();
        assert!((gp - 0.4).abs() < 1e-15);
        assert_eq!(gm, 0.0);
    }

    #[test]
    fn cusum_infinite_threshold_never_alarms() {
        let mut d = CusumState::new(params(0.1, 5, f64::INFINITY));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100_000 {
            let y = if rng.random::<f64>() < 0.7 { 1.0 } else { 0.0 };
            assert!(!d.step(y).unwrap());
        }
        let (gp, gm) = d.walks();
        assert!(gp >= 0.0 && gm >= 0.0);
    }

    #[test]
    fn cusum_no_alarm_during_burnin() {
        // Even an extreme stream cannot alarm while k <= M.
        let mut d = CusumState::new(params(0.05, 50, 0.0));
        for i in 0..50 {
            assert!(!d.step(f64::from(i % 2)).unwrap(), "alarm at burn-in sample {i}");
        }
    }

    #[test]
    fn cusum_rejects_out_of_range() {
        let mut d = CusumState::new(params(0.1, 2, 1.0));
        assert!(d.step(1.5).is_err());
        assert!(d.step(-0.1).is_err());
        assert!(d.step(f64::NAN).is_err());
    }

    #[test]
    fn pht_hand_evaluation() {
        // eps=0.1; y1=1: mean 1, s+ = s- = -0.1, walks stay 0.
        let mut d = PhtState::new(params(0.1, 1, 10.0));
        assert!(!d.step(1.0).unwrap());
        assert_eq!(d.y_hat(), Some(1.0));
        assert_eq!(d.walks(), (0.0, 0.0));
        // y2=0: mean 0.5, s+ = -0.6, s- = 0.4.
        assert!(!d.step(0.0).unwrap());
        assert_eq!(d.y_hat(), Some(0.5));
        let (gp, gm) = d.walks();
        assert_eq!(gp, 0.0);
        assert!((gm - 0.4).abs() < 1e-15);
    }

    #[test]
    fn pht_constant_stream_never_alarms() {
        let mut d = PhtState::new(params(0.05, 1, 0.5));
        for _ in 0..10_000 {
            assert!(!d.step(1.0).unwrap());
        }
        assert_eq!(d.walks(), (0.0, 0.0));
    }

    #[test]
    fn reset_restores_fresh_state() {
        let p = params(0.1, 3, 0.2);
        let mut d = CusumState::new(p);
        for y in [1.0, 0.0, 1.0, 1.0, 1.0, 1.0] {
            let _ = d.step(y).unwrap();
        }
        d.reset();
        assert_eq!(d, CusumState::new(p));
        // Idempotent.
        d.reset();
        assert_eq!(d, CusumState::new(p));
        assert_eq!(d.params(), p);
        // Subsequent burn-in rebuilds the estimate.
        for _ in 0..3 {
            d.step(1.0).unwrap();
        }
        assert_eq!(d.u0_hat(), Some(1.0));
    }

    #[test]
    fn frozen_mean_skips_burnin() {
        let mut d = CusumState::with_frozen_mean(params(0.1, 100, 0.3), 0.5).unwrap();
        assert_eq!(d.u0_hat(), Some(0.5));
        assert!(!d.in_burnin());
        assert!(d.step(1.0).unwrap());
    }

    #[test]
    fn complement_swaps_walks_bitwise() {
        // Bernoulli streams under arbitrary M: the fused deviation makes
        // the complemented run's (g+, g-) the exact mirror of the original.
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..200 {
            let m = rng.random_range(1..=150);
            let p = params(0.05 + 0.4 * rng.random::<f64>(), m, 1.0 + 4.0 * rng.random::<f64>());
            let mut a = CusumState::new(p);
            let mut b = CusumState::new(p);
            let mut pa = PhtState::new(p);
            let mut pb = PhtState::new(p);
            let mean = rng.random::<f64>();
            for _ in 0..(u64::from(m) + 200) {
                let y = if rng.random::<f64>() < mean { 1.0 } else { 0.0 };
                let alarm_a = a.step(y).unwrap();
                let alarm_b = b.step(1.0 - y).unwrap();
                assert_eq!(alarm_a, alarm_b);
                let (gap, gam) = a.walks();
                let (gbp, gbm) = b.walks();
                assert_eq!(gap.to_bits(), gbm.to_bits());
                assert_eq!(gam.to_bits(), gbp.to_bits());
                let alarm_pa = pa.step(y).unwrap();
                let alarm_pb = pb.step(1.0 - y).unwrap();
                assert_eq!(alarm_pa, alarm_pb);
                let (gap, gam) = pa.walks();
                let (gbp, gbm) = pb.walks();
                assert_eq!(gap.to_bits(), gbm.to_bits());
                assert_eq!(gam.to_bits(), gbp.to_bits());
            }
        }
    }

    #[test]
    fn walks_never_negative_under_fuzz() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let p = params(0.01 + 0.48 * rng.random::<f64>(), rng.random_range(1..=20), 3.0);
            let mut c = CusumState::new(p);
            let mut h = PhtState::new(p);
            for _ in 0..2_000 {
                let y = rng.random::<f64>();
                let _ = c.step(y).unwrap();
                let _ = h.step(y).unwrap();
                let (gp, gm) = c.walks();
                assert!(gp >= 0.0 && gm >= 0.0);
                let (gp, gm) = h.walks();
                assert!(gp >= 0.0 && gm >= 0.0);
            }
        }
    }
}
