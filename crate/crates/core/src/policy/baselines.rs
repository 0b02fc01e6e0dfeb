//! Baseline policies for the non-stationary comparison set.
//!
//! UCB is the stationary reference; D-UCB applies a geometric moving
//! average to counts and sums; SW-UCB keeps statistics over a sliding
//! window of recent plays; Exp3.S mixes uniform exploration and weight
//! sharing into Exp3; Rexp3 restarts Exp3 on a fixed batch schedule;
//! Exp3.R pairs Exp3 with a confidence-gap drift test that resets the
//! weights.

use std::collections::VecDeque;

use rand::{Rng, RngCore};

use super::{argmax_lowest, padded_index, Policy, PolicyError};

fn check_arms(num_arms: usize) -> Result<(), PolicyError> {
    if num_arms == 0 {
        return Err(PolicyError::InvalidParameter("K must be >= 1".into()));
    }
    Ok(())
}

fn check_reward(reward: f64) {
    assert!((0.0..=1.0).contains(&reward), "reward {reward} outside [0, 1]");
}

/// Stationary UCB with padding `sqrt(xi ln n / N_i)`.
pub struct Ucb {
    name: String,
    counts: Vec<u64>,
    sums: Vec<f64>,
    n_total: u64,
    xi: f64,
}

impl Ucb {
    pub fn new(name: impl Into<String>, num_arms: usize, xi: f64) -> Result<Self, PolicyError> {
        check_arms(num_arms)?;
        if xi <= 0.0 {
            return Err(PolicyError::InvalidParameter(format!("xi must be positive, got {xi}")));
        }
        Ok(Self {
            name: name.into(),
            counts: vec![0; num_arms],
            sums: vec![0.0; num_arms],
            n_total: 0,
            xi,
        })
    }
}

impl Policy for Ucb {
    fn num_arms(&self) -> usize {
        self.counts.len()
    }

    fn name(&self) -> &str {
        &self.name
    }

    fn select(&mut self, _rng: &mut dyn RngCore) -> usize {
        if let Some(i) = self.counts.iter().position(|&c| c == 0) {
            return i;
        }
        let ln_n = (self.n_total as f64).ln();
        let xi = self.xi;
        argmax_lowest(
            self.counts
                .iter()
                .zip(&self.sums)
                .map(|(&c, &s)| padded_index(s, c as f64, ln_n, xi, 1.0)),
        )
    }

    fn update(&mut self, arm: usize, reward: f64) {
        check_reward(reward);
        self.counts[arm] += 1;
        self.sums[arm] += reward;
        self.n_total += 1;
    }
}

/// Discounted UCB: counts and sums decay by `discount` every slot.
pub struct DUcb {
    name: String,
    counts: Vec<f64>,
    sums: Vec<f64>,
    n_total: f64,
    discount: f64,
    xi: f64,
    scale: f64,
}

impl DUcb {
    pub fn new(
        name: impl Into<String>,
        num_arms: usize,
        discount: f64,
        xi: f64,
        scale: f64,
    ) -> Result<Self, PolicyError> {
        check_arms(num_arms)?;
        if !(discount > 0.0 && discount <= 1.0) {
            return Err(PolicyError::InvalidParameter(format!(
                "discount must lie in (0, 1], got {discount}"
            )));
        }
        Ok(Self {
            name: name.into(),
            counts: vec![0.0; num_arms],
            sums: vec![0.0; num_arms],
            n_total: 0.0,
            discount,
            xi,
            scale,
        })
    }
}

impl Policy for DUcb {
    fn num_arms(&self) -> usize {
        self.counts.len()
    }

    fn name(&self) -> &str {
        &self.name
    }

    fn select(&mut self, _rng: &mut dyn RngCore) -> usize {
        if let Some(i) = self.counts.iter().position(|&c| c == 0.0) {
            return i;
        }
        let ln_n = self.n_total.ln();
        let (xi, scale) = (self.xi, self.scale);
        argmax_lowest(
            self.counts
                .iter()
                .zip(&self.sums)
                .map(|(&c, &s)| padded_index(s, c, ln_n, xi, scale)),
        )
    }

    fn update(&mut self, arm: usize, reward: f64) {
        check_reward(reward);
        for i in 0..self.counts.len() {
            self.counts[i] *= self.discount;
            self.sums[i] *= self.discount;
        }
        self.n_total *= self.discount;
        self.counts[arm] += 1.0;
        self.sums[arm] += reward;
        self.n_total += 1.0;
    }
}

/// Sliding-window UCB: statistics over the most recent `window` plays.
pub struct SwUcb {
    name: String,
    window: usize,
    buffer: VecDeque<(u32, f64)>,
    counts: Vec<u64>,
    sums: Vec<f64>,
    xi: f64,
    scale: f64,
}

impl SwUcb {
    pub fn new(
        name: impl Into<String>,
        num_arms: usize,
        window: usize,
        xi: f64,
        scale: f64,
    ) -> Result<Self, PolicyError> {
        check_arms(num_arms)?;
        if window == 0 {
            return Err(PolicyError::InvalidParameter("window must be >= 1".into()));
        }
        Ok(Self {
            name: name.into(),
            window,
            buffer: VecDeque::new(),
            counts: vec![0; num_arms],
            sums: vec![0.0; num_arms],
            xi,
            scale,
        })
    }
}

impl Policy for SwUcb {
    fn num_arms(&self) -> usize {
        self.counts.len()
    }

    fn name(&self) -> &str {
        &self.name
    }

    fn select(&mut self, _rng: &mut dyn RngCore) -> usize {
        if let Some(i) = self.counts.iter().position(|&c| c == 0) {
            return i;
        }
        let ln_n = (self.buffer.len() as f64).ln();
        let (xi, scale) = (self.xi, self.scale);
        argmax_lowest(
            self.counts
                .iter()
                .zip(&self.sums)
                .map(|(&c, &s)| padded_index(s, c as f64, ln_n, xi, scale)),
        )
    }

    fn update(&mut self, arm: usize, reward: f64) {
        check_reward(reward);
        self.buffer.push_back((arm as u32, reward));
        self.counts[arm] += 1;
        self.sums[arm] += reward;
        if self.buffer.len() > self.window {
            let (old_arm, old_reward) = self.buffer.pop_front().expect("nonempty");
            let old_arm = old_arm as usize;
            self.counts[old_arm] -= 1;
            self.sums[old_arm] -= old_reward;
        }
    }
}

/// Draws from a probability vector with a single uniform variate
/// (inverse-CDF walk; deterministic given the stream).
fn sample_categorical(probs: &[f64], rng: &mut dyn RngCore) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

fn exp3_probs(weights: &[f64], rate: f64) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    let k = weights.len() as f64;
    weights.iter().map(|w| (1.0 - rate) * w / total + rate / k).collect()
}

fn normalize(weights: &mut [f64]) {
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }
}

/// Exp3.S: Exp3 with uniform mixing `rate` and weight sharing `mixing`.
pub struct Exp3S {
    name: String,
    weights: Vec<f64>,
    rate: f64,
    mixing: f64,
}

impl Exp3S {
    pub fn new(
        name: impl Into<String>,
        num_arms: usize,
        rate: f64,
        mixing: f64,
    ) -> Result<Self, PolicyError> {
        check_arms(num_arms)?;
        if !(rate > 0.0 && rate <= 1.0) {
            return Err(PolicyError::InvalidParameter(format!(
                "learning rate must lie in (0, 1], got {rate}"
            )));
        }
        if !(0.0..=1.0).contains(&mixing) {
            return Err(PolicyError::InvalidParameter(format!(
                "mixing must lie in [0, 1], got {mixing}"
            )));
        }
        Ok(Self {
            name: name.into(),
            weights: vec![1.0 / num_arms as f64; num_arms],
            rate,
            mixing,
        })
    }

    pub fn probabilities(&self) -> Vec<f64> {
        exp3_probs(&self.weights, self.rate)
    }
}

impl Policy for Exp3S {
    fn num_arms(&self) -> usize {
        self.weights.len()
    }

    fn name(&self) -> &str {
        &self.name
    }

    fn select(&mut self, rng: &mut dyn RngCore) -> usize {
        sample_categorical(&self.probabilities(), rng)
    }

    fn update(&mut self, arm: usize, reward: f64) {
        check_reward(reward);
        let probs = self.probabilities();
        let k = self.weights.len() as f64;
        let xhat = reward / probs[arm];
        let total: f64 = self.weights.iter().sum();
        let share = std::f64::consts::E * self.mixing / k * total;
        self.weights[arm] *= (self.rate * xhat / k).exp();
        for w in self.weights.iter_mut() {
            *w += share;
        }
        normalize(&mut self.weights);
    }
}

/// Rexp3: Exp3 restarted from uniform weights every `batch` plays.
pub struct Rexp3 {
    name: String,
    weights: Vec<f64>,
    rate: f64,
    batch: usize,
    position: usize,
}

impl Rexp3 {
    pub fn new(
        name: impl Into<String>,
        num_arms: usize,
        rate: f64,
        batch: usize,
    ) -> Result<Self, PolicyError> {
        check_arms(num_arms)?;
        if !(rate > 0.0 && rate <= 1.0) {
            return Err(PolicyError::InvalidParameter(format!(
                "learning rate must lie in (0, 1], got {rate}"
            )));
        }
        if batch == 0 {
            return Err(PolicyError::InvalidParameter("batch must be >= 1".into()));
        }
        Ok(Self {
            name: name.into(),
            weights: vec![1.0 / num_arms as f64; num_arms],
            rate,
            batch,
            position: 0,
        })
    }
}

impl Policy for Rexp3 {
    fn num_arms(&self) -> usize {
        self.weights.len()
    }

    fn name(&self) -> &str {
        &self.name
    }

    fn select(&mut self, rng: &mut dyn RngCore) -> usize {
        if self.position == self.batch {
            let uniform = 1.0 / self.weights.len() as f64;
            self.weights.fill(uniform);
            self.position = 0;
        }
        sample_categorical(&exp3_probs(&self.weights, self.rate), rng)
    }

    fn update(&mut self, arm: usize, reward: f64) {
        check_reward(reward);
        let probs = exp3_probs(&self.weights, self.rate);
        let k = self.weights.len() as f64;
        let xhat = reward / probs[arm];
        self.weights[arm] *= (self.rate * xhat / k).exp();
        normalize(&mut self.weights);
        self.position += 1;
    }
}

/// Exp3.R: Exp3 plus an interval drift test. At the end of each interval
/// the empirical mean of every sampled arm is compared against the arm
/// currently carrying the largest weight; a gap beyond the two-sided
/// confidence radius resets the weights.
pub struct Exp3R {
    name: String,
    weights: Vec<f64>,
    rate: f64,
    interval: usize,
    confidence: f64,
    step_in_interval: usize,
    interval_counts: Vec<u64>,
    interval_sums: Vec<f64>,
    resets: u64,
}

impl Exp3R {
    pub fn new(
        name: impl Into<String>,
        num_arms: usize,
        rate: f64,
        interval: usize,
        confidence: f64,
    ) -> Result<Self, PolicyError> {
        check_arms(num_arms)?;
        if !(rate > 0.0 && rate <= 1.0) {
            return Err(PolicyError::InvalidParameter(format!(
                "learning rate must lie in (0, 1], got {rate}"
            )));
        }
        if interval < 2 {
            return Err(PolicyError::InvalidParameter("interval must be >= 2".into()));
        }
        if !(confidence > 0.0 && confidence < 1.0) {
            return Err(PolicyError::InvalidParameter(format!(
                "confidence must lie in (0, 1), got {confidence}"
            )));
        }
        Ok(Self {
            name: name.into(),
            weights: vec![1.0 / num_arms as f64; num_arms],
            rate,
            interval,
            confidence,
            step_in_interval: 0,
            interval_counts: vec![0; num_arms],
            interval_sums: vec![0.0; num_arms],
            resets: 0,
        })
    }

    pub fn resets(&self) -> u64 {
        self.resets
    }

    fn drift_detected(&self) -> bool {
        let leader = argmax_lowest(self.weights.iter().copied());
        if self.interval_counts[leader] == 0 {
            return false;
        }
        let leader_mean =
            self.interval_sums[leader] / self.interval_counts[leader] as f64;
        let ln_term = (1.0 / self.confidence).ln();
        for arm in 0..self.weights.len() {
            if arm == leader || self.interval_counts[arm] == 0 {
                continue;
            }
            let mean = self.interval_sums[arm] / self.interval_counts[arm] as f64;
            let support = self.interval_counts[arm].min(self.interval_counts[leader]) as f64;
            let radius = 2.0 * (ln_term / (2.0 * support)).sqrt();
            if mean - leader_mean > radius {
                return true;
            }
        }
        false
    }
}

impl Policy for Exp3R {
    fn num_arms(&self) -> usize {
        self.weights.len()
    }

    fn name(&self) -> &str {
        &self.name
    }

    fn select(&mut self, rng: &mut dyn RngCore) -> usize {
        sample_categorical(&exp3_probs(&self.weights, self.rate), rng)
    }

    fn update(&mut self, arm: usize, reward: f64) {
        check_reward(reward);
        let probs = exp3_probs(&self.weights, self.rate);
        let k = self.weights.len() as f64;
        let xhat = reward / probs[arm];
        self.weights[arm] *= (self.rate * xhat / k).exp();
        normalize(&mut self.weights);
        self.interval_counts[arm] += 1;
        self.interval_sums[arm] += reward;
        self.step_in_interval += 1;
        if self.step_in_interval == self.interval {
            if self.drift_detected() {
                self.weights.fill(1.0 / k);
                self.resets += 1;
            }
            self.interval_counts.fill(0);
            self.interval_sums.fill(0.0);
            self.step_in_interval = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn ucb_plays_each_arm_once_then_exploits() {
        let mut p = Ucb::new("ucb", 3, 1.0).unwrap();
        let mut r = rng(0);
        for want in 0..3 {
            let arm = p.select(&mut r);
            assert_eq!(arm, want);
            p.update(arm, if arm == 1 { 1.0 } else { 0.0 });
        }
        // Arm 1 has the best mean and wins until padding catches up.
        assert_eq!(p.select(&mut r), 1);
    }

    #[test]
    fn exp3s_probabilities_form_distribution() {
        let mut p = Exp3S::new("exp3s", 5, 0.2, 0.001).unwrap();
        let mut r = rng(4);
        for _ in 0..5_000 {
            let arm = p.select(&mut r);
            p.update(arm, if arm == 2 { 1.0 } else { 0.0 });
            let probs = p.probabilities();
            let total: f64 = probs.iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
            assert!(probs.iter().all(|&x| x.is_finite() && x > 0.0));
        }
        // Arm 2 should carry the most probability by now.
        let probs = p.probabilities();
        assert_eq!(argmax_lowest(probs.into_iter()), 2);
    }

    #[test]
    fn exp3s_vanishing_rate_is_uniform() {
        let mut p = Exp3S::new("exp3s", 4, 1e-9, 0.0).unwrap();
        for _ in 0..100 {
            p.update(0, 1.0);
        }
        for prob in p.probabilities() {
            assert!((prob - 0.25).abs() < 1e-6);
        }
    }

    #[test]
    fn exp3_weights_stay_finite_over_long_runs() {
        let mut p = Exp3S::new("exp3s", 3, 0.4, 1e-6).unwrap();
        let mut q = Rexp3::new("rexp3", 3, 0.4, 500).unwrap();
        let mut r = rng(9);
        for t in 0..1_000_000_u32 {
            let reward = f64::from(t % 2);
            let arm_p = p.select(&mut r);
            p.update(arm_p, reward);
            let arm_q = q.select(&mut r);
            q.update(arm_q, reward);
        }
        let total: f64 = p.weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert!(p.weights.iter().all(|w| w.is_finite()));
        assert!(q.weights.iter().all(|w| w.is_finite()));
    }

    #[test]
    fn rexp3_restarts_on_batch_boundary() {
        let mut p = Rexp3::new("rexp3", 2, 0.3, 10).unwrap();
        let mut r = rng(2);
        for _ in 0..10 {
            let arm = p.select(&mut r);
            p.update(arm, if arm == 0 { 1.0 } else { 0.0 });
        }
        let skew = p.weights[0];
        assert!(skew > 0.5);
        // Next select crosses the boundary and resets to uniform.
        let _ = p.select(&mut r);
        assert_eq!(p.weights[0], 0.5);
    }

    #[test]
    fn exp3r_resets_on_drift() {
        let mut p = Exp3R::new("exp3r", 2, 0.3, 50, 0.01).unwrap();
        let mut r = rng(6);
        // Arm 0 dominates; then flips so arm 1 is clearly better.
        for t in 0..2_000 {
            let arm = p.select(&mut r);
            let good = usize::from(t >= 1_000);
            p.update(arm, if arm == good { 1.0 } else { 0.0 });
        }
        assert!(p.resets() > 0, "drift test never fired");
    }

    #[test]
    fn sw_ucb_window_evicts_old_plays() {
        let mut p = SwUcb::new("sw-ucb", 2, 4, 1.0, 1.0).unwrap();
        for _ in 0..4 {
            p.update(0, 1.0);
        }
        assert_eq!(p.counts, vec![4, 0]);
        p.update(1, 0.0);
        // Oldest arm-0 play fell out of the window.
        assert_eq!(p.counts, vec![3, 1]);
        assert_eq!(p.sums[0], 3.0);
    }
}
