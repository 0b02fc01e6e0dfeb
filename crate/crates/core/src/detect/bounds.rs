//! Detection-performance bound calculators.
//!
//! These evaluate the closed-form constants governing the CUSUM detector's
//! expected detection delay and false-alarm count, the threshold/exploration
//! pair tuned from horizon knowledge, and the log-MGF roots controlling the
//! false-alarm rate conditional on the burn-in estimate.
//!
//! Numerical policy: binomial coefficients go through log space (no
//! factorials), `log(x + 1)` uses `ln_1p`, and quantities that can fall
//! below the smallest positive f64 are carried in log domain alongside
//! their (possibly underflowing) linear value.

use super::DetectError;

/// Constants of the detection delay / false alarm bounds.
///
/// `c1_minus`, `c1_plus`, `c1`, `c2` are the linear values; the `ln_*`
/// fields are exact log-domain companions (finite even when the linear
/// value underflows f64, e.g. around 1e-861 for large burn-ins).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionConstants {
    pub c1_minus: f64,
    pub c1_plus: f64,
    pub c1: f64,
    pub c2: f64,
    pub ln_c1_minus: f64,
    pub ln_c1_plus: f64,
    pub ln_c1: f64,
}

/// ln(binom(n, k)) via a product expansion; exact enough (relative error
/// around k * eps) for the tolerances used here, with no factorials.
fn ln_choose(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    let k = k.min(n - k);
    let mut acc = 0.0_f64;
    for j in 1..=k {
        acc += ((n - k + j) as f64 / j as f64).ln();
    }
    acc
}

/// `2 * eps * M` snapped to the nearest integer when within 1e-9 relative,
/// so decimal parameters like eps = 0.1 hit the intended grid index.
fn snapped(x: f64) -> (f64, f64) {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * (1.0 + x.abs()) {
        (r, r)
    } else {
        (x.floor(), x.ceil())
    }
}

/// ln(1 + e^l), stable for both tails.
fn ln1p_exp(l: f64) -> f64 {
    if l > 33.0 {
        l + (-l).exp().ln_1p()
    } else {
        l.exp().ln_1p()
    }
}

/// ln(ln(1 + e^l)); for very negative `l`, ln1p(e^l) = e^l to f64
/// precision, so the result is `l` itself.
fn ln_ln1p_exp(l: f64) -> f64 {
    if l <= -37.0 {
        l
    } else {
        ln1p_exp(l).ln()
    }
}

/// Evaluates the delay/false-alarm constants for parameters `(epsilon, M)`
/// and grid gap `lambda`.
///
/// `c2 = ln 3 + 2 exp(-2 eps^2 M) / lambda`;
/// `c1_minus/plus = ln(4 eps / (1 -/+ eps)^2 * binom(M, floor/ceil(2 eps M)) * (2 eps)^M + 1)`;
/// `c1 = min(c1_minus, c1_plus)`.
pub fn detection_constants(
    epsilon: f64,
    m: u32,
    lambda: Option<f64>,
) -> Result<DetectionConstants, DetectError> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(DetectError::InvalidParameter(format!(
            "epsilon must lie in (0, 0.5), got {epsilon}"
        )));
    }
    if m == 0 {
        return Err(DetectError::InvalidParameter("M must be >= 1".into()));
    }
    let lambda = match lambda {
        Some(l) if l > 0.0 => l,
        Some(l) => {
            return Err(DetectError::InvalidParameter(format!(
                "lambda must be positive, got {l}"
            )))
        }
        None => return Err(DetectError::LambdaUndefined),
    };
    let m_f = f64::from(m);
    let c2 = 3.0_f64.ln() + 2.0 * (-2.0 * epsilon * epsilon * m_f).exp() / lambda;

    let (k_floor, k_ceil) = snapped(2.0 * epsilon * m_f);
    let tail = m_f * (2.0 * epsilon).ln();
    let l_minus =
        (4.0 * epsilon).ln() - 2.0 * (1.0 - epsilon).ln() + ln_choose(m.into(), k_floor as u64) + tail;
    let l_plus =
        (4.0 * epsilon).ln() - 2.0 * (1.0 + epsilon).ln() + ln_choose(m.into(), k_ceil as u64) + tail;

    let ln_c1_minus = ln_ln1p_exp(l_minus);
    let ln_c1_plus = ln_ln1p_exp(l_plus);
    let ln_c1 = ln_c1_minus.min(ln_c1_plus);
    Ok(DetectionConstants {
        c1_minus: ln_c1_minus.exp(),
        c1_plus: ln_c1_plus.exp(),
        c1: ln_c1.exp(),
        c2,
        ln_c1_minus,
        ln_c1_plus,
        ln_c1,
    })
}

/// Expected detection delay / false alarm bounds at threshold `h` over
/// horizon `T`: delay <= C2 (h+1); false alarms <=
/// 2T / ((1 - 2 exp(-2 eps^2 M)) exp(C1 h)).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionBounds {
    pub delay_bound: f64,
    pub false_alarm_bound: f64,
}

pub fn detection_bounds(
    epsilon: f64,
    m: u32,
    lambda: Option<f64>,
    h: f64,
    horizon: usize,
) -> Result<DetectionBounds, DetectError> {
    let constants = detection_constants(epsilon, m, lambda)?;
    Ok(DetectionBounds {
        delay_bound: constants.c2 * (h + 1.0),
        false_alarm_bound: false_alarm_bound_only(epsilon, m, h, horizon)?,
    })
}

/// The false-alarm side of the bound alone. Unlike the delay side it does
/// not involve the grid gap, so it stays evaluable when `lambda` is
/// undefined (every grid distance zero).
pub fn false_alarm_bound_only(
    epsilon: f64,
    m: u32,
    h: f64,
    horizon: usize,
) -> Result<f64, DetectError> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(DetectError::InvalidParameter(format!(
            "epsilon must lie in (0, 0.5), got {epsilon}"
        )));
    }
    if m == 0 {
        return Err(DetectError::InvalidParameter("M must be >= 1".into()));
    }
    let m_f = f64::from(m);
    let denom = 1.0 - 2.0 * (-2.0 * epsilon * epsilon * m_f).exp();
    if denom <= 0.0 {
        return Err(DetectError::InvalidParameter(format!(
            "false-alarm bound needs 2 exp(-2 eps^2 M) < 1; got eps={epsilon}, M={m}"
        )));
    }
    // Reuse the constants path for C1; any positive lambda works since C1
    // depends only on (epsilon, M).
    let c1 = detection_constants(epsilon, m, Some(1.0))?.c1;
    Ok(2.0 * horizon as f64 / (denom * (c1 * h).exp()))
}

/// Threshold and exploration rate chosen from horizon knowledge:
/// `h = ln(T / gamma_T) / C1`, `alpha = K sqrt(C2 gamma_T / (C1 T) * ln(T / gamma_T))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TunedParams {
    pub h: f64,
    pub alpha_raw: f64,
    /// `alpha_raw` clamped into [0, 1).
    pub alpha: f64,
    /// Set when the raw alpha exceeded the clamp.
    pub clamped: bool,
}

pub fn tuned_params(
    horizon: usize,
    gamma_t: usize,
    num_arms: usize,
    c1: f64,
    c2: f64,
) -> Result<TunedParams, DetectError> {
    if gamma_t == 0 || gamma_t >= horizon {
        return Err(DetectError::InvalidParameter(format!(
            "need T > gamma_T >= 1, got T={horizon}, gamma_T={gamma_t}"
        )));
    }
    if c1 <= 0.0 || c2 <= 0.0 {
        return Err(DetectError::InvalidParameter(format!(
            "constants must be positive, got C1={c1}, C2={c2}"
        )));
    }
    let t = horizon as f64;
    let g = gamma_t as f64;
    let log_ratio = (t / g).ln();
    let h = log_ratio / c1;
    let alpha_raw = num_arms as f64 * (c2 * g / (c1 * t) * log_ratio).sqrt();
    let max_alpha = 1.0 - f64::EPSILON;
    let clamped = alpha_raw >= 1.0;
    Ok(TunedParams {
        h,
        alpha_raw,
        alpha: if clamped { max_alpha } else { alpha_raw.max(0.0) },
        clamped,
    })
}

/// Log-MGF roots of the two walk steps under the pre-change distribution.
///
/// `r_minus`/`r_plus` are the unique nonzero roots of
/// `ln(e^{-r} u0 + 1 - u0) + r (u0_hat - eps)` and
/// `ln(e^{r} u0 + 1 - u0) - r (u0_hat + eps)`;
/// `r_hat_minus`/`r_hat_plus` are the closed-form stationary points, which
/// lower-bound the roots by convexity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MgfRoots {
    pub r_minus: f64,
    pub r_plus: f64,
    pub r_hat_minus: f64,
    pub r_hat_plus: f64,
}

fn lambda_minus(r: f64, u0: f64, u0_hat: f64, eps: f64) -> f64 {
    ((-r).exp() * u0 + 1.0 - u0).ln() + r * (u0_hat - eps)
}

fn lambda_plus(r: f64, u0: f64, u0_hat: f64, eps: f64) -> f64 {
    (r.exp() * u0 + 1.0 - u0).ln() - r * (u0_hat + eps)
}

/// Bracketed bisection for the positive root of a convex log-MGF with
/// negative slope at zero. The initial bracket [1e-9, 50] expands
/// geometrically until it straddles the root.
fn bisect_root(f: impl Fn(f64) -> f64) -> Result<f64, DetectError> {
    let lo0 = 1e-9;
    if f(lo0) >= 0.0 {
        return Err(DetectError::DomainViolation(
            "log-MGF not negative near zero; no positive root".into(),
        ));
    }
    let mut hi = 50.0;
    let mut guard = 0;
    while f(hi) <= 0.0 {
        hi *= 2.0;
        guard += 1;
        if guard > 60 {
            return Err(DetectError::DomainViolation(
                "log-MGF root bracket expansion failed".into(),
            ));
        }
    }
    let mut lo = lo0;
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Computes [`MgfRoots`] for pre-change mean `u0`, burn-in estimate
/// `u0_hat`, and tolerance `epsilon`. Requires `2 eps < u0 < 1 - 2 eps`
/// and `|u0_hat - u0| < eps`.
pub fn compute_mgf_roots(u0: f64, u0_hat: f64, epsilon: f64) -> Result<MgfRoots, DetectError> {
    if !(epsilon > 0.0 && epsilon < 0.25) {
        return Err(DetectError::DomainViolation(format!(
            "epsilon must lie in (0, 0.25) for the root domain, got {epsilon}"
        )));
    }
    if !(u0 > 2.0 * epsilon && u0 < 1.0 - 2.0 * epsilon) {
        return Err(DetectError::DomainViolation(format!(
            "u0 must lie in (2 eps, 1 - 2 eps), got u0={u0}, eps={epsilon}"
        )));
    }
    if (u0_hat - u0).abs() >= epsilon {
        return Err(DetectError::DomainViolation(format!(
            "|u0_hat - u0| must be < eps, got u0_hat={u0_hat}, u0={u0}, eps={epsilon}"
        )));
    }
    let r_hat_minus = ((u0 / (u0_hat - epsilon) - u0) / (1.0 - u0)).ln();
    let r_hat_plus = ((1.0 - u0) / (u0 / (u0_hat + epsilon) - u0)).ln();
    let r_minus = bisect_root(|r| lambda_minus(r, u0, u0_hat, epsilon))?;
    let r_plus = bisect_root(|r| lambda_plus(r, u0, u0_hat, epsilon))?;
    Ok(MgfRoots { r_minus, r_plus, r_hat_minus, r_hat_plus })
}

/// Conditional delay/false-alarm bounds given the burn-in estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConditionalBounds {
    /// `|u0_hat - u0| < eps`: detection delay and false-alarm bounds hold.
    Conditional {
        delay_bound: f64,
        false_alarm_bound: f64,
        /// min of the two log-MGF roots; controls the false-alarm rate.
        r_theta0: f64,
    },
    /// `|u0_hat - u0| > eps`: the detector restarts within the returned
    /// number of slots instead of providing a delay guarantee.
    BadEstimate { restart_bound: f64 },
}

/// `delay <= (h+1) / (|u1 - u0_hat| - eps)` and
/// `false alarms <= 2T / exp(r(theta0) h)` conditional on a good estimate;
/// the bad-estimate branch returns the restart bound.
pub fn conditional_bounds(
    u0_hat: f64,
    u0: f64,
    u1: f64,
    epsilon: f64,
    h: f64,
    horizon: usize,
) -> Result<ConditionalBounds, DetectError> {
    if epsilon <= 0.0 {
        return Err(DetectError::InvalidParameter(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    if h.is_nan() || h < 0.0 {
        return Err(DetectError::InvalidParameter(format!("h must be nonnegative, got {h}")));
    }
    let est_err = (u0_hat - u0).abs();
    if est_err > epsilon {
        return Ok(ConditionalBounds::BadEstimate { restart_bound: (h + 1.0) / (est_err - epsilon) });
    }
    if est_err == epsilon {
        return Err(DetectError::DomainViolation(
            "|u0_hat - u0| equals eps; both branch denominators vanish".into(),
        ));
    }
    let shift = (u1 - u0_hat).abs();
    if shift <= epsilon {
        return Err(DetectError::DomainViolation(format!(
            "|u1 - u0_hat| must exceed eps, got |{u1} - {u0_hat}| = {shift} <= {epsilon}"
        )));
    }
    let roots = compute_mgf_roots(u0, u0_hat, epsilon)?;
    let r_theta0 = roots.r_minus.min(roots.r_plus);
    Ok(ConditionalBounds::Conditional {
        delay_bound: (h + 1.0) / (shift - epsilon),
        false_alarm_bound: 2.0 * horizon as f64 / (r_theta0 * h).exp(),
        r_theta0,
    })
}
