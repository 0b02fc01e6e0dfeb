//! Power-law curve fitting: least squares for `y ~= a * t^b + c`.
//!
//! The exponent is the only nonlinear parameter: for fixed `b`, the best
//! `(a, c)` solve a 2x2 linear system in closed form, which reduces the
//! problem to a damped Gauss-Newton iteration over `b` alone, multi-started
//! across `b in {0.1, 0.2, ..., 1.0}` to dodge local optima. Long series
//! are subsampled to at most 2000 log-spaced points before fitting.

use super::BenchError;

const B_LO: f64 = 1e-3;
const B_HI: f64 = 2.0;
const MAX_POINTS: usize = 2_000;
const SUBSAMPLE_ABOVE: usize = 100_000;

/// Fitted `a * t^b + c` model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Euclidean norm of residuals at the returned optimum (over the
    /// fitted points).
    pub residual_norm: f64,
    pub converged: bool,
    /// Constant data (amplitude unidentifiable) or exponent pinned at a
    /// bracket edge.
    pub degenerate: bool,
}

struct BCandidate {
    a: f64,
    c: f64,
    sse: f64,
}

/// Closed-form least squares for (a, c) at exponent `b`, writing the basis
/// values `t^b` into `basis` for reuse. One `exp` per point. Falls back to
/// a pure constant when the basis is singular.
fn evaluate_exponent(ln_ts: &[f64], ys: &[f64], b: f64, basis: &mut [f64]) -> BCandidate {
    let n = ln_ts.len() as f64;
    let mut suu = 0.0;
    let mut su = 0.0;
    let mut suy = 0.0;
    let mut sy = 0.0;
    for ((&lt, &y), u) in ln_ts.iter().zip(ys).zip(basis.iter_mut()) {
        let v = (b * lt).exp();
        *u = v;
        suu += v * v;
        su += v;
        suy += v * y;
        sy += y;
    }
    let det = suu * n - su * su;
    let (a, c) = if det.abs() < 1e-12 * suu.max(1.0) * n {
        (0.0, sy / n)
    } else {
        ((suy * n - su * sy) / det, (suu * sy - su * suy) / det)
    };
    let mut sse = 0.0;
    for ((&u, &y), _) in basis.iter().zip(ys).zip(ln_ts) {
        let r = a * u + c - y;
        sse += r * r;
    }
    BCandidate { a, c, sse }
}

fn gauss_newton_from(ln_ts: &[f64], ys: &[f64], b0: f64) -> (f64, f64, f64, f64, bool) {
    let n = ln_ts.len();
    let mut basis = vec![0.0; n];
    let mut basis_try = vec![0.0; n];
    let mut b = b0;
    let mut cur = evaluate_exponent(ln_ts, ys, b, &mut basis);
    let mut converged = false;
    for _ in 0..200 {
        // Jacobian of the residual wrt b at the current (a, c), reusing
        // the cached basis values.
        let mut jr = 0.0;
        let mut jj = 0.0;
        for ((&u, &y), &lt) in basis.iter().zip(ys).zip(ln_ts) {
            let j = cur.a * u * lt;
            let r = cur.a * u + cur.c - y;
            jr += j * r;
            jj += j * j;
        }
        if jj <= 1e-300 {
            // Amplitude is (numerically) zero: b is unidentifiable.
            break;
        }
        let full_step = -jr / jj;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let b_try = (b + lambda * full_step).clamp(B_LO, B_HI);
            let cand = evaluate_exponent(ln_ts, ys, b_try, &mut basis_try);
            if cand.sse <= cur.sse {
                let moved = (b_try - b).abs();
                b = b_try;
                cur = cand;
                std::mem::swap(&mut basis, &mut basis_try);
                accepted = true;
                if moved < 1e-13 * b.abs().max(1.0) {
                    converged = true;
                }
                break;
            }
            lambda *= 0.5;
        }
        if !accepted || converged {
            converged = true;
            break;
        }
    }
    (cur.a, b, cur.c, cur.sse, converged)
}

fn log_spaced_indices(len: usize) -> Vec<usize> {
    let mut idx = Vec::with_capacity(MAX_POINTS);
    let ratio = (len as f64).ln() / (MAX_POINTS - 1) as f64;
    let mut last = usize::MAX;
    for i in 0..MAX_POINTS {
        let pos = ((i as f64 * ratio).exp().round() as usize).clamp(1, len) - 1;
        if pos != last {
            idx.push(pos);
            last = pos;
        }
    }
    if *idx.last().expect("nonempty") != len - 1 {
        idx.push(len - 1);
    }
    idx
}

/// Fits `series[t-1] ~= a * t^b + c` for `t = 1..=len`.
pub fn fit_power_law(series: &[f64]) -> Result<FitResult, BenchError> {
    if series.len() < 8 {
        return Err(BenchError::SeriesTooShort(series.len()));
    }
    if let Some(bad) = series.iter().position(|x| !x.is_finite()) {
        return Err(BenchError::NonFiniteValue(bad));
    }
    let (ts, ys): (Vec<f64>, Vec<f64>) = if series.len() > SUBSAMPLE_ABOVE {
        log_spaced_indices(series.len())
            .into_iter()
            .map(|i| ((i + 1) as f64, series[i]))
            .unzip()
    } else {
        series.iter().enumerate().map(|(i, &y)| ((i + 1) as f64, y)).unzip()
    };

    let lo = ys.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 1e-12 * (1.0 + hi.abs()) {
        // Constant series: amplitude zero, exponent unidentifiable.
        let c = ys.iter().sum::<f64>() / ys.len() as f64;
        let sse: f64 = ys.iter().map(|y| (y - c) * (y - c)).sum();
        return Ok(FitResult {
            a: 0.0,
            b: 0.0,
            c,
            residual_norm: sse.sqrt(),
            converged: true,
            degenerate: true,
        });
    }

    let ln_ts: Vec<f64> = ts.iter().map(|&t| t.ln()).collect();
    let mut best: Option<(f64, f64, f64, f64, bool)> = None;
    for i in 1..=10 {
        let b0 = f64::from(i) * 0.1;
        let out = gauss_newton_from(&ln_ts, &ys, b0);
        if best.is_none_or(|(_, _, _, sse, _)| out.3 < sse) {
            best = Some(out);
        }
    }
    let (a, b, c, sse, converged) = best.expect("multi-start produced a candidate");
    let at_edge = (b - B_LO).abs() < 1e-6 || (b - B_HI).abs() < 1e-6;
    Ok(FitResult {
        a,
        b,
        c,
        residual_norm: sse.sqrt(),
        converged,
        degenerate: at_edge,
    })
}
