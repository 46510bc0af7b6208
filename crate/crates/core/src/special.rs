//! Special functions: normal CDF on log scale, log-gamma, log-sum-exp and the
//! radial moment integral `κ_p(x) = ∫₀^∞ r^{p-1} exp{-(r-x)²/2} dr`.
//!
//! Everything here is evaluated in `f64`; the generic wrappers narrow at the end.

use std::f64::consts::{PI, SQRT_2};

use libm::erfc;

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Below this point `erfc(-x/√2)` underflows and the continued fraction takes over.
const ERFC_UNDERFLOW: f64 = -37.0;

/// Forward recursion is used for `x` above this; below it the ratio continued
/// fraction avoids the cancellation in `x·κ_{p-1} + (p-2)·κ_{p-2}`.
const FORWARD_CUTOFF: f64 = -3.0;

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// `ln Φ(x)` for the standard normal CDF.
pub fn ln_normal_cdf(x: f64) -> f64 {
    if x > 5.0 {
        (-0.5 * erfc(x / SQRT_2)).ln_1p()
    } else if x >= ERFC_UNDERFLOW {
        (0.5 * erfc(-x / SQRT_2)).ln()
    } else {
        -0.5 * x * x - LN_SQRT_2PI + ln_mills_ratio(-x)
    }
}

/// `ln R(t)` where `R(t) = Φ(-t)/φ(t)` is the Mills ratio, for `t ≥ 0`.
pub fn ln_mills_ratio(t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if t < 3.0 {
        (0.5 * erfc(t / SQRT_2)).ln() + 0.5 * t * t + LN_SQRT_2PI
    } else {
        let tail = continued_fraction_tail(t, 2, 2);
        -(t + tail).ln()
    }
}

/// Evaluates `ρ_k = (k-1)/(t + ρ_{k+1})` from a deep starting index down to `k = from`.
/// Returns `ρ_from`.
fn continued_fraction_tail(t: f64, from: usize, extra: usize) -> f64 {
    let depth = from + extra + cf_depth(t);
    let mut rho = 0.0;
    for k in (from..=depth).rev() {
        rho = (k as f64 - 1.0) / (t + rho);
    }
    rho
}

fn cf_depth(t: f64) -> usize {
    // Convergence slows as t → 0; t ≥ 3 here in practice.
    (60.0 + 2400.0 / (t * t)).min(4000.0) as usize
}

/// `ln κ_p(x)`.
pub fn ln_kappa(p: usize, x: f64) -> Result<f64> {
    if p >= 1 && x >= FORWARD_CUTOFF && x.is_finite() {
        return Ok(forward_ln_kappa(p, x));
    }
    Ok(ln_kappa_shifted(p, x)? - 0.5 * x * x)
}

/// `κ_p(x)` on the linear scale. Underflows to zero for very negative `x`.
pub fn kappa(p: usize, x: f64) -> Result<f64> {
    ln_kappa(p, x).map(f64::exp)
}

/// `ln κ_p(x) + x²/2`, i.e. the log of `∫₀^∞ r^{p-1} exp{-r²/2 + x r} dr`.
///
/// This is the form the projected normal density needs; it stays finite far
/// into the negative tail where `κ_p` itself underflows.
pub fn ln_kappa_shifted(p: usize, x: f64) -> Result<f64> {
    if p < 1 {
        return Err(Error::domain(format!("kappa order must be >= 1, got {p}")));
    }
    if !x.is_finite() {
        return Err(Error::domain(format!("kappa argument must be finite, got {x}")));
    }
    if x >= FORWARD_CUTOFF {
        Ok(forward_ln_kappa(p, x) + 0.5 * x * x)
    } else {
        Ok(ratio_ln_kappa_shifted(p, -x))
    }
}

fn forward_ln_kappa(p: usize, x: f64) -> f64 {
    let k1 = ln_normal_cdf(x) + 0.5 * (2.0 * PI).ln();
    if p == 1 {
        return k1;
    }
    if x > 1.0 {
        // Scaled recursion J_k = κ_k / x^{k-1}: J_k = J_{k-1} + (k-2)/x² · J_{k-2}.
        let inv_x2 = 1.0 / (x * x);
        let mut prev = k1.exp();
        let mut cur = (-0.5 * x * x).exp() / x + prev;
        for k in 3..=p {
            let next = cur + (k as f64 - 2.0) * inv_x2 * prev;
            prev = cur;
            cur = next;
        }
        return cur.ln() + (p as f64 - 1.0) * x.ln();
    }
    let mut prev = k1.exp();
    let mut cur = (-0.5 * x * x).exp() + x * prev;
    for k in 3..=p {
        let next = x * cur + (k as f64 - 2.0) * prev;
        prev = cur;
        cur = next;
    }
    cur.ln()
}

/// Shifted integral for `x = -t`, `t > 0`, via `I_1 = R(t)` and the ratios
/// `ρ_k = I_k / I_{k-1} = (k-1)/(t + ρ_{k+1})`.
fn ratio_ln_kappa_shifted(p: usize, t: f64) -> f64 {
    let depth = p + cf_depth(t);
    let mut rho = 0.0;
    let mut ln_ratios = 0.0;
    for k in (2..=depth).rev() {
        rho = (k as f64 - 1.0) / (t + rho);
        if k <= p {
            ln_ratios += rho.ln();
        }
    }
    let ln_i1 = if t < 5.0 {
        ln_mills_ratio(t)
    } else {
        -(t + rho).ln()
    };
    ln_i1 + ln_ratios
}

/// Generic front end over [`ln_kappa`].
pub fn ln_kappa_t<T: Real>(p: usize, x: T) -> Result<T> {
    ln_kappa(p, x.f64()).map(T::lit)
}

pub fn log_sum_exp<T: Real>(values: &[T]) -> T {
    let max = values
        .iter()
        .copied()
        .fold(T::lit(f64::NEG_INFINITY), |a, b| if b > a { b } else { a });
    if !max.is_finite() {
        return max;
    }
    let sum = values.iter().fold(T::zero(), |acc, &v| acc + (v - max).exp());
    max + sum.ln()
}

/// `ln(exp(a) + exp(b))`.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}
