//! Latent radius draws from `f(r | θ, y) ∝ r^{p-1} exp{-½Q₃*(r - Q₂*/Q₃*)²}`.
//!
//! A uniform auxiliary `v` turns the conditional into a slice: given `v` the
//! radius has density `∝ r^{p-1}` on `(η₁, η₂)` and is drawn by inverting its
//! CDF. Everything runs on `ln v` so that strongly drifted conditionals, where
//! `v` itself underflows, stay finite.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::Open01;

use crate::directional::{DirLinObservation, SpnParams};
use crate::error::{Error, Result};
use crate::linalg::{chol_in_place, cholesky};
use crate::scalar::Real;

/// Above this endpoint ratio the power difference is formed via `expm1`.
const CLOSE_ENDPOINTS: f64 = 0.99;

/// Everything one slice transition touched.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiusSliceState {
    pub q2_star: f64,
    pub q3_star: f64,
    pub log_v: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub w: f64,
    pub s: f64,
    pub radius: f64,
}

/// `(Q₂*, Q₃*)` of the radius conditional: `μ_{x|y}ᵀΣ_{x|y}⁻¹u` and `uᵀΣ_{x|y}⁻¹u`.
pub fn conditional_quadratics<T: Real>(obs: &DirLinObservation<T>, params: &SpnParams<T>) -> Result<(T, T)> {
    let kernel = RadiusKernel::new(params)?;
    if obs.p() != kernel.p || obs.q() != kernel.q {
        return Err(Error::domain(format!(
            "observation has (p, q) = ({}, {}), parameters have ({}, {})",
            obs.p(),
            obs.q(),
            kernel.p,
            kernel.q
        )));
    }
    let mut scratch = vec![T::zero(); kernel.p];
    Ok(kernel.quadratics(obs.direction.unit(), &obs.linear, &mut scratch))
}

/// One slice transition from `r_current` under `params`.
pub fn sample_radius<T: Real, R: Rng + ?Sized>(
    obs: &DirLinObservation<T>,
    params: &SpnParams<T>,
    r_current: T,
    rng: &mut R,
) -> Result<T> {
    if !(r_current > T::zero()) || !r_current.is_finite() {
        return Err(Error::domain(format!("current radius must be positive, got {r_current:?}")));
    }
    let (q2, q3) = conditional_quadratics(obs, params)?;
    let state = slice_transition(obs.p(), q2.f64(), q3.f64(), r_current.f64(), rng);
    Ok(T::lit(state.radius))
}

/// The two-block scan `v | r`, then `r | v`, for given quadratics.
pub fn slice_transition<R: Rng + ?Sized>(p: usize, q2: f64, q3: f64, r_current: f64, rng: &mut R) -> RadiusSliceState {
    debug_assert!(q3 > 0.0 && r_current > 0.0 && p >= 1);
    let m = q2 / q3;
    let s: f64 = rng.sample(Open01);
    let dev = r_current - m;
    let log_v = s.ln() - 0.5 * q3 * dev * dev;
    let half = (-2.0 * log_v / q3).sqrt();
    let eta1 = m + (-m).max(-half);
    let eta2 = m + half;
    let w: f64 = rng.sample(Open01);
    let radius = invert_power_cdf(p, eta1, eta2, w);
    RadiusSliceState { q2_star: q2, q3_star: q3, log_v, eta1, eta2, w, s, radius }
}

/// `[(η₂ᵖ - η₁ᵖ)w + η₁ᵖ]^{1/p}` evaluated as `η₂·[1 - (1-w)(1-tᵖ)]^{1/p}`, `t = η₁/η₂`.
fn invert_power_cdf(p: usize, eta1: f64, eta2: f64, w: f64) -> f64 {
    let pf = p as f64;
    if eta1 <= 0.0 {
        return eta2 * w.powf(1.0 / pf);
    }
    let t = eta1 / eta2;
    let one_minus_tp = if t > CLOSE_ENDPOINTS { -(pf * t.ln()).exp_m1() } else { 1.0 - t.powf(pf) };
    eta2 * ((-(1.0 - w) * one_minus_tp).ln_1p() / pf).exp()
}

/// Per-cluster precomputation: for every observation in the cluster
/// `μ_{x|y} = μ_x + G(y - μ_y)` shares `G` and `Σ_{x|y}`.
#[derive(Debug, Clone)]
pub struct RadiusKernel<T> {
    p: usize,
    q: usize,
    mu_x: Vec<T>,
    mu_y: Vec<T>,
    /// `Σ_xy Σ_yy⁻¹`, row-major `p×q`.
    gain: Vec<T>,
    /// Lower Cholesky factor of `Σ_{x|y}`, row-major `p×p`.
    chol: Vec<T>,
}

impl<T: Real> RadiusKernel<T> {
    pub fn new(params: &SpnParams<T>) -> Result<Self> {
        let (p, q) = (params.p(), params.q());
        let sxx = params.sigma_xx();
        let (gain, cond) = if q == 0 {
            (Vec::new(), sxx)
        } else {
            let chol_yy = cholesky(&params.sigma_yy(), "Sigma_yy")?;
            let syx = params.sigma_xy().transpose();
            let gain_t = chol_yy.solve(&syx);
            let mut cond = sxx - gain_t.tr_mul(&syx);
            crate::linalg::symmetrize(&mut cond);
            (crate::linalg::to_flat(&gain_t.transpose()), cond)
        };
        let mut chol = crate::linalg::to_flat(&cond);
        if !chol_in_place(&mut chol, p) {
            return Err(Error::NotPositiveDefinite {
                what: "conditional covariance Sigma_x|y".into(),
                condition: crate::linalg::condition_number(&cond),
            });
        }
        Ok(Self {
            p,
            q,
            mu_x: params.mu_x().iter().copied().collect(),
            mu_y: params.mu_y().iter().copied().collect(),
            gain,
            chol,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// `(Q₂*, Q₃*)` for unit vector `u` and linear part `y`; `scratch` holds `2p`.
    pub fn quadratics(&self, u: &[T], y: &[T], scratch: &mut [T]) -> (T, T) {
        let p = self.p;
        let mut buf = [T::zero(); 16];
        let (a, b) = if p <= 8 {
            let (a, b) = buf.split_at_mut(8);
            (&mut a[..p], &mut b[..p])
        } else {
            let (a, b) = scratch.split_at_mut(p);
            (a, &mut b[..p])
        };
        for i in 0..p {
            let mut m = self.mu_x[i];
            for j in 0..self.q {
                m += self.gain[i * self.q + j] * (y[j] - self.mu_y[j]);
            }
            a[i] = m;
            b[i] = u[i];
        }
        // Forward-solve both right-hand sides against L.
        let (mut q2, mut q3) = (T::zero(), T::zero());
        for i in 0..p {
            let (mut sa, mut sb) = (a[i], b[i]);
            for k in 0..i {
                let l = self.chol[i * p + k];
                sa -= l * a[k];
                sb -= l * b[k];
            }
            let diag = self.chol[i * p + i];
            a[i] = sa / diag;
            b[i] = sb / diag;
            q2 += a[i] * b[i];
            q3 += b[i] * b[i];
        }
        (q2, q3)
    }

    /// Conditional mean `μ_{x|y}`; used by tests and diagnostics.
    pub fn conditional_mean(&self, y: &[T]) -> DVector<T> {
        DVector::from_fn(self.p, |i, _| {
            (0..self.q).fold(self.mu_x[i], |m, j| m + self.gain[i * self.q + j] * (y[j] - self.mu_y[j]))
        })
    }
}
