//! Spherical coordinates and exact log densities for the projected normal
//! (PN) and semi-projected normal (SPN) families.
//!
//! Angles follow the hyperspherical convention: for a direction in `R^p` there
//! are `p - 1` angles, the first `p - 2` in `[0, π]` and the last in `[0, 2π)`.
//! All densities are with respect to `dθ` (the Jacobian of the spherical map is
//! included) and are returned on the log scale.

use std::f64::consts::{PI, TAU};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, cholesky, ln_det, mvn_ln_pdf};
use crate::scalar::Real;
use crate::special;

/// A point on the unit sphere `S^{p-1}`, stored as angles with a cached
/// Cartesian unit vector.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitDirection<T> {
    angles: Vec<T>,
    unit: Vec<T>,
}

impl<T: Real> UnitDirection<T> {
    /// Builds a direction from `p - 1` angles. Interior angles must lie in
    /// `[0, π]`; the last angle is wrapped into `[0, 2π)`.
    pub fn new(mut angles: Vec<T>) -> Result<Self> {
        if angles.is_empty() {
            return Err(Error::domain("a direction needs at least one angle (p >= 2)"));
        }
        if let Some(bad) = angles.iter().find(|a| !a.is_finite()) {
            return Err(Error::domain(format!("non-finite angle {bad:?}")));
        }
        let last = angles.len() - 1;
        for (j, a) in angles[..last].iter().enumerate() {
            if *a < T::zero() || *a > T::lit(PI) {
                return Err(Error::domain(format!(
                    "interior angle {} = {:?} outside [0, pi]",
                    j + 1,
                    a
                )));
            }
        }
        angles[last] = wrap_angle(angles[last]);
        let unit = unit_from_angles(&angles);
        Ok(Self { angles, unit })
    }

    /// Ambient dimension `p`.
    pub fn p(&self) -> usize {
        self.angles.len() + 1
    }

    pub fn angles(&self) -> &[T] {
        &self.angles
    }

    /// Cartesian unit vector `u`.
    pub fn unit(&self) -> &[T] {
        &self.unit
    }

    /// `ln ∏_{j=1}^{p-2} (sin θ_j)^{p-1-j}`; zero for `p = 2`.
    pub fn ln_jacobian(&self) -> T {
        let p = self.p();
        self.angles[..p - 2]
            .iter()
            .enumerate()
            .fold(T::zero(), |acc, (j, a)| acc + T::from_usize_lossy(p - 2 - j) * a.sin().ln())
    }
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_angle<T: Real>(a: T) -> T {
    let tau = T::lit(TAU);
    let mut w = a - (a / tau).floor() * tau;
    if w >= tau || w < T::zero() {
        w = T::zero();
    }
    w
}

fn unit_from_angles<T: Real>(angles: &[T]) -> Vec<T> {
    let p = angles.len() + 1;
    let mut u = Vec::with_capacity(p);
    let mut sin_prod = T::one();
    for a in angles {
        u.push(sin_prod * a.cos());
        sin_prod *= a.sin();
    }
    u.push(sin_prod);
    u
}

/// One directional-linear data point: angles, `q` linear values and an
/// optional latent radius.
#[derive(Debug, Clone, PartialEq)]
pub struct DirLinObservation<T> {
    pub direction: UnitDirection<T>,
    pub linear: Vec<T>,
    pub radius: Option<T>,
}

impl<T: Real> DirLinObservation<T> {
    pub fn new(direction: UnitDirection<T>, linear: Vec<T>, radius: Option<T>) -> Result<Self> {
        if let Some(r) = radius {
            if !(r > T::zero()) || !r.is_finite() {
                return Err(Error::domain(format!("radius must be positive and finite, got {r:?}")));
            }
        }
        if linear.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("linear values must be finite"));
        }
        Ok(Self { direction, linear, radius })
    }

    /// Convenience constructor from raw angles.
    pub fn from_angles(angles: Vec<T>, linear: Vec<T>) -> Result<Self> {
        Self::new(UnitDirection::new(angles)?, linear, None)
    }

    pub fn p(&self) -> usize {
        self.direction.p()
    }

    pub fn q(&self) -> usize {
        self.linear.len()
    }

    pub fn d(&self) -> usize {
        self.p() + self.q()
    }

    /// The augmented vector `z = (r·u, y)` for a given radius.
    pub fn augmented(&self, radius: T) -> DVector<T> {
        let u = self.direction.unit();
        DVector::from_iterator(
            self.d(),
            u.iter().map(|&ui| ui * radius).chain(self.linear.iter().copied()),
        )
    }
}

/// Which block of the augmented covariance is frozen for identifiability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintMode {
    /// `Σ̃[0,0] = 1` (`d1 = 1`).
    #[default]
    UnitFirstEntry,
    /// `Σ_xx = I_p` (`d1 = p`).
    IdentityDirectional,
}

impl ConstraintMode {
    pub fn d1(self, p: usize) -> usize {
        match self {
            ConstraintMode::UnitFirstEntry => 1,
            ConstraintMode::IdentityDirectional => p,
        }
    }

    pub fn from_d1(d1: usize, p: usize) -> Result<Self> {
        if d1 == 1 {
            Ok(ConstraintMode::UnitFirstEntry)
        } else if d1 == p {
            Ok(ConstraintMode::IdentityDirectional)
        } else {
            Err(Error::Unsupported(format!("frozen block size d1 = {d1} with p = {p}; expected 1 or p")))
        }
    }
}

/// Mean and covariance of the augmented `(p+q)`-variate normal.
#[derive(Debug, Clone)]
pub struct SpnParams<T: Real> {
    mean: DVector<T>,
    covariance: DMatrix<T>,
    chol: Cholesky<T, Dyn>,
    p: usize,
    mode: ConstraintMode,
}

const CONSTRAINT_TOL: f64 = 1e-12;

impl<T: Real> SpnParams<T> {
    pub fn new(mean: DVector<T>, covariance: DMatrix<T>, p: usize, mode: ConstraintMode) -> Result<Self> {
        let d = mean.len();
        if p < 2 || d < p {
            return Err(Error::domain(format!("need p >= 2 and d >= p, got p = {p}, d = {d}")));
        }
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(Error::domain(format!(
                "covariance is {}x{}, mean has length {d}",
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        let scale = covariance.iter().fold(1.0f64, |m, v| m.max(v.f64().abs()));
        if !linalg::is_symmetric(&covariance, CONSTRAINT_TOL * scale) {
            return Err(Error::domain("covariance is not symmetric"));
        }
        let chol = cholesky(&covariance, "covariance")?;
        let d1 = mode.d1(p);
        let block = covariance.view((0, 0), (d1, d1)).into_owned();
        if !linalg::is_identity(&block, CONSTRAINT_TOL) {
            return Err(Error::domain(format!(
                "constrained block ({mode:?}) is not the identity within {CONSTRAINT_TOL:e}"
            )));
        }
        Ok(Self { mean, covariance, chol, p, mode })
    }

    pub fn mean(&self) -> &DVector<T> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<T> {
        &self.covariance
    }

    pub fn cholesky(&self) -> &Cholesky<T, Dyn> {
        &self.chol
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.mean.len() - self.p
    }

    pub fn mode(&self) -> ConstraintMode {
        self.mode
    }

    pub fn mu_x(&self) -> DVector<T> {
        self.mean.rows(0, self.p).into_owned()
    }

    pub fn mu_y(&self) -> DVector<T> {
        self.mean.rows(self.p, self.q()).into_owned()
    }

    pub fn sigma_xx(&self) -> DMatrix<T> {
        self.covariance.view((0, 0), (self.p, self.p)).into_owned()
    }

    pub fn sigma_xy(&self) -> DMatrix<T> {
        self.covariance.view((0, self.p), (self.p, self.q())).into_owned()
    }

    pub fn sigma_yy(&self) -> DMatrix<T> {
        self.covariance.view((self.p, self.p), (self.q(), self.q())).into_owned()
    }
}

/// Law of `x | y` for the augmented normal.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalGaussian<T: Real> {
    pub mean: DVector<T>,
    pub covariance: DMatrix<T>,
}

/// `Q₁ = μᵀΣ⁻¹μ`, `Q₂ = μᵀΣ⁻¹u`, `Q₃ = uᵀΣ⁻¹u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PnQuadratics<T> {
    pub q1: T,
    pub q2: T,
    pub q3: T,
}

impl<T: Real> PnQuadratics<T> {
    pub fn compute(u: &[T], mean: &DVector<T>, chol: &Cholesky<T, Dyn>) -> Self {
        let l = chol.l_dirty();
        let a = l.solve_lower_triangular(mean).expect("nonzero diagonal");
        let b = l
            .solve_lower_triangular(&DVector::from_column_slice(u))
            .expect("nonzero diagonal");
        Self { q1: a.norm_squared(), q2: a.dot(&b), q3: b.norm_squared() }
    }
}

/// `x = r·u(θ)`.
pub fn spherical_to_cartesian<T: Real>(radius: T, direction: &UnitDirection<T>) -> Result<DVector<T>> {
    if !(radius > T::zero()) || !radius.is_finite() {
        return Err(Error::domain(format!("radius must be positive, got {radius:?}")));
    }
    Ok(DVector::from_iterator(direction.p(), direction.unit().iter().map(|&u| u * radius)))
}

/// Inverse of [`spherical_to_cartesian`].
pub fn cartesian_to_spherical<T: Real>(x: &[T]) -> Result<(T, UnitDirection<T>)> {
    let p = x.len();
    if p < 2 {
        return Err(Error::domain(format!("need p >= 2 coordinates, got {p}")));
    }
    // tail[j] = ‖x_{j..p}‖
    let mut tail = vec![T::zero(); p + 1];
    for j in (0..p).rev() {
        tail[j] = tail[j + 1].hypot(x[j]);
    }
    let r = tail[0];
    if !(r > T::zero()) || !r.is_finite() {
        return Err(Error::domain("cannot take the direction of a zero or non-finite vector"));
    }
    let mut angles = Vec::with_capacity(p - 1);
    for j in 0..p - 2 {
        angles.push(tail[j + 1].atan2(x[j]));
    }
    angles.push(x[p - 1].atan2(x[p - 2]));
    Ok((r, UnitDirection::new(angles)?))
}

/// `κ_p(x) = ∫₀^∞ r^{p-1} exp{-(r-x)²/2} dr`.
pub fn kappa<T: Real>(p: usize, x: T) -> Result<T> {
    special::kappa(p, x.f64()).map(T::lit)
}

/// `ln κ_p(x)`, finite far into the negative tail.
pub fn ln_kappa<T: Real>(p: usize, x: T) -> Result<T> {
    special::ln_kappa_t(p, x)
}

/// Log density of `PN_p(μ, Σ)` at `θ`, with respect to `dθ`.
pub fn pn_log_density<T: Real>(direction: &UnitDirection<T>, mean: &DVector<T>, covariance: &DMatrix<T>) -> Result<T> {
    let p = direction.p();
    if mean.len() != p || covariance.nrows() != p {
        return Err(Error::domain(format!(
            "direction has p = {p}, mean has {}, covariance is {}x{}",
            mean.len(),
            covariance.nrows(),
            covariance.ncols()
        )));
    }
    let chol = cholesky(covariance, "PN covariance")?;
    pn_ln_pdf_chol(direction, mean, &chol)
}

pub(crate) fn pn_ln_pdf_chol<T: Real>(direction: &UnitDirection<T>, mean: &DVector<T>, chol: &Cholesky<T, Dyn>) -> Result<T> {
    let p = direction.p();
    let q = PnQuadratics::compute(direction.unit(), mean, chol);
    let x = q.q2 / q.q3.sqrt();
    // ln κ_p(x) - ½(Q₁ - x²) = ln I_p(x) - ½Q₁ with I_p the shifted integral.
    let ln_i = special::ln_kappa_shifted(p, x.f64())?;
    let pf = T::from_usize_lossy(p);
    let half = T::lit(0.5);
    Ok(-half * (pf * T::lit(TAU.ln()) + ln_det(chol)) - half * pf * q.q3.ln() - half * q.q1
        + T::lit(ln_i)
        + direction.ln_jacobian())
}

/// Log of the joint density of `(r, θ)` for `x ~ N_p(μ, Σ)`.
pub fn pn_joint_log_density<T: Real>(
    radius: T,
    direction: &UnitDirection<T>,
    mean: &DVector<T>,
    covariance: &DMatrix<T>,
) -> Result<T> {
    let chol = cholesky(covariance, "PN covariance")?;
    pn_joint_ln_pdf_chol(radius, direction, mean, &chol)
}

fn pn_joint_ln_pdf_chol<T: Real>(radius: T, direction: &UnitDirection<T>, mean: &DVector<T>, chol: &Cholesky<T, Dyn>) -> Result<T> {
    let x = spherical_to_cartesian(radius, direction)?;
    let p = direction.p();
    Ok(mvn_ln_pdf(&x, mean, chol) + T::from_usize_lossy(p - 1) * radius.ln() + direction.ln_jacobian())
}

/// Conditional law of the directional block given the linear block.
pub fn condition_on_linear<T: Real>(params: &SpnParams<T>, linear: &[T]) -> Result<ConditionalGaussian<T>> {
    let q = params.q();
    if q == 0 {
        return Err(Error::domain("conditioning requires q >= 1 linear components"));
    }
    if linear.len() != q {
        return Err(Error::domain(format!("expected {q} linear values, got {}", linear.len())));
    }
    let syy = params.sigma_yy();
    let chol_yy = cholesky(&syy, "Sigma_yy")?;
    let syx = params.sigma_xy().transpose();
    // Σ_yy⁻¹ Σ_yx, q×p
    let gain_t = chol_yy.solve(&syx);
    let resid = DVector::from_column_slice(linear) - params.mu_y();
    let mean = params.mu_x() + gain_t.tr_mul(&resid);
    let mut covariance = params.sigma_xx() - gain_t.tr_mul(&syx);
    linalg::symmetrize(&mut covariance);
    Ok(ConditionalGaussian { mean, covariance })
}

/// Log density of the SPN at `(θ, y)`, marginal over the radius.
pub fn spn_log_density<T: Real>(obs: &DirLinObservation<T>, params: &SpnParams<T>) -> Result<T> {
    check_dims(obs, params)?;
    if params.q() == 0 {
        return pn_log_density(&obs.direction, &params.mu_x(), &params.sigma_xx());
    }
    let cond = condition_on_linear(params, &obs.linear)?;
    let chol_y = cholesky(&params.sigma_yy(), "Sigma_yy")?;
    let y = DVector::from_column_slice(&obs.linear);
    Ok(pn_log_density(&obs.direction, &cond.mean, &cond.covariance)? + mvn_ln_pdf(&y, &params.mu_y(), &chol_y))
}

/// Log density of `(r, θ, y)`; requires the observation to carry a radius.
pub fn joint_rty_log_density<T: Real>(obs: &DirLinObservation<T>, params: &SpnParams<T>) -> Result<T> {
    check_dims(obs, params)?;
    let radius = obs
        .radius
        .ok_or_else(|| Error::domain("joint (r, theta, y) density needs a radius"))?;
    if params.q() == 0 {
        return pn_joint_log_density(radius, &obs.direction, &params.mu_x(), &params.sigma_xx());
    }
    let cond = condition_on_linear(params, &obs.linear)?;
    let chol_y = cholesky(&params.sigma_yy(), "Sigma_yy")?;
    let y = DVector::from_column_slice(&obs.linear);
    Ok(pn_joint_log_density(radius, &obs.direction, &cond.mean, &cond.covariance)?
        + mvn_ln_pdf(&y, &params.mu_y(), &chol_y))
}

fn check_dims<T: Real>(obs: &DirLinObservation<T>, params: &SpnParams<T>) -> Result<()> {
    if obs.p() != params.p() || obs.q() != params.q() {
        return Err(Error::domain(format!(
            "observation has (p, q) = ({}, {}), parameters have ({}, {})",
            obs.p(),
            obs.q(),
            params.p(),
            params.q()
        )));
    }
    Ok(())
}
