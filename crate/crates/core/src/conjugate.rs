//! Normal conditional inverse-Wishart (NCIW) prior for the augmented normal.
//!
//! The covariance is reparameterized as `(Σ₁₁, B = Σ₁₁⁻¹Σ₁₂, Σ₂₂·₁)` where
//! `Σ₂₂·₁ = Σ₂₂ - Σ₂₁Σ₁₁⁻¹Σ₁₂`. With `Σ₁₁` frozen, the remaining blocks follow
//!
//! ```text
//! Σ₂₂·₁        ~ IW(S₂₂·₁, ν)
//! vec(B) | Σ₂₂·₁ ~ N(vec(S₁₁⁻¹S₁₂), Σ₂₂·₁ ⊗ S₁₁⁻¹)
//! ```
//!
//! and the mean is `N(μ₀, Σ̃/λ₀)`. The prior is conjugate to the augmented
//! normal likelihood, so cluster marginals are available in closed form.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::directional::{ConstraintMode, SpnParams};
use crate::error::{Error, Result};
use crate::linalg::{self, chol_in_place, cholesky, flat_ln_det, ln_det};
use crate::scalar::Real;
use crate::special::ln_gamma;

const LN_2: f64 = std::f64::consts::LN_2;
const LN_PI: f64 = 1.144_729_885_849_400_2;
pub(crate) const JITTER: f64 = 1e-9;

/// Hyperparameters `Ψ = (μ₀, λ₀, S₀, ν₀)` with the partition `(d₁, d₂)` and
/// the frozen `d₁×d₁` block.
#[derive(Debug, Clone, PartialEq)]
pub struct NciwHyper<T: Real> {
    pub mu0: DVector<T>,
    pub lambda0: T,
    pub s0: DMatrix<T>,
    pub nu0: T,
    pub d1: usize,
    pub fixed_block: DMatrix<T>,
}

impl<T: Real> NciwHyper<T> {
    pub fn new(mu0: DVector<T>, lambda0: T, s0: DMatrix<T>, nu0: T, d1: usize, fixed_block: DMatrix<T>) -> Result<Self> {
        let d = mu0.len();
        if d == 0 {
            return Err(Error::domain("hyperparameter dimension must be positive"));
        }
        if s0.nrows() != d || s0.ncols() != d {
            return Err(Error::domain(format!("S0 is {}x{}, mu0 has length {d}", s0.nrows(), s0.ncols())));
        }
        if d1 < 1 || d1 > d {
            return Err(Error::domain(format!("d1 = {d1} must lie in [1, {d}]")));
        }
        if fixed_block.nrows() != d1 || fixed_block.ncols() != d1 {
            return Err(Error::domain(format!("fixed block must be {d1}x{d1}")));
        }
        if !(lambda0 > T::zero()) || !lambda0.is_finite() {
            return Err(Error::domain(format!("lambda0 must be positive, got {lambda0:?}")));
        }
        if !(nu0 > T::from_usize_lossy(d + 1)) || !nu0.is_finite() {
            return Err(Error::domain(format!("nu0 = {nu0:?} must exceed d + 1 = {}", d + 1)));
        }
        if !linalg::is_symmetric(&s0, 1e-12) {
            return Err(Error::domain("S0 is not symmetric"));
        }
        cholesky(&s0, "S0")?;
        cholesky(&fixed_block, "fixed block")?;
        Ok(Self { mu0, lambda0, s0, nu0, d1, fixed_block })
    }

    /// `μ₀ = 0, λ₀ = 1, ν₀ = d + 2, S₀ = I`, frozen block `I_{d₁}`.
    pub fn default_for(d: usize, d1: usize) -> Result<Self> {
        Self::new(
            DVector::zeros(d),
            T::one(),
            DMatrix::identity(d, d),
            T::from_usize_lossy(d + 2),
            d1,
            DMatrix::identity(d1, d1),
        )
    }

    pub fn d(&self) -> usize {
        self.mu0.len()
    }

    pub fn d2(&self) -> usize {
        self.d() - self.d1
    }

    fn blocks(&self) -> (DMatrix<T>, DMatrix<T>, DMatrix<T>) {
        let (d1, d2) = (self.d1, self.d2());
        (
            self.s0.view((0, 0), (d1, d1)).into_owned(),
            self.s0.view((0, d1), (d1, d2)).into_owned(),
            self.s0.view((d1, d1), (d2, d2)).into_owned(),
        )
    }

    /// Conjugate update with the statistics of `n` observations.
    pub fn posterior(&self, stats: &SufficientStats<T>) -> Result<Self> {
        if stats.dim() != self.d() {
            return Err(Error::domain(format!("stats have dimension {}, hyper has {}", stats.dim(), self.d())));
        }
        if stats.count == 0 {
            return Ok(self.clone());
        }
        let n = T::from_usize_lossy(stats.count);
        let lambda_n = self.lambda0 + n;
        let mu_n = (&self.mu0 * self.lambda0 + &stats.sum) / lambda_n;
        let mut s_n = &self.s0 + &stats.scatter - &mu_n * mu_n.transpose() * lambda_n
            + &self.mu0 * self.mu0.transpose() * self.lambda0;
        linalg::symmetrize(&mut s_n);
        cholesky(&s_n, "posterior scale S_n")?;
        Ok(Self {
            mu0: mu_n,
            lambda0: lambda_n,
            s0: s_n,
            nu0: self.nu0 + n,
            d1: self.d1,
            fixed_block: self.fixed_block.clone(),
        })
    }

    /// Draw `Σ̃` from the CIW with the frozen block in place.
    pub fn sample_ciw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<CiwDraw<T>> {
        let (d1, d2) = (self.d1, self.d2());
        let d = self.d();
        if d2 == 0 {
            return Ok(CiwDraw {
                covariance: self.fixed_block.clone(),
                regression: DMatrix::zeros(d1, 0),
                schur: DMatrix::zeros(0, 0),
            });
        }
        let (s11, s12, s22) = self.blocks();
        let chol11 = cholesky(&s11, "S11")?;
        let center = chol11.solve(&s12);
        let mut s22_1 = &s22 - s12.tr_mul(&center);
        linalg::symmetrize(&mut s22_1);
        let schur = sample_inverse_wishart(&s22_1, self.nu0, rng)?;

        // B = S₁₁⁻¹S₁₂ + A Z Cᵀ with AAᵀ = S₁₁⁻¹ and CCᵀ = Σ₂₂·₁.
        let row_root = cholesky(&chol11.inverse(), "S11 inverse")?.l();
        let col_root = cholesky(&schur, "Sigma22.1")?.l();
        let z = standard_normal_matrix(d1, d2, rng);
        let regression = &center + &row_root * z * col_root.transpose();

        let fb = &self.fixed_block * &regression;
        let mut sigma22 = &schur + regression.tr_mul(&fb);
        linalg::symmetrize(&mut sigma22);
        let mut covariance = DMatrix::zeros(d, d);
        covariance.view_mut((0, 0), (d1, d1)).copy_from(&self.fixed_block);
        covariance.view_mut((0, d1), (d1, d2)).copy_from(&fb);
        covariance.view_mut((d1, 0), (d2, d1)).copy_from(&fb.transpose());
        covariance.view_mut((d1, d1), (d2, d2)).copy_from(&sigma22);
        Ok(CiwDraw { covariance, regression, schur })
    }

    /// Draw `(μ̃, Σ̃)` from the NCIW.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(DVector<T>, CiwDraw<T>)> {
        let draw = self.sample_ciw(rng)?;
        let chol = cholesky(&draw.covariance, "sampled covariance")?;
        let z = standard_normal_vector(self.d(), rng);
        let mean = &self.mu0 + chol.l() * z / self.lambda0.sqrt();
        Ok((mean, draw))
    }

    /// Draw SPN parameters for a directional block of dimension `p`.
    pub fn sample_params<R: Rng + ?Sized>(&self, p: usize, rng: &mut R) -> Result<SpnParams<T>> {
        let mode = ConstraintMode::from_d1(self.d1, p)?;
        let (mean, draw) = self.sample(rng)?;
        SpnParams::new(mean, draw.covariance, p, mode)
    }

    /// Posterior-mean point estimate `(E[μ̃], E[Σ̃])` packed as SPN parameters.
    pub fn mean_params(&self, p: usize) -> Result<SpnParams<T>> {
        let mode = ConstraintMode::from_d1(self.d1, p)?;
        let (d1, d2) = (self.d1, self.d2());
        let d = self.d();
        let mut covariance = DMatrix::zeros(d, d);
        covariance.view_mut((0, 0), (d1, d1)).copy_from(&self.fixed_block);
        if d2 > 0 {
            let (s11, s12, s22) = self.blocks();
            let chol11 = cholesky(&s11, "S11")?;
            let center = chol11.solve(&s12);
            let mut s22_1 = &s22 - s12.tr_mul(&center);
            linalg::symmetrize(&mut s22_1);
            let schur_mean = s22_1 / (self.nu0 - T::from_usize_lossy(d2 + 1));
            let fb = &self.fixed_block * &center;
            // E[BᵀFB] = MᵀFM + tr(F S₁₁⁻¹) E[Σ₂₂·₁]
            let trace = (&self.fixed_block * chol11.inverse()).trace();
            let mut sigma22 = &schur_mean + center.tr_mul(&fb) + &schur_mean * trace;
            linalg::symmetrize(&mut sigma22);
            covariance.view_mut((0, d1), (d1, d2)).copy_from(&fb);
            covariance.view_mut((d1, 0), (d2, d1)).copy_from(&fb.transpose());
            covariance.view_mut((d1, d1), (d2, d2)).copy_from(&sigma22);
        }
        SpnParams::new(self.mu0.clone(), covariance, p, mode)
    }

    fn check_identity_block(&self) -> Result<()> {
        if !linalg::is_identity(&self.fixed_block, 1e-12) {
            return Err(Error::Unsupported(
                "closed-form marginal likelihood requires the frozen block to be the identity".into(),
            ));
        }
        Ok(())
    }
}

/// A CIW draw: the assembled covariance together with its reparameterization.
#[derive(Debug, Clone, PartialEq)]
pub struct CiwDraw<T: Real> {
    pub covariance: DMatrix<T>,
    /// `Σ₁₁⁻¹Σ₁₂`, `d₁×d₂`.
    pub regression: DMatrix<T>,
    /// `Σ₂₂·₁`, `d₂×d₂`.
    pub schur: DMatrix<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Add,
    Remove,
}

/// Count, sum and scatter `Σ zzᵀ` of a set of augmented points.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats<T: Real> {
    pub count: usize,
    pub sum: DVector<T>,
    pub scatter: DMatrix<T>,
}

impl<T: Real> SufficientStats<T> {
    pub fn empty(d: usize) -> Self {
        Self { count: 0, sum: DVector::zeros(d), scatter: DMatrix::zeros(d, d) }
    }

    pub fn from_points<'a, I>(d: usize, points: I) -> Self
    where
        I: IntoIterator<Item = &'a DVector<T>>,
    {
        let mut s = Self::empty(d);
        for z in points {
            s.add(z);
        }
        s
    }

    pub fn dim(&self) -> usize {
        self.sum.len()
    }

    pub fn add(&mut self, z: &DVector<T>) {
        self.count += 1;
        self.sum += z;
        self.scatter.ger(T::one(), z, z, T::one());
    }

    pub fn remove(&mut self, z: &DVector<T>) -> Result<()> {
        if self.count == 0 {
            return Err(Error::State("cannot remove a point from empty statistics".into()));
        }
        self.count -= 1;
        if self.count == 0 {
            self.sum.fill(T::zero());
            self.scatter.fill(T::zero());
        } else {
            self.sum -= z;
            self.scatter.ger(-T::one(), z, z, T::one());
        }
        Ok(())
    }

    pub fn update(&mut self, z: &DVector<T>, sign: Sign) -> Result<()> {
        match sign {
            Sign::Add => {
                self.add(z);
                Ok(())
            }
            Sign::Remove => self.remove(z),
        }
    }
}

/// Log marginal likelihood of the points summarized by `stats` under the NCIW
/// prior with the frozen block fixed at the identity.
pub fn log_marginal<T: Real>(stats: &SufficientStats<T>, hyper: &NciwHyper<T>) -> Result<T> {
    hyper.check_identity_block()?;
    if stats.count == 0 {
        return Ok(T::zero());
    }
    let post = hyper.posterior(stats)?;
    let (d, d1, d2) = (hyper.d(), hyper.d1, hyper.d2());
    let n = stats.count as f64;

    let c0 = cholesky(&hyper.s0, "S0")?;
    let cn = cholesky(&post.s0, "S_n")?;
    let s0_11 = hyper.s0.view((0, 0), (d1, d1)).into_owned();
    let sn_11 = post.s0.view((0, 0), (d1, d1)).into_owned();
    let ld0 = ln_det(&c0).f64();
    let ldn = ln_det(&cn).f64();
    let ld0_11 = ln_det(&cholesky(&s0_11, "S0_11")?).f64();
    let ldn_11 = ln_det(&cholesky(&sn_11, "Sn_11")?).f64();
    let trace = (sn_11.trace() - s0_11.trace()).f64();

    let (nu0, nun) = (hyper.nu0.f64(), post.nu0.f64());
    let (l0, ln) = (hyper.lambda0.f64(), post.lambda0.f64());
    let d2f = d2 as f64;
    let bracket = n * d1 as f64 * LN_2 + n * d as f64 * LN_PI + d as f64 * (ln / l0).ln() + nun * ldn - nu0 * ld0
        + (d2f - nun) * ldn_11
        - (d2f - nu0) * ld0_11
        + trace;
    let gammas: f64 = (1..=d2)
        .map(|j| ln_gamma((nun + 1.0 - j as f64) / 2.0) - ln_gamma((nu0 + 1.0 - j as f64) / 2.0))
        .sum();
    Ok(T::lit(-0.5 * bracket + gammas))
}

/// Log predictive density of a single point: the singleton marginal under
/// the supplied (prior or posterior) hyperparameters.
pub fn log_predictive<T: Real>(z: &DVector<T>, hyper: &NciwHyper<T>) -> Result<T> {
    let mut stats = SufficientStats::empty(hyper.d());
    stats.add(z);
    log_marginal(&stats, hyper)
}

/// Wishart draw by the Bartlett decomposition.
pub fn sample_wishart<T: Real, R: Rng + ?Sized>(scale: &DMatrix<T>, dof: T, rng: &mut R) -> Result<DMatrix<T>> {
    let k = scale.nrows();
    check_dof(k, dof)?;
    let root = cholesky(scale, "Wishart scale")?.l();
    let a = bartlett_factor(k, dof.f64(), rng);
    let g = root * a;
    Ok(&g * g.transpose())
}

/// Inverse-Wishart `IW(Ψ, ν)` draw (mean `Ψ/(ν - k - 1)`), computed as the
/// inverse of a Wishart draw without forming any explicit inverse:
/// with `Ψ = MMᵀ` and Bartlett factor `A`, `Σ = (MA⁻ᵀ)(MA⁻ᵀ)ᵀ`.
pub fn sample_inverse_wishart<T: Real, R: Rng + ?Sized>(psi: &DMatrix<T>, dof: T, rng: &mut R) -> Result<DMatrix<T>> {
    let k = psi.nrows();
    check_dof(k, dof)?;
    let m = cholesky(psi, "inverse-Wishart scale")?.l();
    let a = bartlett_factor(k, dof.f64(), rng);
    let a_inv_t = a
        .transpose()
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| Error::Numeric("singular Bartlett factor".into()))?;
    let g = m * a_inv_t;
    let mut out = &g * g.transpose();
    linalg::symmetrize(&mut out);
    Ok(out)
}

fn check_dof<T: Real>(k: usize, dof: T) -> Result<()> {
    if !(dof.f64() > k as f64 - 1.0) {
        return Err(Error::domain(format!("degrees of freedom {dof:?} must exceed k - 1 = {}", k as f64 - 1.0)));
    }
    Ok(())
}

fn bartlett_factor<T: Real, R: Rng + ?Sized>(k: usize, dof: f64, rng: &mut R) -> DMatrix<T> {
    let mut a = DMatrix::zeros(k, k);
    for i in 0..k {
        let chi = ChiSquared::new(dof - i as f64).expect("positive chi-square dof");
        a[(i, i)] = T::lit(chi.sample(rng).sqrt());
        for j in 0..i {
            let z: f64 = rng.sample(StandardNormal);
            a[(i, j)] = T::lit(z);
        }
    }
    a
}

pub(crate) fn standard_normal_vector<T: Real, R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<T> {
    DVector::from_fn(n, |_, _| T::lit(rng.sample::<f64, _>(StandardNormal)))
}

pub(crate) fn standard_normal_matrix<T: Real, R: Rng + ?Sized>(r: usize, c: usize, rng: &mut R) -> DMatrix<T> {
    // Column-major fill keeps the draw order stable across shapes.
    DMatrix::from_fn(r, c, |_, _| T::lit(rng.sample::<f64, _>(StandardNormal)))
}

// -- flat statistics and cached predictive --------------------------------

/// Sufficient statistics on flat buffers, for the sampler inner loop.
#[derive(Debug, Clone)]
pub(crate) struct FlatStats<T> {
    pub count: usize,
    pub sum: Vec<T>,
    /// Row-major `d×d`, both triangles maintained.
    pub scatter: Vec<T>,
}

impl<T: Real> FlatStats<T> {
    pub fn empty(d: usize) -> Self {
        Self { count: 0, sum: vec![T::zero(); d], scatter: vec![T::zero(); d * d] }
    }

    pub fn clear(&mut self) {
        self.count = 0;
        self.sum.iter_mut().for_each(|v| *v = T::zero());
        self.scatter.iter_mut().for_each(|v| *v = T::zero());
    }

    pub fn add(&mut self, z: &[T]) {
        let d = self.sum.len();
        self.count += 1;
        for i in 0..d {
            self.sum[i] += z[i];
            for j in 0..d {
                self.scatter[i * d + j] += z[i] * z[j];
            }
        }
    }

    pub fn remove(&mut self, z: &[T]) {
        debug_assert!(self.count > 0);
        let d = self.sum.len();
        self.count -= 1;
        if self.count == 0 {
            self.clear();
            return;
        }
        for i in 0..d {
            self.sum[i] -= z[i];
            for j in 0..d {
                self.scatter[i * d + j] -= z[i] * z[j];
            }
        }
    }

    pub fn to_stats(&self) -> SufficientStats<T> {
        let d = self.sum.len();
        SufficientStats {
            count: self.count,
            sum: DVector::from_column_slice(&self.sum),
            scatter: DMatrix::from_row_slice(d, d, &self.scatter),
        }
    }
}

/// Prior constants shared by every cluster's [`PredictiveCache`].
#[derive(Debug, Clone)]
pub(crate) struct PriorConstants<T> {
    pub d: usize,
    pub d1: usize,
    pub mu0: Vec<T>,
    pub lambda0: T,
    pub s0: Vec<T>,
    pub nu0: T,
    pub ln_det_s0: f64,
    pub ln_det_s0_11: f64,
    pub trace_s0_11: f64,
    /// `gamma_steps[n]` is the lnΓ increment of the predictive for a cluster of size `n`.
    gamma_steps: Vec<f64>,
}

impl<T: Real> PriorConstants<T> {
    /// Tabulates the lnΓ increments for cluster sizes up to `n_max`.
    pub fn with_capacity(hyper: &NciwHyper<T>, n_max: usize) -> Result<Self> {
        hyper.check_identity_block()?;
        let d1 = hyper.d1;
        let c0 = cholesky(&hyper.s0, "S0")?;
        let s0_11 = hyper.s0.view((0, 0), (d1, d1)).into_owned();
        Ok(Self {
            d: hyper.d(),
            d1,
            mu0: hyper.mu0.iter().copied().collect(),
            lambda0: hyper.lambda0,
            s0: linalg::to_flat(&hyper.s0),
            nu0: hyper.nu0,
            ln_det_s0: ln_det(&c0).f64(),
            ln_det_s0_11: ln_det(&cholesky(&s0_11, "S0_11")?).f64(),
            trace_s0_11: s0_11.trace().f64(),
            gamma_steps: (0..=n_max).map(|n| gamma_step(hyper.nu0.f64() + n as f64, hyper.d2())).collect(),
        })
    }

    pub fn gamma_step(&self, count: usize) -> f64 {
        match self.gamma_steps.get(count) {
            Some(&g) => g,
            None => gamma_step(self.nu0.f64() + count as f64, self.d - self.d1),
        }
    }
}

fn gamma_step(nu: f64, d2: usize) -> f64 {
    (1..=d2)
        .map(|j| ln_gamma((nu + 2.0 - j as f64) / 2.0) - ln_gamma((nu + 1.0 - j as f64) / 2.0))
        .sum()
}

/// Posterior `Ψ_n` of one cluster in factored form, supporting O(d²) single
/// point predictive evaluation through a rank-one determinant update.
#[derive(Debug, Clone)]
pub(crate) struct PredictiveCache<T> {
    pub count: usize,
    pub mu: Vec<T>,
    pub lambda: T,
    pub nu: T,
    /// Lower Cholesky factor of `S_n`, row-major; its leading `d₁` block
    /// factors `S_n,11`.
    pub chol: Vec<T>,
    pub ln_det: f64,
    pub ln_det_11: f64,
    pub trace_11: f64,
    /// Σ_j lnΓ((ν+2-j)/2) - lnΓ((ν+1-j)/2) for the next added point.
    pub gamma_step: f64,
}

impl<T: Real> PredictiveCache<T> {
    pub fn new(d: usize) -> Self {
        Self {
            count: 0,
            mu: vec![T::zero(); d],
            lambda: T::one(),
            nu: T::one(),
            chol: vec![T::zero(); d * d],
            ln_det: 0.0,
            ln_det_11: 0.0,
            trace_11: 0.0,
            gamma_step: 0.0,
        }
    }

    pub fn rebuild(&mut self, stats: &FlatStats<T>, prior: &PriorConstants<T>) {
        let d = prior.d;
        let n = T::from_usize_lossy(stats.count);
        self.count = stats.count;
        self.lambda = prior.lambda0 + n;
        self.nu = prior.nu0 + n;
        for i in 0..d {
            self.mu[i] = (prior.lambda0 * prior.mu0[i] + stats.sum[i]) / self.lambda;
        }
        for i in 0..d {
            for j in 0..=i {
                self.chol[i * d + j] = prior.s0[i * d + j] + stats.scatter[i * d + j]
                    - self.lambda * self.mu[i] * self.mu[j]
                    + prior.lambda0 * prior.mu0[i] * prior.mu0[j];
            }
        }
        self.trace_11 = (0..prior.d1).map(|i| self.chol[i * d + i].f64()).sum();
        if !chol_in_place(&mut self.chol, d) {
            log::warn!("posterior scale lost positive definiteness (n = {}); adding {JITTER:e} jitter", stats.count);
            for i in 0..d {
                for j in 0..=i {
                    self.chol[i * d + j] = prior.s0[i * d + j] + stats.scatter[i * d + j]
                        - self.lambda * self.mu[i] * self.mu[j]
                        + prior.lambda0 * prior.mu0[i] * prior.mu0[j];
                }
                self.chol[i * d + i] += T::lit(JITTER);
            }
            assert!(chol_in_place(&mut self.chol, d), "posterior scale not positive definite after jitter");
        }
        self.ln_det = flat_ln_det(&self.chol, d).f64();
        self.ln_det_11 = 2.0 * (0..prior.d1).map(|i| self.chol[i * d + i].f64().ln()).sum::<f64>();
        self.gamma_step = prior.gamma_step(stats.count);
    }

    /// `ln f(z | Ψ_n)`; `scratch` needs `2d` entries.
    pub fn ln_predictive(&self, z: &[T], prior: &PriorConstants<T>, scratch: &mut [T]) -> f64 {
        let (d, d1) = (prior.d, prior.d1);
        let d2 = (d - d1) as f64;
        let (w, solve) = scratch.split_at_mut(d);
        for i in 0..d {
            w[i] = z[i] - self.mu[i];
        }
        let lambda = self.lambda.f64();
        let c = lambda / (lambda + 1.0);
        let mut q11 = 0.0;
        let mut q = 0.0;
        let mut w11 = 0.0;
        // Single forward solve; the first d₁ entries solve against the leading block.
        for i in 0..d {
            let mut s = w[i];
            for k in 0..i {
                s -= self.chol[i * d + k] * solve[k];
            }
            let v = s / self.chol[i * d + i];
            solve[i] = v;
            let vf = v.f64();
            q += vf * vf;
            if i + 1 == d1 {
                q11 = q;
            }
            if i < d1 {
                let wf = w[i].f64();
                w11 += wf * wf;
            }
        }
        let a = (c * q).ln_1p();
        let b = (c * q11).ln_1p();
        let nu = self.nu.f64();
        let bracket = d1 as f64 * LN_2 + d as f64 * LN_PI + d as f64 * ((lambda + 1.0) / lambda).ln()
            + self.ln_det
            - self.ln_det_11
            + (nu + 1.0) * a
            + (d2 - nu - 1.0) * b
            + c * w11;
        -0.5 * bracket + self.gamma_step
    }

    /// Log marginal of the cluster's own points under the prior.
    pub fn ln_marginal(&self, prior: &PriorConstants<T>) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        let (d, d1) = (prior.d, prior.d1);
        let d2 = (d - d1) as f64;
        let n = self.count as f64;
        let (nu0, nun) = (prior.nu0.f64(), self.nu.f64());
        let (l0, ln) = (prior.lambda0.f64(), self.lambda.f64());
        let bracket = n * d1 as f64 * LN_2 + n * d as f64 * LN_PI + d as f64 * (ln / l0).ln() + nun * self.ln_det
            - nu0 * prior.ln_det_s0
            + (d2 - nun) * self.ln_det_11
            - (d2 - nu0) * prior.ln_det_s0_11
            + self.trace_11
            - prior.trace_s0_11;
        let gammas: f64 = (1..=(d - d1))
            .map(|j| ln_gamma((nun + 1.0 - j as f64) / 2.0) - ln_gamma((nu0 + 1.0 - j as f64) / 2.0))
            .sum();
        -0.5 * bracket + gammas
    }
}
