//! Hierarchical DP over grouped SPN data, fitted by direct assignment.
//!
//! Group `j` draws from `G_j ~ DP(α_M, G_M)` with a shared
//! `G_M = Σ_k β_k δ_{φ_k} + β_u G_u`. The sampler tracks per-group cluster
//! counts `n_k^j`, table counts `m_jk` and the global weights `β`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Exp1, Gamma, Open01};
use serde::{Deserialize, Serialize};

use crate::conjugate::{FlatStats, NciwHyper, PredictiveCache, PriorConstants};
use crate::directional::{spn_log_density, ConstraintMode, DirLinObservation, SpnParams};
use crate::dpspn::{chain_rng, run_parallel, sample_log_weights, Cluster, ClusterDraw, FlatData, GammaPrior};
use crate::error::{Error, Result};
use crate::metrics::{gelman_rubin, Partition};
use crate::radius::{slice_transition, RadiusKernel};
use crate::scalar::Real;
use crate::special::{log_add_exp, log_sum_exp};

/// Patterns of observations; each pattern is one group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedData<T> {
    groups: Vec<Vec<DirLinObservation<T>>>,
}

impl<T: Real> GroupedData<T> {
    pub fn new(groups: Vec<Vec<DirLinObservation<T>>>) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::domain("grouped data needs at least one group"));
        }
        if let Some(j) = groups.iter().position(Vec::is_empty) {
            return Err(Error::domain(format!("group {j} is empty")));
        }
        let (p, q) = (groups[0][0].p(), groups[0][0].q());
        if groups.iter().flatten().any(|o| o.p() != p || o.q() != q) {
            return Err(Error::domain("observations have inconsistent dimensions"));
        }
        Ok(Self { groups })
    }

    pub fn groups(&self) -> &[Vec<DirLinObservation<T>>] {
        &self.groups
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn len(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn p(&self) -> usize {
        self.groups[0][0].p()
    }

    pub fn q(&self) -> usize {
        self.groups[0][0].q()
    }
}

/// `ln s(n, m)` for unsigned Stirling numbers of the first kind, `0 ≤ m ≤ n ≤ n_max`.
#[derive(Debug, Clone)]
pub struct StirlingTable {
    n_max: usize,
    rows: Vec<Vec<f64>>,
}

impl StirlingTable {
    pub fn new(n_max: usize) -> Self {
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n_max + 1);
        rows.push(vec![0.0]);
        for n in 1..=n_max {
            let prev = &rows[n - 1];
            let ln_n1 = ((n - 1) as f64).ln();
            let row: Vec<f64> = (0..=n)
                .map(|m| {
                    let a = if m >= 1 { prev[m - 1] } else { f64::NEG_INFINITY };
                    let b = if m < n { ln_n1 + prev[m] } else { f64::NEG_INFINITY };
                    log_add_exp(a, b)
                })
                .collect();
            rows.push(row);
        }
        Self { n_max, rows }
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn ln_s(&self, n: usize, m: usize) -> f64 {
        if m > n {
            return f64::NEG_INFINITY;
        }
        self.rows[n][m]
    }

    /// Draw `m ∈ 1..=n` with `P(m) ∝ s(n, m)·x^m`.
    pub fn sample_tables<R: Rng + ?Sized>(&self, n: usize, ln_x: f64, weights: &mut Vec<f64>, rng: &mut R) -> usize {
        debug_assert!(n >= 1 && n <= self.n_max);
        weights.clear();
        weights.extend((1..=n).map(|m| self.rows[n][m] + m as f64 * ln_x));
        1 + sample_log_weights(weights, rng)
    }
}

#[derive(Debug, Clone)]
pub struct HdpConfig<T: Real> {
    /// Top-level concentration `α₀`.
    pub alpha0: f64,
    /// Starting value of `α_M`.
    pub alpha_m: f64,
    pub alpha_update: bool,
    pub alpha_prior: GammaPrior,
    pub hyper: NciwHyper<T>,
    pub sweeps: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub chains: usize,
    pub seed: u64,
    pub threads: usize,
}

impl<T: Real> HdpConfig<T> {
    pub fn new(hyper: NciwHyper<T>) -> Self {
        Self {
            alpha0: 1.0,
            alpha_m: 1.0,
            alpha_update: true,
            alpha_prior: GammaPrior::default(),
            hyper,
            sweeps: 2000,
            burn_in: 1000,
            thin: 1,
            chains: 2,
            seed: 0,
            threads: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha0 > 0.0 && self.alpha_m > 0.0) {
            return Err(Error::Config("alpha0 and alpha_m must be positive".into()));
        }
        if self.burn_in >= self.sweeps {
            return Err(Error::Config(format!("burn_in ({}) must be below sweeps ({})", self.burn_in, self.sweeps)));
        }
        if self.thin == 0 || self.chains == 0 {
            return Err(Error::Config("thin and chains must be at least 1".into()));
        }
        if !(self.alpha_prior.shape > 0.0 && self.alpha_prior.rate > 0.0) {
            return Err(Error::Config("alpha prior shape and rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct HdpCluster<T: Real> {
    base: Cluster<T>,
    /// `n_k^j` per group.
    group_counts: Vec<usize>,
    /// `m_jk` per group; zero where `n_k^j = 0`.
    tables: Vec<usize>,
    beta: f64,
}

/// Mutable state of one HDP chain.
#[derive(Debug, Clone)]
pub struct HdpState<T: Real> {
    data: FlatData<T>,
    group_of: Vec<usize>,
    group_sizes: Vec<usize>,
    hyper: NciwHyper<T>,
    prior: PriorConstants<T>,
    prior_cache: PredictiveCache<T>,
    stirling: StirlingTable,
    assignments: Vec<usize>,
    slots: Vec<Option<HdpCluster<T>>>,
    free: Vec<usize>,
    beta_u: f64,
    alpha_m: f64,
    alpha0: f64,
    radii: Vec<T>,
    z: Vec<T>,
    scratch: Vec<T>,
    weights: Vec<f64>,
    candidates: Vec<usize>,
}

impl<T: Real> HdpState<T> {
    pub fn init<R: Rng + ?Sized>(data: &GroupedData<T>, config: &HdpConfig<T>, rng: &mut R) -> Result<Self> {
        let n = data.len();
        let groups = (n as f64).sqrt().ceil() as usize;
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..groups)).collect();
        let radii: Vec<T> = (0..n).map(|_| T::lit(rng.sample::<f64, _>(Exp1))).collect();
        let mut state = Self::from_assignments(data, config, &labels, &radii)?;
        for c in state.slots.iter_mut().flatten() {
            for (m, &nj) in c.tables.iter_mut().zip(&c.group_counts) {
                *m = usize::from(nj > 0);
            }
        }
        state.sample_beta(rng);
        Ok(state)
    }

    /// State with given flat labels and radii; weights start uniform over
    /// the clusters and `β_u`.
    pub fn from_assignments(data: &GroupedData<T>, config: &HdpConfig<T>, labels: &[usize], radii: &[T]) -> Result<Self> {
        let all: Vec<DirLinObservation<T>> = data.groups().iter().flatten().cloned().collect();
        let flat = FlatData::new(&all)?;
        let n = flat.n;
        if labels.len() != n || radii.len() != n {
            return Err(Error::domain("labels and radii must have one entry per observation"));
        }
        if config.hyper.d() != flat.d() || config.hyper.d1 > flat.p {
            return Err(Error::domain("hyperparameters do not match the data dimensions"));
        }
        let group_sizes: Vec<usize> = data.groups().iter().map(Vec::len).collect();
        let group_of: Vec<usize> = group_sizes.iter().enumerate().flat_map(|(j, &s)| std::iter::repeat_n(j, s)).collect();
        let prior = PriorConstants::with_capacity(&config.hyper, n)?;
        let d = flat.d();
        let mut prior_cache = PredictiveCache::new(d);
        prior_cache.rebuild(&FlatStats::empty(d), &prior);
        let canonical = Partition::from_labels(labels);
        let k = canonical.num_clusters();
        let j = data.num_groups();
        let share = 1.0 / (k + 1) as f64;
        let mut state = Self {
            stirling: StirlingTable::new(group_sizes.iter().copied().max().unwrap_or(1)),
            data: flat,
            group_of,
            group_sizes,
            hyper: config.hyper.clone(),
            prior,
            prior_cache,
            assignments: canonical.labels().to_vec(),
            slots: (0..k)
                .map(|_| {
                    Some(HdpCluster { base: Cluster::new(d), group_counts: vec![0; j], tables: vec![0; j], beta: share })
                })
                .collect(),
            free: Vec::new(),
            beta_u: share,
            alpha_m: config.alpha_m,
            alpha0: config.alpha0,
            radii: radii.to_vec(),
            z: vec![T::zero(); n * d],
            scratch: vec![T::zero(); 2 * d],
            weights: Vec::new(),
            candidates: Vec::new(),
        };
        for i in 0..n {
            let c = state.slots[state.assignments[i]].as_mut().expect("live");
            c.group_counts[state.group_of[i]] += 1;
        }
        for c in state.slots.iter_mut().flatten() {
            for (m, &nj) in c.tables.iter_mut().zip(&c.group_counts) {
                *m = usize::from(nj > 0);
            }
        }
        state.refresh();
        Ok(state)
    }

    pub fn num_clusters(&self) -> usize {
        self.slots.len() - self.free.len()
    }

    pub fn alpha_m(&self) -> f64 {
        self.alpha_m
    }

    pub fn beta_u(&self) -> f64 {
        self.beta_u
    }

    /// `(β_k)` over live slots in slot order.
    pub fn betas(&self) -> Vec<f64> {
        self.slots.iter().flatten().map(|c| c.beta).collect()
    }

    pub fn partition(&self) -> Partition {
        Partition::from_labels(&self.assignments)
    }

    /// `(n_k^j, m_jk)` for every live slot and group, in slot order.
    pub fn table_counts(&self) -> Vec<(Vec<usize>, Vec<usize>)> {
        self.slots.iter().flatten().map(|c| (c.group_counts.clone(), c.tables.clone())).collect()
    }

    fn refresh(&mut self) {
        let (p, q, d) = (self.data.p, self.data.q, self.data.d());
        for i in 0..self.data.n {
            let r = self.radii[i];
            for j in 0..p {
                self.z[i * d + j] = self.data.units[i * p + j] * r;
            }
            for j in 0..q {
                self.z[i * d + p + j] = self.data.linear[i * q + j];
            }
        }
        for c in self.slots.iter_mut().flatten() {
            c.base.stats.clear();
        }
        for i in 0..self.data.n {
            let c = self.slots[self.assignments[i]].as_mut().expect("live slot");
            c.base.stats.add(&self.z[i * d..(i + 1) * d]);
        }
        for c in self.slots.iter_mut().flatten() {
            c.base.cache.rebuild(&c.base.stats, &self.prior);
        }
    }

    fn remove_item(&mut self, i: usize) {
        let d = self.data.d();
        let k = self.assignments[i];
        let j = self.group_of[i];
        let c = self.slots[k].as_mut().expect("live slot");
        c.base.stats.remove(&self.z[i * d..(i + 1) * d]);
        c.group_counts[j] -= 1;
        if c.group_counts[j] == 0 {
            c.tables[j] = 0;
        }
        if c.base.stats.count == 0 {
            self.beta_u += c.beta;
            self.slots[k] = None;
            self.free.push(k);
        } else {
            c.base.cache.rebuild(&c.base.stats, &self.prior);
        }
    }

    fn insert_item<R: Rng + ?Sized>(&mut self, i: usize, slot: Option<usize>, rng: &mut R) {
        let d = self.data.d();
        let j = self.group_of[i];
        let k = match slot {
            Some(k) => k,
            None => {
                // Stick-break β_u: the new atom takes b·β_u.
                let b = Beta::new(1.0, self.alpha0).expect("valid beta").sample(rng);
                let beta = b * self.beta_u;
                self.beta_u *= 1.0 - b;
                let groups = self.group_sizes.len();
                let fresh = HdpCluster { base: Cluster::new(d), group_counts: vec![0; groups], tables: vec![0; groups], beta };
                match self.free.pop() {
                    Some(k) => {
                        self.slots[k] = Some(fresh);
                        k
                    }
                    None => {
                        self.slots.push(Some(fresh));
                        self.slots.len() - 1
                    }
                }
            }
        };
        let c = self.slots[k].as_mut().expect("live slot");
        c.base.stats.add(&self.z[i * d..(i + 1) * d]);
        c.base.cache.rebuild(&c.base.stats, &self.prior);
        c.group_counts[j] += 1;
        if c.tables[j] == 0 {
            c.tables[j] = 1;
        }
        self.assignments[i] = k;
    }

    fn fill_weights(&mut self, i: usize) {
        let d = self.data.d();
        let j = self.group_of[i];
        let z = &self.z[i * d..(i + 1) * d];
        self.weights.clear();
        self.candidates.clear();
        for (k, slot) in self.slots.iter().enumerate() {
            if let Some(c) = slot {
                let prior_mass = c.group_counts[j] as f64 + self.alpha_m * c.beta;
                self.candidates.push(k);
                self.weights.push(prior_mass.ln() + c.base.cache.ln_predictive(z, &self.prior, &mut self.scratch));
            }
        }
        self.candidates.push(usize::MAX);
        self.weights.push(
            (self.alpha_m * self.beta_u).ln() + self.prior_cache.ln_predictive(z, &self.prior, &mut self.scratch),
        );
    }

    pub fn assignment_step<R: Rng + ?Sized>(&mut self, i: usize, rng: &mut R) {
        self.remove_item(i);
        self.fill_weights(i);
        let pick = sample_log_weights(&self.weights, rng);
        let k = self.candidates[pick];
        self.insert_item(i, (k != usize::MAX).then_some(k), rng);
    }

    /// Resample every `m_jk` given the assignments and `β`.
    pub fn sample_tables<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let ln_alpha = self.alpha_m.ln();
        for c in self.slots.iter_mut().flatten() {
            let ln_x = ln_alpha + c.beta.ln();
            for (m, &nj) in c.tables.iter_mut().zip(&c.group_counts) {
                *m = if nj == 0 { 0 } else { self.stirling.sample_tables(nj, ln_x, &mut self.weights, rng) };
            }
        }
    }

    /// `(β_1..β_K, β_u) ~ Dir(m_·1, …, m_·K, α₀)`.
    pub fn sample_beta<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let mut logs: Vec<f64> = self
            .slots
            .iter()
            .flatten()
            .map(|c| ln_gamma_variate(c.tables.iter().sum::<usize>() as f64, rng))
            .collect();
        logs.push(ln_gamma_variate(self.alpha0, rng));
        let norm = log_sum_exp(&logs);
        let mut it = logs.iter().map(|l| (l - norm).exp());
        for c in self.slots.iter_mut().flatten() {
            c.beta = it.next().expect("one weight per cluster");
        }
        self.beta_u = it.next().expect("leftover weight");
    }

    pub fn draw_parameters<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let p = self.data.p;
        for c in self.slots.iter_mut().flatten() {
            let post = self.hyper.posterior(&c.base.stats.to_stats())?;
            c.base.params = Some(post.sample_params(p, rng)?);
        }
        Ok(())
    }

    pub fn update_radii<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let mut kernels: Vec<Option<RadiusKernel<T>>> = Vec::with_capacity(self.slots.len());
        for slot in &self.slots {
            kernels.push(match slot {
                Some(c) => Some(RadiusKernel::new(c.base.params.as_ref().ok_or_else(|| {
                    Error::State("cluster parameters not drawn before radius update".into())
                })?)?),
                None => None,
            });
        }
        let p = self.data.p;
        for i in 0..self.data.n {
            let kernel = kernels[self.assignments[i]].as_ref().expect("live slot");
            let (q2, q3) = kernel.quadratics(self.data.unit(i), self.data.linear(i), &mut self.scratch);
            self.radii[i] = T::lit(slice_transition(p, q2.f64(), q3.f64(), self.radii[i].f64(), rng).radius);
        }
        Ok(())
    }

    /// Auxiliary-variable update of `α_M` given the table counts.
    pub fn update_alpha<R: Rng + ?Sized>(&mut self, prior: GammaPrior, rng: &mut R) {
        let tables: usize = self.slots.iter().flatten().map(|c| c.tables.iter().sum::<usize>()).sum();
        self.alpha_m = update_alpha_grouped(self.alpha_m, tables, &self.group_sizes, prior, rng);
    }

    pub fn sweep<R: Rng + ?Sized>(&mut self, config: &HdpConfig<T>, rng: &mut R) -> Result<()> {
        for i in 0..self.data.n {
            self.assignment_step(i, rng);
        }
        self.sample_tables(rng);
        self.sample_beta(rng);
        self.draw_parameters(rng)?;
        self.update_radii(rng)?;
        self.refresh();
        if config.alpha_update {
            self.update_alpha(config.alpha_prior, rng);
        }
        Ok(())
    }

    pub fn log_likelihood(&self) -> f64 {
        self.slots.iter().flatten().map(|c| c.base.cache.ln_marginal(&self.prior)).sum()
    }

    /// Atoms at the NCIW posterior means with weights renormalized without `β_u`.
    pub fn mechanism(&self) -> Result<MechanismModel<T>> {
        let total: f64 = self.betas().iter().sum();
        let p = self.data.p;
        let mut atoms = Vec::with_capacity(self.num_clusters());
        for c in self.slots.iter().flatten() {
            let post = self.hyper.posterior(&c.base.stats.to_stats())?;
            atoms.push(Atom { beta: c.beta / total, params: post.mean_params(p)? });
        }
        MechanismModel::new(self.alpha_m, atoms)
    }

    pub fn snapshot(&self, chain: usize, sweep: usize) -> HdpDraw {
        let partition = self.partition();
        let mut order = vec![usize::MAX; self.slots.len()];
        for (&slot, &canon) in self.assignments.iter().zip(partition.labels()) {
            order[slot] = canon;
        }
        let mut clusters: Vec<(usize, f64, ClusterDraw)> = self
            .slots
            .iter()
            .enumerate()
            .filter_map(|(k, s)| s.as_ref().map(|c| (k, c)))
            .map(|(k, c)| {
                let (mu, sigma) = c.base.params.as_ref().map_or((Vec::new(), Vec::new()), params_to_vecs);
                (order[k], c.beta, ClusterDraw { label: order[k], mu, sigma })
            })
            .collect();
        clusters.sort_by_key(|c| c.0);
        HdpDraw {
            chain,
            sweep,
            k: partition.num_clusters(),
            labels: partition.into_labels(),
            alpha: self.alpha_m,
            loglik: self.log_likelihood(),
            beta: clusters.iter().map(|c| c.1).collect(),
            beta_u: self.beta_u,
            clusters: clusters.into_iter().map(|c| c.2).collect(),
        }
    }
}

pub(crate) fn params_to_vecs<T: Real>(prm: &SpnParams<T>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let cov = prm.covariance();
    (
        prm.mean().iter().map(|v| v.f64()).collect(),
        (0..cov.nrows()).map(|r| (0..cov.ncols()).map(|s| cov[(r, s)].f64()).collect()).collect(),
    )
}

/// `ln G` for `G ~ Gamma(shape, 1)`, accurate for very small shapes via
/// `G = G' U^{1/shape}` with `G' ~ Gamma(shape + 1, 1)`.
pub(crate) fn ln_gamma_variate<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape >= 1.0 {
        return Gamma::new(shape, 1.0).expect("valid gamma").sample(rng).ln();
    }
    let g: f64 = Gamma::new(shape + 1.0, 1.0).expect("valid gamma").sample(rng);
    let u: f64 = rng.sample(Open01);
    g.ln() + u.ln() / shape
}

/// `α ~ Gamma(a + T - Σs_j, b - Σ ln w_j)` with `w_j ~ Beta(α+1, n_j)` and
/// `s_j ~ Bernoulli(n_j/(n_j+α))`.
pub fn update_alpha_grouped<R: Rng + ?Sized>(
    alpha: f64,
    tables: usize,
    group_sizes: &[usize],
    prior: GammaPrior,
    rng: &mut R,
) -> f64 {
    let mut rate = prior.rate;
    let mut shape = prior.shape + tables as f64;
    for &nj in group_sizes {
        let nj = nj as f64;
        let w: f64 = Beta::new(alpha + 1.0, nj).expect("valid beta").sample(rng);
        rate -= w.max(f64::MIN_POSITIVE).ln();
        if rng.random::<f64>() < nj / (nj + alpha) {
            shape -= 1.0;
        }
    }
    Gamma::new(shape, 1.0 / rate).expect("valid gamma").sample(rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HdpDraw {
    pub chain: usize,
    pub sweep: usize,
    pub labels: Vec<usize>,
    #[serde(rename = "K")]
    pub k: usize,
    pub alpha: f64,
    pub loglik: f64,
    pub beta: Vec<f64>,
    pub beta_u: f64,
    pub clusters: Vec<ClusterDraw>,
}

#[derive(Debug, Clone)]
pub struct Atom<T: Real> {
    pub beta: f64,
    pub params: SpnParams<T>,
}

/// Point estimate `(α̂_M, Ĝ_M)` of a pattern-generating mechanism.
#[derive(Debug, Clone)]
pub struct MechanismModel<T: Real> {
    pub alpha: f64,
    pub atoms: Vec<Atom<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomJson {
    pub beta: f64,
    pub mu: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
}

/// On-disk form `{alpha, atoms: [{beta, mu, sigma}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanismJson {
    pub alpha: f64,
    pub atoms: Vec<AtomJson>,
}

impl<T: Real> MechanismModel<T> {
    pub fn new(alpha: f64, atoms: Vec<Atom<T>>) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::domain(format!("alpha must be positive, got {alpha}")));
        }
        if atoms.is_empty() {
            return Err(Error::domain("a mechanism needs at least one atom"));
        }
        if atoms.iter().any(|a| !(a.beta > 0.0)) {
            return Err(Error::domain("atom weights must be positive"));
        }
        let (p, d) = (atoms[0].params.p(), atoms[0].params.mean().len());
        if atoms.iter().any(|a| a.params.p() != p || a.params.mean().len() != d) {
            return Err(Error::domain("atoms have inconsistent dimensions"));
        }
        let total: f64 = atoms.iter().map(|a| a.beta).sum();
        let atoms = atoms.into_iter().map(|a| Atom { beta: a.beta / total, ..a }).collect();
        Ok(Self { alpha, atoms })
    }

    pub fn k(&self) -> usize {
        self.atoms.len()
    }

    pub fn p(&self) -> usize {
        self.atoms[0].params.p()
    }

    pub fn to_json(&self) -> MechanismJson {
        MechanismJson {
            alpha: self.alpha,
            atoms: self
                .atoms
                .iter()
                .map(|a| {
                    let (mu, sigma) = params_to_vecs(&a.params);
                    AtomJson { beta: a.beta, mu, sigma }
                })
                .collect(),
        }
    }

    /// Rebuild from JSON; `p` comes from the data the model will score.
    pub fn from_json(json: &MechanismJson, p: usize) -> Result<Self> {
        let atoms = json
            .atoms
            .iter()
            .map(|a| {
                let d = a.mu.len();
                if a.sigma.len() != d || a.sigma.iter().any(|r| r.len() != d) {
                    return Err(Error::domain(format!("atom sigma must be {d}x{d}")));
                }
                let mean = nalgebra::DVector::from_iterator(d, a.mu.iter().map(|&v| T::lit(v)));
                let cov = nalgebra::DMatrix::from_fn(d, d, |r, c| T::lit(a.sigma[r][c]));
                Ok(Atom { beta: a.beta, params: SpnParams::new(mean, cov, p, ConstraintMode::UnitFirstEntry)? })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(json.alpha, atoms)
    }
}

/// Output of [`fit_mechanism`].
#[derive(Debug, Clone)]
pub struct HdpFit<T: Real> {
    pub model: MechanismModel<T>,
    pub chains: Vec<Vec<HdpDraw>>,
    pub gelman_rubin: Option<f64>,
    /// `β_u` at the draw the atoms were taken from.
    pub dropped_mass: f64,
}

struct ChainResult<T: Real> {
    draws: Vec<HdpDraw>,
    last: Option<(MechanismModel<T>, f64)>,
}

fn run_hdp_chain<T: Real>(data: &GroupedData<T>, config: &HdpConfig<T>, chain: usize) -> Result<ChainResult<T>> {
    let mut rng = chain_rng(config.seed, chain);
    let mut state = HdpState::init(data, config, &mut rng)?;
    let mut draws = Vec::new();
    let mut last = None;
    for sweep in 1..=config.sweeps {
        state.sweep(config, &mut rng)?;
        if sweep > config.burn_in && (sweep - config.burn_in) % config.thin == 0 {
            let draw = state.snapshot(chain, sweep);
            if !draw.loglik.is_finite() {
                return Err(Error::Numeric(format!("chain {chain} sweep {sweep}: non-finite log-likelihood")));
            }
            draws.push(draw);
            if chain == 0 {
                last = Some((state.mechanism()?, state.beta_u()));
            }
        }
    }
    Ok(ChainResult { draws, last })
}

/// Fit `(α̂_M, Ĝ_M)`: atoms and weights from the last retained draw of chain
/// 0, `α̂_M` averaged over every retained draw.
pub fn fit_mechanism<T: Real>(data: &GroupedData<T>, config: &HdpConfig<T>) -> Result<HdpFit<T>> {
    config.validate()?;
    let results = run_parallel(config.chains, config.threads, |c| run_hdp_chain(data, config, c))?;
    let mut chains = Vec::with_capacity(results.len());
    let mut last = None;
    for r in results {
        if r.last.is_some() {
            last = r.last;
        }
        chains.push(r.draws);
    }
    let (model, dropped_mass) = last.ok_or_else(|| Error::State("no retained draws".into()))?;
    let alphas: Vec<f64> = chains.iter().flatten().map(|d| d.alpha).collect();
    let alpha = alphas.iter().sum::<f64>() / alphas.len() as f64;
    let model = MechanismModel::new(alpha, model.atoms)?;
    let series: Vec<Vec<f64>> = chains.iter().map(|c| c.iter().map(|d| d.loglik).collect()).collect();
    let gelman_rubin = if series.len() >= 2 && series[0].len() >= 2 { Some(gelman_rubin(&series)?) } else { None };
    Ok(HdpFit { model, chains, gelman_rubin, dropped_mass })
}

/// Monte Carlo estimate of `ln f(pattern | α̂_M, Ĝ_M)` with `mc_draws`
/// Dirichlet weight draws from a generator seeded with `seed`.
pub fn pattern_log_likelihood<T: Real>(
    pattern: &[DirLinObservation<T>],
    model: &MechanismModel<T>,
    mc_draws: usize,
    seed: u64,
) -> Result<f64> {
    if mc_draws == 0 {
        return Err(Error::domain("mc_draws must be at least 1"));
    }
    if pattern.is_empty() {
        return Ok(0.0);
    }
    let k = model.k();
    let mut rows: Vec<Vec<f64>> = pattern
        .iter()
        .map(|obs| model.atoms.iter().map(|a| spn_log_density(obs, &a.params).map(|v| v.f64())).collect())
        .collect::<Result<_>>()?;
    if k == 1 {
        return Ok(rows.iter().map(|r| r[0]).sum());
    }
    // Canonical row order makes the result exactly permutation invariant.
    rows.sort_by(|a, b| a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));
    let shapes: Vec<f64> = model.atoms.iter().map(|a| model.alpha * a.beta).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ln_pi = vec![0.0; k];
    let mut terms = vec![0.0; k];
    let mut per_draw = Vec::with_capacity(mc_draws);
    for _ in 0..mc_draws {
        for (l, &a) in ln_pi.iter_mut().zip(&shapes) {
            *l = ln_gamma_variate(a, &mut rng);
        }
        let norm = log_sum_exp(&ln_pi);
        let mut total = 0.0;
        for row in &rows {
            for ((t, &lp), &lf) in terms.iter_mut().zip(&ln_pi).zip(row) {
                *t = lp - norm + lf;
            }
            total += log_sum_exp(&terms);
        }
        per_draw.push(total);
    }
    Ok(log_sum_exp(&per_draw) - (mc_draws as f64).ln())
}

/// `ln f(p | M₁) - ln f(p | M₂)`, both estimated with the same seed.
pub fn log_likelihood_ratio<T: Real>(
    pattern: &[DirLinObservation<T>],
    model1: &MechanismModel<T>,
    model2: &MechanismModel<T>,
    mc_draws: usize,
    seed: u64,
) -> Result<f64> {
    Ok(pattern_log_likelihood(pattern, model1, mc_draws, seed)? - pattern_log_likelihood(pattern, model2, mc_draws, seed)?)
}
