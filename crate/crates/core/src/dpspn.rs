//! Collapsed Gibbs sampler for the Dirichlet-process SPN mixture.
//!
//! Each sweep reassigns every observation given the others using the NCIW
//! posterior predictive, draws cluster parameters, moves every latent radius
//! one slice step, and optionally updates the concentration.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Exp1, Gamma};
use serde::{Deserialize, Serialize};

use crate::conjugate::{FlatStats, NciwHyper, PredictiveCache, PriorConstants};
use crate::directional::{DirLinObservation, SpnParams};
use crate::error::{Error, Result};
use crate::metrics::{gelman_rubin, Partition};
use crate::radius::{slice_transition, RadiusKernel};
use crate::scalar::Real;

/// Shape and rate of a Gamma prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl Default for GammaPrior {
    fn default() -> Self {
        Self { shape: 1.0, rate: 1.0 }
    }
}

#[derive(Debug, Clone)]
pub struct DpConfig<T: Real> {
    pub alpha0: f64,
    pub hyper: NciwHyper<T>,
    pub sweeps: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub chains: usize,
    pub seed: u64,
    pub alpha_update: bool,
    pub alpha_prior: GammaPrior,
    pub threads: usize,
}

impl<T: Real> DpConfig<T> {
    pub fn new(hyper: NciwHyper<T>) -> Self {
        Self {
            alpha0: 1.0,
            hyper,
            sweeps: 6000,
            burn_in: 5000,
            thin: 1,
            chains: 4,
            seed: 0,
            alpha_update: false,
            alpha_prior: GammaPrior::default(),
            threads: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha0 > 0.0) || !self.alpha0.is_finite() {
            return Err(Error::Config(format!("alpha0 must be positive, got {}", self.alpha0)));
        }
        if self.burn_in >= self.sweeps {
            return Err(Error::Config(format!("burn_in ({}) must be below sweeps ({})", self.burn_in, self.sweeps)));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if self.chains == 0 {
            return Err(Error::Config("chains must be at least 1".into()));
        }
        if !(self.alpha_prior.shape > 0.0 && self.alpha_prior.rate > 0.0) {
            return Err(Error::Config("alpha prior shape and rate must be positive".into()));
        }
        Ok(())
    }

    /// Retained draws per chain.
    pub fn draws_per_chain(&self) -> usize {
        (self.sweeps - self.burn_in) / self.thin
    }
}

/// RNG for chain `chain` of a run seeded with `seed`.
pub fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterDraw {
    pub label: usize,
    pub mu: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
}

/// One retained posterior sample with canonical labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraw {
    pub chain: usize,
    pub sweep: usize,
    pub labels: Vec<usize>,
    #[serde(rename = "K")]
    pub k: usize,
    pub alpha: f64,
    pub loglik: f64,
    pub clusters: Vec<ClusterDraw>,
}

impl PosteriorDraw {
    pub fn partition(&self) -> Partition {
        Partition::from_labels(&self.labels)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Cluster<T: Real> {
    pub stats: FlatStats<T>,
    pub cache: PredictiveCache<T>,
    pub params: Option<SpnParams<T>>,
}

impl<T: Real> Cluster<T> {
    pub(crate) fn new(d: usize) -> Self {
        Self { stats: FlatStats::empty(d), cache: PredictiveCache::new(d), params: None }
    }
}

/// Observations unpacked into flat buffers.
#[derive(Debug, Clone)]
pub(crate) struct FlatData<T> {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub units: Vec<T>,
    pub linear: Vec<T>,
}

impl<T: Real> FlatData<T> {
    pub fn new(data: &[DirLinObservation<T>]) -> Result<Self> {
        let first = data.first().ok_or_else(|| Error::domain("no observations"))?;
        let (p, q) = (first.p(), first.q());
        let mut units = Vec::with_capacity(data.len() * p);
        let mut linear = Vec::with_capacity(data.len() * q);
        for (i, obs) in data.iter().enumerate() {
            if obs.p() != p || obs.q() != q {
                return Err(Error::domain(format!(
                    "observation {i} has (p, q) = ({}, {}), expected ({p}, {q})",
                    obs.p(),
                    obs.q()
                )));
            }
            units.extend_from_slice(obs.direction.unit());
            linear.extend_from_slice(&obs.linear);
        }
        Ok(Self { n: data.len(), p, q, units, linear })
    }

    pub fn d(&self) -> usize {
        self.p + self.q
    }

    pub fn unit(&self, i: usize) -> &[T] {
        &self.units[i * self.p..(i + 1) * self.p]
    }

    pub fn linear(&self, i: usize) -> &[T] {
        &self.linear[i * self.q..(i + 1) * self.q]
    }
}

/// Mutable state of one chain.
#[derive(Debug, Clone)]
pub struct ClusterState<T: Real> {
    data: FlatData<T>,
    hyper: NciwHyper<T>,
    prior: PriorConstants<T>,
    prior_cache: PredictiveCache<T>,
    assignments: Vec<usize>,
    slots: Vec<Option<Cluster<T>>>,
    free: Vec<usize>,
    radii: Vec<T>,
    /// Augmented points `z_i = (r_i u_i, y_i)`, row-major `n×d`.
    z: Vec<T>,
    alpha: f64,
    scratch: Vec<T>,
    weights: Vec<f64>,
    candidates: Vec<usize>,
}

impl<T: Real> ClusterState<T> {
    /// Random start: `⌈√n⌉` groups by uniform assignment, radii ~ Exp(1).
    pub fn init<R: Rng + ?Sized>(data: &[DirLinObservation<T>], hyper: &NciwHyper<T>, alpha: f64, rng: &mut R) -> Result<Self> {
        let n = data.len();
        if n == 0 {
            return Err(Error::domain("cannot initialize a sampler with no observations"));
        }
        let groups = (n as f64).sqrt().ceil() as usize;
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..groups)).collect();
        let radii: Vec<T> = (0..n).map(|_| T::lit(rng.sample::<f64, _>(Exp1))).collect();
        Self::from_assignments(data, hyper, alpha, &labels, &radii)
    }

    /// State with given labels (any integers) and radii.
    pub fn from_assignments(
        data: &[DirLinObservation<T>],
        hyper: &NciwHyper<T>,
        alpha: f64,
        labels: &[usize],
        radii: &[T],
    ) -> Result<Self> {
        let flat = FlatData::new(data)?;
        let n = flat.n;
        if labels.len() != n || radii.len() != n {
            return Err(Error::domain("labels and radii must have one entry per observation"));
        }
        if radii.iter().any(|r| !(*r > T::zero()) || !r.is_finite()) {
            return Err(Error::domain("radii must be positive and finite"));
        }
        if hyper.d() != flat.d() {
            return Err(Error::domain(format!("hyperparameters have d = {}, data have d = {}", hyper.d(), flat.d())));
        }
        if hyper.d1 > flat.p {
            return Err(Error::domain(format!("frozen block d1 = {} exceeds p = {}", hyper.d1, flat.p)));
        }
        let prior = PriorConstants::with_capacity(hyper, n)?;
        let d = flat.d();
        let mut prior_cache = PredictiveCache::new(d);
        prior_cache.rebuild(&FlatStats::empty(d), &prior);
        let canonical = Partition::from_labels(labels);
        let mut state = Self {
            data: flat,
            hyper: hyper.clone(),
            prior,
            prior_cache,
            assignments: canonical.labels().to_vec(),
            slots: Vec::new(),
            free: Vec::new(),
            radii: radii.to_vec(),
            z: vec![T::zero(); n * d],
            alpha,
            scratch: vec![T::zero(); 2 * d],
            weights: Vec::new(),
            candidates: Vec::new(),
        };
        state.slots = (0..canonical.num_clusters()).map(|_| Some(Cluster::new(d))).collect();
        state.refresh();
        Ok(state)
    }

    pub fn n(&self) -> usize {
        self.data.n
    }

    pub fn num_clusters(&self) -> usize {
        self.slots.len() - self.free.len()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn set_alpha(&mut self, alpha: f64) {
        self.alpha = alpha;
    }

    pub fn radii(&self) -> &[T] {
        &self.radii
    }

    /// Raw slot labels (not canonical).
    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn partition(&self) -> Partition {
        Partition::from_labels(&self.assignments)
    }

    pub fn augmented(&self, i: usize) -> &[T] {
        let d = self.data.d();
        &self.z[i * d..(i + 1) * d]
    }

    /// Per-slot sizes; `None` marks a free slot.
    pub fn cluster_sizes(&self) -> Vec<Option<usize>> {
        self.slots.iter().map(|s| s.as_ref().map(|c| c.stats.count)).collect()
    }

    /// Recompute `z` from the radii and rebuild all cluster statistics.
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
            c.stats.clear();
        }
        for i in 0..self.data.n {
            let k = self.assignments[i];
            let z = &self.z[i * d..(i + 1) * d];
            self.slots[k].as_mut().expect("live slot").stats.add(z);
        }
        for (k, slot) in self.slots.iter_mut().enumerate() {
            if let Some(c) = slot {
                if c.stats.count == 0 {
                    *slot = None;
                    self.free.push(k);
                } else {
                    c.cache.rebuild(&c.stats, &self.prior);
                }
            }
        }
    }

    fn remove_item(&mut self, i: usize) {
        let d = self.data.d();
        let k = self.assignments[i];
        let cluster = self.slots[k].as_mut().expect("assigned to live slot");
        cluster.stats.remove(&self.z[i * d..(i + 1) * d]);
        if cluster.stats.count == 0 {
            self.slots[k] = None;
            self.free.push(k);
        } else {
            cluster.cache.rebuild(&cluster.stats, &self.prior);
        }
    }

    fn insert_item(&mut self, i: usize, slot: Option<usize>) {
        let d = self.data.d();
        let k = match slot {
            Some(k) => k,
            None => match self.free.pop() {
                Some(k) => {
                    self.slots[k] = Some(Cluster::new(d));
                    k
                }
                None => {
                    self.slots.push(Some(Cluster::new(d)));
                    self.slots.len() - 1
                }
            },
        };
        let cluster = self.slots[k].as_mut().expect("live slot");
        cluster.stats.add(&self.z[i * d..(i + 1) * d]);
        cluster.cache.rebuild(&cluster.stats, &self.prior);
        self.assignments[i] = k;
    }

    /// Unnormalized log weights of item `i` (already removed) into
    /// `self.candidates`/`self.weights`; the last entry is a new cluster.
    fn fill_weights(&mut self, i: usize) {
        let d = self.data.d();
        let z = &self.z[i * d..(i + 1) * d];
        self.weights.clear();
        self.candidates.clear();
        for (k, slot) in self.slots.iter().enumerate() {
            if let Some(c) = slot {
                let w = (c.stats.count as f64).ln() + c.cache.ln_predictive(z, &self.prior, &mut self.scratch);
                self.candidates.push(k);
                self.weights.push(w);
            }
        }
        let w_new = self.alpha.ln() + self.prior_cache.ln_predictive(z, &self.prior, &mut self.scratch);
        self.candidates.push(usize::MAX);
        self.weights.push(w_new);
    }

    /// Full-conditional probabilities of `c_i`: `(Some(slot), prob)` for live
    /// clusters and `(None, prob)` for a new one. Leaves the state unchanged.
    pub fn assignment_probabilities(&mut self, i: usize) -> Vec<(Option<usize>, f64)> {
        let original = self.assignments[i];
        self.remove_item(i);
        self.fill_weights(i);
        let norm = crate::special::log_sum_exp(&self.weights);
        let out = self
            .candidates
            .iter()
            .zip(&self.weights)
            .map(|(&k, &w)| ((k != usize::MAX).then_some(k), (w - norm).exp()))
            .collect();
        let reuse = self.slots.get(original).is_some_and(|s| s.is_some());
        if !reuse {
            // The item was a singleton; reopen exactly its old slot.
            let pos = self.free.iter().rposition(|&k| k == original).expect("freed slot");
            self.free.remove(pos);
            self.slots[original] = Some(Cluster::new(self.data.d()));
        }
        self.insert_item(i, Some(original));
        out
    }

    /// Resample `c_i` from its full conditional.
    pub fn assignment_step<R: Rng + ?Sized>(&mut self, i: usize, rng: &mut R) {
        self.remove_item(i);
        self.fill_weights(i);
        let pick = sample_log_weights(&self.weights, rng);
        let k = self.candidates[pick];
        self.insert_item(i, (k != usize::MAX).then_some(k));
    }

    /// Draw `(μ̃ᵏ, Σ̃ᵏ)` from every live cluster's NCIW posterior.
    pub fn draw_parameters<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let p = self.data.p;
        for slot in self.slots.iter_mut() {
            if let Some(c) = slot {
                let post = self.hyper.posterior(&c.stats.to_stats())?;
                c.params = Some(post.sample_params(p, rng)?);
            }
        }
        Ok(())
    }

    /// One slice transition per radius under its cluster's current parameters.
    pub fn update_radii<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let mut kernels: Vec<Option<RadiusKernel<T>>> = Vec::with_capacity(self.slots.len());
        for slot in &self.slots {
            kernels.push(match slot {
                Some(Cluster { params: Some(prm), .. }) => Some(RadiusKernel::new(prm)?),
                Some(_) => return Err(Error::State("cluster parameters not drawn before radius update".into())),
                None => None,
            });
        }
        let p = self.data.p;
        for i in 0..self.data.n {
            let kernel = kernels[self.assignments[i]].as_ref().expect("live slot");
            let (q2, q3) = kernel.quadratics(self.data.unit(i), self.data.linear(i), &mut self.scratch);
            let state = slice_transition(p, q2.f64(), q3.f64(), self.radii[i].f64(), rng);
            self.radii[i] = T::lit(state.radius);
        }
        Ok(())
    }

    /// One full Gibbs sweep.
    pub fn sweep<R: Rng + ?Sized>(&mut self, config: &DpConfig<T>, rng: &mut R) -> Result<()> {
        for i in 0..self.data.n {
            self.assignment_step(i, rng);
        }
        self.draw_parameters(rng)?;
        self.update_radii(rng)?;
        self.refresh();
        if config.alpha_update {
            self.alpha = update_alpha(self.alpha, self.num_clusters(), self.data.n, config.alpha_prior, rng);
        }
        Ok(())
    }

    /// Complete-data log-likelihood: sum of cluster log marginals.
    pub fn log_likelihood(&self) -> f64 {
        self.slots.iter().flatten().map(|c| c.cache.ln_marginal(&self.prior)).sum()
    }

    /// Canonically relabeled snapshot.
    pub fn snapshot(&self, chain: usize, sweep: usize) -> PosteriorDraw {
        let partition = self.partition();
        let mut order = vec![usize::MAX; self.slots.len()];
        for (&slot, &canon) in self.assignments.iter().zip(partition.labels()) {
            order[slot] = canon;
        }
        let mut clusters: Vec<ClusterDraw> = self
            .slots
            .iter()
            .enumerate()
            .filter_map(|(k, s)| s.as_ref().map(|c| (k, c)))
            .map(|(k, c)| {
                let (mu, sigma) = match &c.params {
                    Some(prm) => {
                        let cov = prm.covariance();
                        (
                            prm.mean().iter().map(|v| v.f64()).collect(),
                            (0..cov.nrows()).map(|r| (0..cov.ncols()).map(|s| cov[(r, s)].f64()).collect()).collect(),
                        )
                    }
                    None => (Vec::new(), Vec::new()),
                };
                ClusterDraw { label: order[k], mu, sigma }
            })
            .collect();
        clusters.sort_by_key(|c| c.label);
        PosteriorDraw {
            chain,
            sweep,
            k: partition.num_clusters(),
            labels: partition.into_labels(),
            alpha: self.alpha,
            loglik: self.log_likelihood(),
            clusters,
        }
    }
}

/// Index drawn with probability proportional to `exp(w)`.
pub(crate) fn sample_log_weights<R: Rng + ?Sized>(w: &[f64], rng: &mut R) -> usize {
    let max = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = w.iter().map(|x| (x - max).exp()).sum();
    let mut u = rng.random::<f64>() * total;
    for (k, x) in w.iter().enumerate() {
        u -= (x - max).exp();
        if u < 0.0 {
            return k;
        }
    }
    w.iter().rposition(|x| x.is_finite()).unwrap_or(w.len() - 1)
}

/// Escobar–West auxiliary-variable update of a DP concentration with a
/// Gamma(shape, rate) prior, given `k` clusters among `n` items.
pub fn update_alpha<R: Rng + ?Sized>(alpha: f64, k: usize, n: usize, prior: GammaPrior, rng: &mut R) -> f64 {
    if n == 0 {
        return Gamma::new(prior.shape, 1.0 / prior.rate).expect("valid prior").sample(rng);
    }
    let eta = Beta::new(alpha + 1.0, n as f64).expect("valid beta").sample(rng).max(f64::MIN_POSITIVE);
    let rate = prior.rate - eta.ln();
    let shape_hi = prior.shape + k as f64;
    let odds = (shape_hi - 1.0) / (n as f64 * rate);
    let shape = if rng.random::<f64>() < odds / (1.0 + odds) { shape_hi } else { shape_hi - 1.0 };
    Gamma::new(shape, 1.0 / rate).expect("valid gamma").sample(rng)
}

/// Output of [`run`].
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub chains: Vec<Vec<PosteriorDraw>>,
    /// Potential scale reduction of the log-likelihood series; `None` with
    /// fewer than two chains or two retained draws.
    pub gelman_rubin: Option<f64>,
}

impl RunOutput {
    pub fn draws(&self) -> impl Iterator<Item = &PosteriorDraw> {
        self.chains.iter().flatten()
    }

    pub fn partitions(&self) -> Vec<Partition> {
        self.draws().map(PosteriorDraw::partition).collect()
    }
}

/// Run one chain.
pub fn run_chain<T: Real>(data: &[DirLinObservation<T>], config: &DpConfig<T>, chain: usize) -> Result<Vec<PosteriorDraw>> {
    let mut rng = chain_rng(config.seed, chain);
    let mut state = ClusterState::init(data, &config.hyper, config.alpha0, &mut rng)?;
    let mut draws = Vec::with_capacity(config.draws_per_chain());
    for sweep in 1..=config.sweeps {
        state.sweep(config, &mut rng)?;
        if sweep > config.burn_in && (sweep - config.burn_in) % config.thin == 0 {
            let draw = state.snapshot(chain, sweep);
            if !draw.loglik.is_finite() {
                return Err(Error::Numeric(format!("chain {chain} sweep {sweep}: non-finite log-likelihood")));
            }
            draws.push(draw);
        }
        if sweep % 1000 == 0 {
            log::debug!("chain {chain}: sweep {sweep}, K = {}", state.num_clusters());
        }
    }
    Ok(draws)
}

/// Run all chains, `config.threads` at a time.
pub fn run<T: Real>(data: &[DirLinObservation<T>], config: &DpConfig<T>) -> Result<RunOutput> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::domain("no observations"));
    }
    let chains = run_parallel(config.chains, config.threads, |c| run_chain(data, config, c))?;
    let series: Vec<Vec<f64>> = chains.iter().map(|c| c.iter().map(|d| d.loglik).collect()).collect();
    let gelman_rubin = if series.len() >= 2 && series[0].len() >= 2 { Some(gelman_rubin(&series)?) } else { None };
    Ok(RunOutput { chains, gelman_rubin })
}

/// Runs `job(0..count)` on up to `threads` scoped threads, preserving order.
pub(crate) fn run_parallel<O, F>(count: usize, threads: usize, job: F) -> Result<Vec<O>>
where
    O: Send,
    F: Fn(usize) -> Result<O> + Sync,
{
    let threads = threads.clamp(1, count.max(1));
    if threads == 1 {
        return (0..count).map(&job).collect();
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<O>>>> = Mutex::new((0..count).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let c = next.fetch_add(1, Ordering::Relaxed);
                if c >= count {
                    break;
                }
                let out = job(c);
                results.lock().expect("poisoned")[c] = Some(out);
            });
        }
    });
    results.into_inner().expect("poisoned").into_iter().map(|r| r.expect("every job ran")).collect()
}
