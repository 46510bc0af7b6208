//! Synthetic mixtures: SPN (project the directional block to the sphere) and
//! SWG (wrap the first coordinate modulo 2π).

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::conjugate::{sample_inverse_wishart, NciwHyper};
use crate::config::ModelConfig;
use crate::directional::{cartesian_to_spherical, DirLinObservation};
use crate::error::{Error, Result};
use crate::hdp::ln_gamma_variate;
use crate::linalg::cholesky;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MixtureKind {
    #[default]
    Spn,
    Swg,
}

/// Explicit component parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Component {
    pub mu: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    #[serde(default)]
    pub kind: MixtureKind,
    #[serde(rename = "K")]
    pub k: usize,
    pub n: usize,
    #[serde(default = "default_p")]
    pub p: usize,
    #[serde(default)]
    pub q: usize,
    /// Prior for drawing component parameters.
    #[serde(default)]
    pub hyper: ModelConfig,
    #[serde(default = "default_alpha")]
    pub alpha0: f64,
    #[serde(default)]
    pub seed: u64,
    /// Fixed component parameters instead of prior draws.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub components: Option<Vec<Component>>,
    /// Fixed mixture weights instead of a Dirichlet draw.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

fn default_p() -> usize {
    2
}

fn default_alpha() -> f64 {
    1.0
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("K must be at least 1".into()));
        }
        if self.n < self.k {
            return Err(Error::Config(format!("n ({}) must be at least K ({})", self.n, self.k)));
        }
        if self.p < 2 {
            return Err(Error::Config(format!("p must be at least 2, got {}", self.p)));
        }
        if self.kind == MixtureKind::Swg && self.p != 2 {
            return Err(Error::Config("wrapped (swg) mixtures are circular: p must be 2".into()));
        }
        if !(self.alpha0 > 0.0) {
            return Err(Error::Config("alpha0 must be positive".into()));
        }
        let d = self.generating_dim();
        if let Some(cs) = &self.components {
            if cs.len() != self.k {
                return Err(Error::Config(format!("{} components given for K = {}", cs.len(), self.k)));
            }
            for c in cs {
                if c.mu.len() != d || c.sigma.len() != d || c.sigma.iter().any(|r| r.len() != d) {
                    return Err(Error::Config(format!("component parameters must have dimension {d}")));
                }
            }
        }
        if let Some(w) = &self.weights {
            if w.len() != self.k || w.iter().any(|&x| !(x >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
                return Err(Error::Config("weights must be K non-negative values with positive sum".into()));
            }
        }
        Ok(())
    }

    /// Dimension of the underlying Gaussian: `p + q` for SPN, `1 + q` for SWG.
    pub fn generating_dim(&self) -> usize {
        match self.kind {
            MixtureKind::Spn => self.p + self.q,
            MixtureKind::Swg => 1 + self.q,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub observations: Vec<DirLinObservation<f64>>,
    pub labels: Vec<usize>,
    pub weights: Vec<f64>,
    pub components: Vec<Component>,
}

pub fn generate<R: Rng + ?Sized>(spec: &SyntheticSpec, rng: &mut R) -> Result<SyntheticData> {
    spec.validate()?;
    let d = spec.generating_dim();
    let weights = match &spec.weights {
        Some(w) => {
            let s: f64 = w.iter().sum();
            w.iter().map(|x| x / s).collect()
        }
        None => {
            let logs: Vec<f64> = (0..spec.k).map(|_| ln_gamma_variate(spec.alpha0 / spec.k as f64, rng)).collect();
            let norm = crate::special::log_sum_exp(&logs);
            logs.iter().map(|l| (l - norm).exp()).collect::<Vec<f64>>()
        }
    };
    let components = match &spec.components {
        Some(c) => c.clone(),
        None => {
            let mut out = Vec::with_capacity(spec.k);
            for _ in 0..spec.k {
                out.push(draw_component(spec, rng)?);
            }
            out
        }
    };
    let factors = components
        .iter()
        .map(|c| {
            let sigma = DMatrix::from_fn(d, d, |i, j| c.sigma[i][j]);
            cholesky(&sigma, "component covariance").map(|ch| ch.l())
        })
        .collect::<Result<Vec<_>>>()?;
    let picker = WeightedIndex::new(&weights).map_err(|e| Error::Config(format!("mixture weights: {e}")))?;
    let mut observations = Vec::with_capacity(spec.n);
    let mut labels = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let k = picker.sample(rng);
        let e = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let z = DVector::from_column_slice(&components[k].mu) + &factors[k] * e;
        let obs = match spec.kind {
            MixtureKind::Spn => {
                let (_, dir) = cartesian_to_spherical(&z.as_slice()[..spec.p])?;
                DirLinObservation::new(dir, z.as_slice()[spec.p..].to_vec(), None)?
            }
            MixtureKind::Swg => {
                let mut theta = z[0].rem_euclid(TAU);
                if theta >= TAU {
                    theta = 0.0;
                }
                DirLinObservation::from_angles(vec![theta], z.as_slice()[1..].to_vec())?
            }
        };
        observations.push(obs);
        labels.push(k);
    }
    Ok(SyntheticData { observations, labels, weights, components })
}

fn draw_component<R: Rng + ?Sized>(spec: &SyntheticSpec, rng: &mut R) -> Result<Component> {
    let (mean, cov) = match spec.kind {
        MixtureKind::Spn => {
            let hyper: NciwHyper<f64> = spec.hyper.resolve(spec.p, spec.q)?;
            let (mean, draw) = hyper.sample(rng)?;
            (mean, draw.covariance)
        }
        MixtureKind::Swg => {
            // Plain normal inverse-Wishart; nothing to pin for a wrapped normal.
            let d = 1 + spec.q;
            let hyper = spec.hyper.resolve_unconstrained(d)?;
            let cov = sample_inverse_wishart(&hyper.s0, hyper.nu0, rng)?;
            let l = cholesky(&cov, "sampled covariance")?.l();
            let e = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            (&hyper.mu0 + l * e / hyper.lambda0.sqrt(), cov)
        }
    };
    let d = mean.len();
    Ok(Component { mu: mean.iter().copied().collect(), sigma: (0..d).map(|i| (0..d).map(|j| cov[(i, j)]).collect()).collect() })
}
