//! JSON run configuration. Every block and key is optional; unknown keys are
//! rejected.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::conjugate::NciwHyper;
use crate::directional::ConstraintMode;
use crate::dpspn::{DpConfig, GammaPrior};
use crate::error::{Error, Result};
use crate::hdp::HdpConfig;
use crate::metrics::SalsoConfig;
use crate::scalar::Real;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub mcmc: McmcConfig,
    #[serde(default)]
    pub io: IoConfig,
    #[serde(default)]
    pub consensus: ConsensusConfig,
    #[serde(default)]
    pub hdp: HdpSection,
    #[serde(default)]
    pub segment: SegmentConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid configuration: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn dp_config<T: Real>(&self, p: usize, q: usize) -> Result<DpConfig<T>> {
        let mut cfg = DpConfig::new(self.model.resolve(p, q)?);
        cfg.alpha0 = self.model.alpha0;
        cfg.alpha_update = self.model.alpha_update;
        cfg.alpha_prior = self.model.alpha_prior;
        cfg.sweeps = self.mcmc.sweeps;
        cfg.burn_in = self.mcmc.burn_in;
        cfg.thin = self.mcmc.thin;
        cfg.chains = self.mcmc.chains;
        cfg.seed = self.mcmc.seed;
        cfg.threads = self.mcmc.threads;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn hdp_config<T: Real>(&self, p: usize, q: usize) -> Result<HdpConfig<T>> {
        let mut cfg = HdpConfig::new(self.model.resolve(p, q)?);
        cfg.alpha0 = self.model.alpha0;
        cfg.alpha_m = self.hdp.alpha_m;
        cfg.alpha_update = self.hdp.alpha_update;
        cfg.alpha_prior = self.hdp.alpha_prior;
        cfg.sweeps = self.mcmc.sweeps;
        cfg.burn_in = self.mcmc.burn_in;
        cfg.thin = self.mcmc.thin;
        cfg.chains = self.mcmc.chains;
        cfg.seed = self.mcmc.seed;
        cfg.threads = self.mcmc.threads;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Prior `G₀` and concentration settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu0: Option<f64>,
    #[serde(default, rename = "S0", skip_serializing_if = "Option::is_none")]
    pub s0: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d1: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint_mode: Option<ConstraintMode>,
    #[serde(default = "one")]
    pub alpha0: f64,
    #[serde(default)]
    pub alpha_update: bool,
    #[serde(default)]
    pub alpha_prior: GammaPrior,
}

fn one() -> f64 {
    1.0
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            mu0: None,
            lambda0: None,
            nu0: None,
            s0: None,
            d1: None,
            constraint_mode: None,
            alpha0: 1.0,
            alpha_update: false,
            alpha_prior: GammaPrior::default(),
        }
    }
}

/// Hyperparameters of a plain normal inverse-Wishart.
#[derive(Debug, Clone, PartialEq)]
pub struct NiwHyper {
    pub mu0: DVector<f64>,
    pub lambda0: f64,
    pub s0: DMatrix<f64>,
    pub nu0: f64,
}

impl ModelConfig {
    fn base<T: Real>(&self, d: usize) -> Result<(DVector<T>, T, DMatrix<T>, T)> {
        let mu0 = match &self.mu0 {
            Some(v) if v.len() != d => return Err(Error::Config(format!("mu0 has length {}, expected {d}", v.len()))),
            Some(v) => DVector::from_iterator(d, v.iter().map(|&x| T::lit(x))),
            None => DVector::zeros(d),
        };
        let s0 = match &self.s0 {
            Some(rows) => {
                if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                    return Err(Error::Config(format!("S0 must be {d}x{d}")));
                }
                DMatrix::from_fn(d, d, |i, j| T::lit(rows[i][j]))
            }
            None => DMatrix::identity(d, d),
        };
        let lambda0 = T::lit(self.lambda0.unwrap_or(1.0));
        let nu0 = T::lit(self.nu0.unwrap_or(d as f64 + 2.0));
        Ok((mu0, lambda0, s0, nu0))
    }

    /// Resolve against the data dimensions `(p, q)`.
    pub fn resolve<T: Real>(&self, p: usize, q: usize) -> Result<NciwHyper<T>> {
        let d1 = match (self.d1, self.constraint_mode) {
            (Some(d1), Some(mode)) if mode.d1(p) != d1 => {
                return Err(Error::Config(format!("d1 = {d1} contradicts constraint_mode {mode:?}")))
            }
            (Some(d1), _) => d1,
            (None, Some(mode)) => mode.d1(p),
            (None, None) => ConstraintMode::default().d1(p),
        };
        if d1 != 1 && d1 != p {
            return Err(Error::Config(format!("d1 = {d1} must be 1 or p = {p}")));
        }
        let (mu0, lambda0, s0, nu0) = self.base::<T>(p + q)?;
        NciwHyper::new(mu0, lambda0, s0, nu0, d1, DMatrix::identity(d1, d1)).map_err(|e| Error::Config(e.to_string()))
    }

    /// The same keys read as an unconstrained prior of dimension `d`.
    pub fn resolve_unconstrained(&self, d: usize) -> Result<NiwHyper> {
        let (mu0, lambda0, s0, nu0) = self.base::<f64>(d)?;
        if !(lambda0 > 0.0) || !(nu0 > d as f64 - 1.0) {
            return Err(Error::Config("lambda0 must be positive and nu0 must exceed d - 1".into()));
        }
        crate::linalg::cholesky(&s0, "S0").map_err(|e| Error::Config(e.to_string()))?;
        Ok(NiwHyper { mu0, lambda0, s0, nu0 })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McmcConfig {
    #[serde(default = "default_sweeps")]
    pub sweeps: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_one_usize")]
    pub thin: usize,
    #[serde(default = "default_chains")]
    pub chains: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_one_usize")]
    pub threads: usize,
}

fn default_sweeps() -> usize {
    6000
}
fn default_burn_in() -> usize {
    5000
}
fn default_chains() -> usize {
    4
}
fn default_one_usize() -> usize {
    1
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self { sweeps: 6000, burn_in: 5000, thin: 1, chains: 4, seed: 0, threads: 1 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsensusConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_clusters: Option<usize>,
    #[serde(default = "default_runs")]
    pub n_runs: usize,
    #[serde(default = "default_max_sweeps")]
    pub max_sweeps: usize,
}

fn default_runs() -> usize {
    16
}
fn default_max_sweeps() -> usize {
    100
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        Self { max_clusters: None, n_runs: default_runs(), max_sweeps: default_max_sweeps() }
    }
}

impl ConsensusConfig {
    pub fn salso(&self) -> SalsoConfig {
        SalsoConfig { max_clusters: self.max_clusters, n_runs: self.n_runs, max_sweeps: self.max_sweeps }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HdpSection {
    #[serde(default = "one")]
    pub alpha_m: f64,
    #[serde(default = "yes")]
    pub alpha_update: bool,
    #[serde(default)]
    pub alpha_prior: GammaPrior,
    #[serde(default = "default_mc_draws")]
    pub mc_draws: usize,
}

fn yes() -> bool {
    true
}
fn default_mc_draws() -> usize {
    1000
}

impl Default for HdpSection {
    fn default() -> Self {
        Self { alpha_m: 1.0, alpha_update: true, alpha_prior: GammaPrior::default(), mc_draws: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentConfig {
    #[serde(default = "default_stride")]
    pub stride: u32,
    #[serde(default = "yes")]
    pub standardize: bool,
}

fn default_stride() -> u32 {
    1
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self { stride: 1, standardize: true }
    }
}
