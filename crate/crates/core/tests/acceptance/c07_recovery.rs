use std::f64::consts::TAU;

use dirlin::config::ModelConfig;
use dirlin::conjugate::NciwHyper;
use dirlin::dpspn::{run as run_dp, DpConfig};
use dirlin::metrics::{adjusted_rand_index, salso, Partition, SalsoConfig};
use dirlin::pipeline::synthetic::{generate, Component, MixtureKind, SyntheticSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::Outcome;

pub const SEEDS: u64 = 20;

/// Three unit-covariance SPN components: directions 120° apart at radius 8,
/// linear means 6 apart.
pub fn spec(seed: u64, n: usize) -> SyntheticSpec {
    let components = (0..3)
        .map(|k| {
            let a = TAU * k as f64 / 3.0;
            Component {
                mu: vec![8.0 * a.cos(), 8.0 * a.sin(), 6.0 * k as f64],
                sigma: vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
            }
        })
        .collect();
    SyntheticSpec {
        kind: MixtureKind::Spn,
        k: 3,
        n,
        p: 2,
        q: 1,
        hyper: ModelConfig::default(),
        alpha0: 1.0,
        seed,
        components: Some(components),
        weights: Some(vec![1.0; 3]),
    }
}

pub struct SeedResult {
    pub gelman_rubin: f64,
    pub ari: f64,
}

pub fn one_seed(seed: u64, sweeps: usize, burn_in: usize) -> SeedResult {
    let spec = spec(seed, 1000);
    let data = generate(&spec, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    let mut config = DpConfig::new(NciwHyper::default_for(3, 1).unwrap());
    config.sweeps = sweeps;
    config.burn_in = burn_in;
    config.chains = 4;
    config.seed = seed;
    config.threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(4);
    let out = run_dp(&data.observations, &config).unwrap();
    let consensus = salso(&out.partitions(), &SalsoConfig::default(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    let ari = adjusted_rand_index(&consensus.partition, &Partition::from_labels(&data.labels)).unwrap();
    SeedResult { gelman_rubin: out.gelman_rubin.unwrap_or(f64::INFINITY), ari }
}

pub fn run() -> Outcome {
    let mut good = 0;
    let mut worst_r: f64 = 0.0;
    let mut min_ari: f64 = 1.0;
    for seed in 0..SEEDS {
        let r = one_seed(seed, 6000, 5000);
        if r.gelman_rubin < 1.2 && r.ari >= 0.9 {
            good += 1;
        }
        worst_r = worst_r.max(r.gelman_rubin);
        min_ari = min_ari.min(r.ari);
    }
    Outcome::new(
        good >= 18,
        format!("{good}/{SEEDS} seeds with R-hat < 1.2 and ARI >= 0.9 (need 18); max R-hat {worst_r:.3}, min ARI {min_ari:.3}"),
    )
}
