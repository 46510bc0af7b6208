use std::f64::consts::PI;

use dirlin::config::ModelConfig;
use dirlin::conjugate::NciwHyper;
use dirlin::directional::DirLinObservation;
use dirlin::hdp::{fit_mechanism, log_likelihood_ratio, GroupedData, HdpConfig, MechanismModel};
use dirlin::pipeline::synthetic::{generate, Component, MixtureKind, SyntheticSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use crate::common::spearman;
use crate::Outcome;

const P: usize = 2;
const Q: usize = 4;

/// A generating mechanism: atoms, global weights and concentration.
struct Mechanism {
    atoms: Vec<Component>,
    beta: Vec<f64>,
    alpha: f64,
}

fn atom(direction: f64, linear: [f64; Q]) -> Component {
    let d = P + Q;
    let mut mu = vec![5.0 * direction.cos(), 5.0 * direction.sin()];
    mu.extend_from_slice(&linear);
    Component { mu, sigma: (0..d).map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect() }
}

fn mechanisms() -> [Mechanism; 2] {
    [
        Mechanism {
            atoms: vec![atom(0.0, [2.0, 2.0, 0.0, 0.0]), atom(0.5 * PI, [-2.0, 2.0, 1.0, 0.0])],
            beta: vec![0.6, 0.4],
            alpha: 5.0,
        },
        Mechanism {
            atoms: vec![atom(PI, [2.0, -2.0, 0.0, 1.0]), atom(1.5 * PI, [-2.0, -2.0, -1.0, -1.0])],
            beta: vec![0.5, 0.5],
            alpha: 5.0,
        },
    ]
}

/// One pattern: group weights `π ~ Dir(αβ)`, then `n` SPN draws.
fn pattern<R: Rng>(m: &Mechanism, n: usize, rng: &mut R) -> Vec<DirLinObservation<f64>> {
    let g: Vec<f64> = m.beta.iter().map(|b| Gamma::new(m.alpha * b, 1.0).unwrap().sample(rng)).collect();
    let spec = SyntheticSpec {
        kind: MixtureKind::Spn,
        k: m.atoms.len(),
        n,
        p: P,
        q: Q,
        hyper: ModelConfig::default(),
        alpha0: 1.0,
        seed: 0,
        components: Some(m.atoms.clone()),
        weights: Some(g),
    };
    generate(&spec, rng).unwrap().observations
}

fn fit(patterns: Vec<Vec<DirLinObservation<f64>>>, seed: u64) -> MechanismModel<f64> {
    let mut config = HdpConfig::new(NciwHyper::default_for(P + Q, 1).unwrap());
    config.seed = seed;
    fit_mechanism(&GroupedData::new(patterns).unwrap(), &config).unwrap().model
}

pub fn run() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mechs = mechanisms();
    let models: Vec<MechanismModel<f64>> = mechs
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let train = (0..20).map(|_| pattern(m, rng.random_range(50..=200), &mut rng)).collect();
            fit(train, 90 + k as u64)
        })
        .collect();
    let mut correct = 0;
    let mut sizes = Vec::new();
    let mut magnitudes = Vec::new();
    for (truth, m) in mechs.iter().enumerate() {
        for j in 0..20 {
            let n = rng.random_range(50..=200);
            let obs = pattern(m, n, &mut rng);
            let lr = log_likelihood_ratio(&obs, &models[0], &models[1], 1000, 7000 + j).unwrap();
            if (lr > 0.0) == (truth == 0) {
                correct += 1;
            }
            sizes.push(n as f64);
            magnitudes.push(lr.abs());
        }
    }
    let rho = spearman(&magnitudes, &sizes);
    Outcome::new(
        correct == 40 && rho > 0.8,
        format!(
            "sign correct on {correct}/40 held-out patterns (need 40), Spearman(|log LR|, size) = {rho:.3} (need > 0.8); fitted K = {}, {}",
            models[0].k(),
            models[1].k()
        ),
    )
}
