use std::collections::HashMap;

use dirlin::conjugate::{log_marginal, NciwHyper, SufficientStats};
use dirlin::directional::DirLinObservation;
use dirlin::dpspn::ClusterState;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::common::{set_partitions, unit_from_angles};
use crate::Outcome;

/// Ewens (CRP) log prior of a partition given as labels.
fn ln_crp(labels: &[usize], alpha: f64) -> f64 {
    let mut sizes: HashMap<usize, usize> = HashMap::new();
    for &l in labels {
        *sizes.entry(l).or_default() += 1;
    }
    let ln_fact = |m: usize| (1..m).map(|v| (v as f64).ln()).sum::<f64>();
    sizes.len() as f64 * alpha.ln() + sizes.values().map(|&s| ln_fact(s)).sum::<f64>()
        - (0..labels.len()).map(|i| (alpha + i as f64).ln()).sum::<f64>()
}

fn ln_joint(labels: &[usize], z: &[DVector<f64>], hyper: &NciwHyper<f64>, alpha: f64) -> f64 {
    let d = z[0].len();
    let k = labels.iter().max().unwrap() + 1;
    let mut total = ln_crp(labels, alpha);
    for c in 0..k {
        let members = z.iter().zip(labels).filter(|(_, &l)| l == c).map(|(v, _)| v);
        total += log_marginal(&SufficientStats::from_points(d, members), hyper).unwrap();
    }
    total
}

/// `P(cᵢ = · | c₋ᵢ)` by enumeration: key is the slot label of a co-member, or
/// `None` for a new cluster.
fn enumerate_conditional(
    i: usize,
    slots: &[usize],
    z: &[DVector<f64>],
    hyper: &NciwHyper<f64>,
    alpha: f64,
) -> HashMap<Option<usize>, f64> {
    let n = slots.len();
    let mut weights: HashMap<Option<usize>, f64> = HashMap::new();
    for part in set_partitions(n) {
        let consistent =
            (0..n).filter(|&j| j != i).all(|j| (0..n).filter(|&k| k != i).all(|k| (part[j] == part[k]) == (slots[j] == slots[k])));
        if !consistent {
            continue;
        }
        let key = (0..n).find(|&j| j != i && part[j] == part[i]).map(|j| slots[j]);
        *weights.entry(key).or_default() += ln_joint(&part, z, hyper, alpha).exp();
    }
    let total: f64 = weights.values().sum();
    weights.values_mut().for_each(|w| *w /= total);
    weights
}

pub fn run() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    // (p, q, d1)
    for &(p, q, d1) in &[(2usize, 0usize, 1usize), (2, 1, 1), (2, 1, 2), (3, 0, 1), (3, 1, 3)] {
        let hyper = NciwHyper::<f64>::default_for(p + q, d1).unwrap();
        for n in 2..=4 {
            for _ in 0..4 {
                let data: Vec<DirLinObservation<f64>> = (0..n)
                    .map(|_| {
                        let mut angles: Vec<f64> = (0..p - 2).map(|_| rng.random_range(0.2..3.0)).collect();
                        angles.push(rng.random_range(0.0..std::f64::consts::TAU));
                        let y = (0..q).map(|_| rng.random_range(-1.5..1.5)).collect();
                        DirLinObservation::from_angles(angles, y).unwrap()
                    })
                    .collect();
                let radii: Vec<f64> = (0..n).map(|_| rng.random_range(0.3..2.5)).collect();
                let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                let alpha = rng.random_range(0.3..3.0);
                let z: Vec<DVector<f64>> = data
                    .iter()
                    .zip(&radii)
                    .map(|(o, r)| {
                        let u = unit_from_angles(o.direction.angles());
                        DVector::from_iterator(p + q, u.iter().map(|v| r * v).chain(o.linear.iter().copied()))
                    })
                    .collect();
                let mut state = ClusterState::from_assignments(&data, &hyper, alpha, &labels, &radii).unwrap();
                for i in 0..n {
                    let slots = state.assignments().to_vec();
                    let oracle = enumerate_conditional(i, &slots, &z, &hyper, alpha);
                    let got = state.assignment_probabilities(i);
                    assert_eq!(got.len(), oracle.len(), "candidate sets differ");
                    for (key, prob) in got {
                        worst = worst.max((prob - oracle[&key]).abs());
                    }
                    checked += 1;
                }
            }
        }
    }
    Outcome::new(worst <= 1e-8, format!("{checked} conditionals (n<=4): max |sampler - enumeration| = {worst:.2e} (tol 1e-8)"))
}
