use dirlin::conjugate::{log_marginal, NciwHyper, SufficientStats};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::common::gaussian_ln_pdf;
use crate::Outcome;

const DRAWS: usize = 100_000;

/// `ln E[∏ N(zᵢ | μ, Σ)]` over prior draws, with its Monte Carlo standard error.
fn monte_carlo(points: &[DVector<f64>], hyper: &NciwHyper<f64>, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let logs: Vec<f64> = (0..DRAWS)
        .map(|_| {
            let (mu, draw) = hyper.sample(rng).unwrap();
            points.iter().map(|z| gaussian_ln_pdf(z, &mu, &draw.covariance)).sum()
        })
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let m = w.iter().sum::<f64>() / DRAWS as f64;
    let var = w.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (DRAWS - 1) as f64;
    (top + m.ln(), (var / DRAWS as f64).sqrt() / m)
}

pub fn run() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst: f64 = 0.0;
    let mut worst_se: f64 = 0.0;
    let mut cases = 0;
    for (d, d1) in [(2usize, 1usize), (2, 2), (3, 1), (3, 2)] {
        let hyper = NciwHyper::<f64>::default_for(d, d1).unwrap();
        for n in 1..=3 {
            let points: Vec<DVector<f64>> =
                (0..n).map(|_| DVector::from_fn(d, |_, _| 0.7 * rng.sample::<f64, _>(StandardNormal))).collect();
            let stats = SufficientStats::from_points(d, points.iter());
            let exact = log_marginal(&stats, &hyper).unwrap();
            let (mc, se) = monte_carlo(&points, &hyper, &mut rng);
            worst = worst.max((exact - mc).abs());
            worst_se = worst_se.max(se);
            cases += 1;
        }
    }
    Outcome::new(
        worst <= 0.05,
        format!("{cases} cases (d<=3, n<=3): max |closed form - MC| = {worst:.4} in log (tol 0.05), max MC log-SE {worst_se:.4}"),
    )
}
