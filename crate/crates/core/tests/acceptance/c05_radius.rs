use dirlin::radius::slice_transition;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::common::{integrate, ks_distance};
use crate::Outcome;

const DRAWS: usize = 100_000;
const THIN: usize = 10;

/// `(p, Q₂*, Q₃*)`; drift `Q₂*/Q₃*` ∈ {0, 5, 50}.
pub const SETTINGS: [(usize, f64, f64); 6] =
    [(2, 0.0, 1.0), (3, 0.0, 1.0), (5, 5.0, 1.0), (2, 10.0, 2.0), (3, 50.0, 1.0), (5, 100.0, 2.0)];

/// `ln` of the unnormalised radius conditional.
fn ln_target(p: usize, q2: f64, q3: f64, r: f64) -> f64 {
    (p - 1) as f64 * r.ln() - 0.5 * q3 * (r - q2 / q3).powi(2)
}

/// CDF of the normalised conditional at each sorted sample.
pub fn cdf_at(p: usize, q2: f64, q3: f64, sorted: &[f64]) -> Vec<f64> {
    let m = q2 / q3;
    let mode = 0.5 * (m + (m * m + 4.0 * (p - 1) as f64 / q3).sqrt());
    let peak = ln_target(p, q2, q3, mode);
    let f = |r: f64| if r <= 0.0 { 0.0 } else { (ln_target(p, q2, q3, r) - peak).exp() };
    let sd = 1.0 / q3.sqrt();
    let hi = mode + 40.0 * sd;
    let total = integrate(f, 0.0, mode, 1e-13, 1e-300) + integrate(f, mode, hi, 1e-13, 1e-300);
    let mut acc = 0.0;
    let mut prev = 0.0;
    sorted
        .iter()
        .map(|&r| {
            acc += integrate(f, prev, r, 1e-12, 1e-300);
            prev = r;
            acc / total
        })
        .collect()
}

pub fn run() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut details = Vec::new();
    let mut finite = true;
    for (s, &(p, q2, q3)) in SETTINGS.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + s as u64);
        let mut r = 1.0;
        for _ in 0..1000 {
            r = slice_transition(p, q2, q3, r, &mut rng).radius;
        }
        let mut draws = Vec::with_capacity(DRAWS);
        for _ in 0..DRAWS {
            for _ in 0..THIN {
                r = slice_transition(p, q2, q3, r, &mut rng).radius;
            }
            finite &= r.is_finite() && r > 0.0;
            draws.push(r);
        }
        draws.sort_by(f64::total_cmp);
        let ks = ks_distance(&cdf_at(p, q2, q3, &draws));
        worst = worst.max(ks);
        details.push(format!("{ks:.4}"));
    }
    Outcome::new(
        finite && worst < 0.02,
        format!("KS per setting [{}], max {worst:.4} (tol 0.02)", details.join(", ")),
    )
}
