use dirlin::special::ln_kappa;

use crate::common::ln_kappa_quadrature;
use crate::Outcome;

pub fn run() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut at = (0, 0.0);
    let mut count = 0;
    for p in 1..=6 {
        for i in 0..=240 {
            let x = -30.0 + 0.25 * i as f64;
            let rel = (ln_kappa(p, x).unwrap() - ln_kappa_quadrature(p, x)).exp_m1().abs();
            // NaN counts as the worst possible error.
            let rel = if rel.is_nan() { f64::INFINITY } else { rel };
            if rel > worst {
                worst = rel;
                at = (p, x);
            }
            count += 1;
        }
    }
    Outcome::new(
        worst <= 1e-8,
        format!("{count} grid points, max relative error {worst:.2e} at p={}, x={} (tol 1e-8)", at.0, at.1),
    )
}
