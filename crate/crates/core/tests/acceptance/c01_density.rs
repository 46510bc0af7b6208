use std::f64::consts::{PI, TAU};

use dirlin::directional::{pn_log_density, spn_log_density, ConstraintMode, DirLinObservation, SpnParams, UnitDirection};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::common::{gaussian_ln_pdf, integrate, integrate_pieces, random_unit_first, unit_from_angles};
use crate::Outcome;

/// Joint log density of `(r, θ, y)` straight from the full Gaussian.
fn joint_oracle(r: f64, angles: &[f64], y: &[f64], mu: &DVector<f64>, sigma: &DMatrix<f64>) -> f64 {
    let p = angles.len() + 1;
    let u = unit_from_angles(angles);
    let z = DVector::from_iterator(p + y.len(), u.iter().map(|v| r * v).chain(y.iter().copied()));
    let jac: f64 = angles[..p - 2].iter().enumerate().map(|(j, a)| (p - 2 - j) as f64 * a.sin().ln()).sum();
    gaussian_ln_pdf(&z, mu, sigma) + (p - 1) as f64 * r.ln() + jac
}

fn density(params: &SpnParams<f64>, angles: &[f64], y: &[f64]) -> f64 {
    let obs = DirLinObservation::from_angles(angles.to_vec(), y.to_vec()).unwrap();
    spn_log_density(&obs, params).unwrap().exp()
}

/// `∫ f(θ, y) dθ dy` over the full angle box and `μ_y ± 12 sd`.
fn total_mass(params: &SpnParams<f64>, p: usize, q: usize) -> f64 {
    let over_angles = |y: &[f64]| -> f64 {
        match p {
            2 => integrate(|t| density(params, &[t], y), 0.0, TAU, 1e-8, 1e-12),
            3 => integrate(
                |t1| integrate(|t2| density(params, &[t1, t2], y), 0.0, TAU, 1e-8, 1e-12),
                0.0,
                PI,
                1e-7,
                1e-11,
            ),
            _ => unreachable!(),
        }
    };
    if q == 0 {
        return over_angles(&[]);
    }
    let (m, sd) = (params.mu_y()[0], params.sigma_yy()[(0, 0)].sqrt());
    integrate(|y| over_angles(&[y]), m - 12.0 * sd, m + 12.0 * sd, 1e-6, 1e-10)
}

pub fn run() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst_mass: f64 = 0.0;
    let mut worst_r: f64 = 0.0;
    let mut sets = 0;
    for p in [2usize, 3] {
        for s in 0..20 {
            let q = s % 2;
            let (mu, sigma) = random_unit_first(p + q, 1.5, &mut rng);
            let params = SpnParams::new(mu.clone(), sigma.clone(), p, ConstraintMode::UnitFirstEntry).unwrap();
            worst_mass = worst_mass.max((total_mass(&params, p, q) - 1.0).abs());

            for _ in 0..5 {
                let mut angles: Vec<f64> = (0..p - 2).map(|_| rng.random_range(0.1..PI - 0.1)).collect();
                angles.push(rng.random_range(0.0..TAU));
                let y: Vec<f64> = (0..q).map(|_| mu[p] + rng.random_range(-2.0..2.0)).collect();
                let obs = DirLinObservation::from_angles(angles.clone(), y.clone()).unwrap();
                let ln_f = if q == 0 {
                    pn_log_density(&UnitDirection::new(angles.clone()).unwrap(), &mu, &sigma).unwrap()
                } else {
                    spn_log_density(&obs, &params).unwrap()
                };
                let ratio = integrate_pieces(
                    |r| if r <= 0.0 { 0.0 } else { (joint_oracle(r, &angles, &y, &mu, &sigma) - ln_f).exp() },
                    &[0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 40.0, 120.0],
                    1e-12,
                    1e-16,
                );
                worst_r = worst_r.max((ratio - 1.0).abs());
            }
            sets += 1;
        }
    }
    Outcome::new(
        worst_mass <= 1e-4 && worst_r <= 1e-6,
        format!("{sets} sets: max |mass-1| = {worst_mass:.2e} (tol 1e-4), max rel r-quadrature error = {worst_r:.2e} (tol 1e-6)"),
    )
}
