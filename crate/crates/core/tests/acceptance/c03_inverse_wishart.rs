use dirlin::conjugate::sample_inverse_wishart;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::common::{correlation, mean, random_spd, std_error, variance_with_error};
use crate::Outcome;

const DRAWS: usize = 100_000;
const D1: usize = 2;
const D2: usize = 2;
const NU: f64 = 30.0;

/// Mean and entry variances of `IW(Ψ, m)` in dimension `p`.
fn iw_moments(psi: &DMatrix<f64>, m: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let p = psi.nrows() as f64;
    let mean = psi / (m - p - 1.0);
    let var = DMatrix::from_fn(psi.nrows(), psi.ncols(), |i, j| {
        ((m - p + 1.0) * psi[(i, j)].powi(2) + (m - p - 1.0) * psi[(i, i)] * psi[(j, j)])
            / ((m - p) * (m - p - 1.0).powi(2) * (m - p - 3.0))
    });
    (mean, var)
}

struct Tally {
    checks: usize,
    failures: Vec<String>,
    worst: f64,
}

impl Tally {
    /// Estimate within 3 standard errors of the target.
    fn within(&mut self, what: String, est: f64, target: f64, se: f64) {
        self.checks += 1;
        let z = (est - target).abs() / se;
        self.worst = self.worst.max(z);
        if z > 3.0 {
            self.failures.push(format!("{what}: {z:.2} SE"));
        }
    }

    fn moments(&mut self, label: &str, samples: &[DMatrix<f64>], psi: &DMatrix<f64>, m: f64) {
        let (mu, var) = iw_moments(psi, m);
        let n = psi.nrows();
        for i in 0..n {
            for j in i..n {
                let x: Vec<f64> = samples.iter().map(|s| s[(i, j)]).collect();
                self.within(format!("{label} mean[{i},{j}]"), mean(&x), mu[(i, j)], std_error(&x));
                let (v, se) = variance_with_error(&x);
                self.within(format!("{label} var[{i},{j}]"), v, var[(i, j)], se);
            }
        }
    }
}

pub fn run() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let d = D1 + D2;
    let s = random_spd(d, &mut rng);
    let s11 = s.view((0, 0), (D1, D1)).into_owned();
    let s12 = s.view((0, D1), (D1, D2)).into_owned();
    let s22 = s.view((D1, D1), (D2, D2)).into_owned();
    let s11_inv = s11.clone().try_inverse().unwrap();
    let s22_1 = &s22 - s12.transpose() * &s11_inv * &s12;
    let b_mean = &s11_inv * &s12;

    let mut sig11 = Vec::with_capacity(DRAWS);
    let mut regr = Vec::with_capacity(DRAWS);
    let mut schur = Vec::with_capacity(DRAWS);
    for _ in 0..DRAWS {
        let sigma = sample_inverse_wishart(&s, NU, &mut rng).unwrap();
        let a = sigma.view((0, 0), (D1, D1)).into_owned();
        let b = sigma.view((0, D1), (D1, D2)).into_owned();
        let c = sigma.view((D1, D1), (D2, D2)).into_owned();
        let a_inv = a.clone().try_inverse().unwrap();
        schur.push(&c - b.transpose() * &a_inv * &b);
        regr.push(&a_inv * b);
        sig11.push(a);
    }

    let mut t = Tally { checks: 0, failures: Vec::new(), worst: 0.0 };
    // (a) Σ₁₁ ~ IW(S₁₁, ν - d₂)
    t.moments("(a) Sigma11", &sig11, &s11, NU - D2 as f64);
    // (d) Σ₂₂·₁ ~ IW(S₂₂·₁, ν)
    t.moments("(d) Sigma22.1", &schur, &s22_1, NU);

    // (c) E[B | Σ₂₂·₁] = S₁₁⁻¹S₁₂ in every quintile of tr Σ₂₂·₁.
    let mut order: Vec<usize> = (0..DRAWS).collect();
    order.sort_by(|&x, &y| schur[x].trace().total_cmp(&schur[y].trace()));
    for (bin, idx) in order.chunks(DRAWS / 5).enumerate() {
        for i in 0..D1 {
            for j in 0..D2 {
                let x: Vec<f64> = idx.iter().map(|&k| regr[k][(i, j)]).collect();
                t.within(format!("(c) bin {bin} B[{i},{j}]"), mean(&x), b_mean[(i, j)], std_error(&x));
            }
        }
    }
    // (b) Σ₁₁ independent of (B, Σ₂₂·₁)
    let mut max_rho: f64 = 0.0;
    let upper = |n: usize| (0..n).flat_map(move |i| (i..n).map(move |j| (i, j)));
    for (i, j) in upper(D1) {
        let a: Vec<f64> = sig11.iter().map(|m| m[(i, j)]).collect();
        let mut others: Vec<Vec<f64>> = Vec::new();
        for k in 0..D1 {
            for l in 0..D2 {
                others.push(regr.iter().map(|m| m[(k, l)]).collect());
            }
        }
        for (k, l) in upper(D2) {
            others.push(schur.iter().map(|m| m[(k, l)]).collect());
        }
        for o in &others {
            max_rho = max_rho.max(correlation(&a, o).abs());
        }
    }

    let passed = t.failures.is_empty() && max_rho < 0.02;
    let mut detail = format!(
        "{} moment checks, worst {:.2} SE (tol 3), max |rho| = {max_rho:.4} (tol 0.02)",
        t.checks, t.worst
    );
    if !t.failures.is_empty() {
        detail.push_str(&format!("; failing: {}", t.failures.join(", ")));
    }
    Outcome::new(passed, detail)
}
