//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Run alone with `cargo test -p dirlin --test acceptance`.

#[path = "../common/mod.rs"]
mod common;

mod c01_density;
mod c02_kappa;
mod c03_inverse_wishart;
mod c04_marginal;
mod c05_radius;
mod c06_gibbs;
mod c07_recovery;
mod c08_metrics;
mod c09_hdp_lr;
mod c10_segmentation;

use std::time::{Duration, Instant};

pub struct Outcome {
    pub passed: bool,
    pub detail: String,
}

impl Outcome {
    pub fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self { passed, detail: detail.into() }
    }
}

type Criterion = (usize, &'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "density normalisation", Duration::from_secs(60), c01_density::run),
        (2, "kappa recursion vs quadrature", Duration::from_secs(10), c02_kappa::run),
        (3, "inverse-Wishart block properties", Duration::from_secs(120), c03_inverse_wishart::run),
        (4, "marginal likelihood vs Monte Carlo", Duration::from_secs(120), c04_marginal::run),
        (5, "radius sampler law", Duration::from_secs(120), c05_radius::run),
        (6, "collapsed Gibbs exactness", Duration::from_secs(10), c06_gibbs::run),
        (7, "clustering recovery", Duration::from_secs(30 * 60), c07_recovery::run),
        (8, "partition metrics and consensus", Duration::from_secs(60), c08_metrics::run),
        (9, "HDP likelihood ratio", Duration::from_secs(20 * 60), c09_hdp_lr::run),
        (10, "segmentation smoke", Duration::from_secs(10 * 60), c10_segmentation::run),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, budget, f) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = f();
        let elapsed = start.elapsed();
        let in_time = elapsed <= budget;
        let passed = outcome.passed && in_time;
        if !passed {
            failed += 1;
        }
        println!(
            "criterion {id:2} {:<36} {}  {} [{:.1}s / {}s budget]",
            name,
            if passed { "PASS" } else { "FAIL" },
            outcome.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
