use dirlin::metrics::{adjusted_rand_index, rand_index, salso, voi, voi_objective, Partition, SalsoConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::common::{ari_oracle, rand_index_oracle, set_partitions, voi_oracle};
use crate::Outcome;

fn random_labels<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    let k = rng.random_range(1..=n);
    (0..n).map(|_| rng.random_range(0..k)).collect()
}

/// A noisy copy of `truth`: each item moves to a random label with probability `flip`.
fn perturb<R: Rng>(truth: &[usize], flip: f64, rng: &mut R) -> Vec<usize> {
    let k = truth.iter().max().unwrap() + 2;
    truth.iter().map(|&l| if rng.random_bool(flip) { rng.random_range(0..k) } else { l }).collect()
}

pub fn run() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut worst_metric: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(2..=12);
        let (x, y) = (random_labels(n, &mut rng), random_labels(n, &mut rng));
        let (a, b) = (Partition::from_labels(&x), Partition::from_labels(&y));
        for (got, want) in [
            (rand_index(&a, &b).unwrap(), rand_index_oracle(&x, &y)),
            (adjusted_rand_index(&a, &b).unwrap(), ari_oracle(&x, &y)),
            (voi(&a, &b).unwrap(), voi_oracle(&x, &y)),
        ] {
            worst_metric = worst_metric.max((got - want).abs());
        }
    }

    let mut worst_gap: f64 = 0.0;
    let mut above_best_draw = 0;
    let cases = 40;
    for _ in 0..cases {
        let n = rng.random_range(3..=8);
        let truth = random_labels(n, &mut rng);
        let m = rng.random_range(2..=15);
        let flip = rng.random_range(0.0..0.6);
        let raw: Vec<Vec<usize>> = (0..m).map(|_| perturb(&truth, flip, &mut rng)).collect();
        let draws: Vec<Partition> = raw.iter().map(|l| Partition::from_labels(l)).collect();
        let objective = |c: &[usize]| raw.iter().map(|d| voi_oracle(c, d)).sum::<f64>();
        let exhaustive = set_partitions(n).iter().map(|c| objective(c)).fold(f64::INFINITY, f64::min);
        let best_draw = raw.iter().map(|c| objective(c)).fold(f64::INFINITY, f64::min);
        let result = salso(&draws, &SalsoConfig::default(), &mut rng).unwrap();
        let recomputed = voi_objective(&result.partition, &draws).unwrap();
        worst_gap = worst_gap.max((result.objective - exhaustive).abs()).max((recomputed - exhaustive).abs());
        if result.objective > best_draw + 1e-9 {
            above_best_draw += 1;
        }
    }
    Outcome::new(
        worst_metric <= 1e-12 && worst_gap <= 1e-9 && above_best_draw == 0,
        format!(
            "100 pairs: max metric deviation {worst_metric:.1e} (tol 1e-12); {cases} consensus cases: max gap to exhaustive optimum {worst_gap:.1e}, {above_best_draw} above best draw"
        ),
    )
}
