//! Oracles shared by the integration tests. Nothing here calls into the
//! library code it is used to check.

#![allow(dead_code)]

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

/// One 15-point Kronrod panel: (estimate, |Kronrod - Gauss|).
fn gk15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Globally adaptive Gauss–Kronrod quadrature on `[a, b]`.
pub fn integrate(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> f64 {
    let mut panels = vec![(a, b, gk15(&mut f, a, b))];
    for _ in 0..20_000 {
        let total: f64 = panels.iter().map(|p| p.2 .0).sum();
        let err: f64 = panels.iter().map(|p| p.2 .1).sum();
        if err <= abs_tol.max(rel_tol * total.abs()) {
            break;
        }
        let (worst, _) = panels.iter().enumerate().max_by(|x, y| x.1 .2 .1.total_cmp(&y.1 .2 .1)).unwrap();
        let (lo, hi, _) = panels.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        panels.push((lo, mid, gk15(&mut f, lo, mid)));
        panels.push((mid, hi, gk15(&mut f, mid, hi)));
    }
    panels.iter().map(|p| p.2 .0).sum()
}

/// Integral of `f` over consecutive breakpoints.
pub fn integrate_pieces(mut f: impl FnMut(f64) -> f64, points: &[f64], rel_tol: f64, abs_tol: f64) -> f64 {
    points.windows(2).map(|w| integrate(&mut f, w[0], w[1], rel_tol, abs_tol)).sum()
}

/// `ln ∫₀^∞ r^{p-1} exp(-(r-x)²/2) dr` by quadrature, with the integrand
/// scaled by its maximum so the tails cannot underflow the sum.
pub fn ln_kappa_quadrature(p: usize, x: f64) -> f64 {
    let k = (p - 1) as f64;
    let mode = if p == 1 { x.max(0.0) } else { 0.5 * (x + (x * x + 4.0 * k).sqrt()) };
    let ln_g = |r: f64| match r {
        r if r < 0.0 || (r == 0.0 && p > 1) => f64::NEG_INFINITY,
        r if p == 1 => -0.5 * (r - x).powi(2),
        r => k * r.ln() - 0.5 * (r - x).powi(2),
    };
    let peak = ln_g(mode);
    // Width of the peak on the scale where the integrand decays.
    let w = if x < 0.0 { (1.0 + k) / (-x + 1.0) } else { 1.0 };
    let mut pts = vec![0.0];
    for m in [0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0] {
        let a = mode - m * w;
        if a > 0.0 {
            pts.push(a);
        }
    }
    pts.push(mode);
    for m in [0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0] {
        pts.push(mode + m * w);
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts.retain(|&v| v >= 0.0);
    let upper = *pts.last().unwrap();
    pts.push(upper.max(mode + 40.0));
    // Scaled to peak 1, so an absolute floor per piece bounds the total error.
    peak + integrate_pieces(|r| (ln_g(r) - peak).exp(), &pts, 1e-13, 1e-16).ln()
}

/// Every set partition of `0..n` as restricted growth strings.
pub fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    fn rec(i: usize, n: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == n {
            out.push(cur.clone());
            return;
        }
        for l in 0..=max {
            cur.push(l);
            rec(i + 1, n, if l == max { max + 1 } else { max }, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        out.push(Vec::new());
    } else {
        rec(0, n, 0, &mut Vec::new(), &mut out);
    }
    out
}

/// Relabel in order of first appearance.
pub fn canonical(labels: &[usize]) -> Vec<usize> {
    let mut map = HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

/// Pair counts `(a, b, c, d)`: together in both, only first, only second, neither.
pub fn pair_counts(x: &[usize], y: &[usize]) -> (f64, f64, f64, f64) {
    let (mut a, mut b, mut c, mut d) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            match (x[i] == x[j], y[i] == y[j]) {
                (true, true) => a += 1.0,
                (true, false) => b += 1.0,
                (false, true) => c += 1.0,
                (false, false) => d += 1.0,
            }
        }
    }
    (a, b, c, d)
}

pub fn rand_index_oracle(x: &[usize], y: &[usize]) -> f64 {
    let (a, b, c, d) = pair_counts(x, y);
    (a + d) / (a + b + c + d)
}

/// Hubert–Arabie ARI in pair-count form.
pub fn ari_oracle(x: &[usize], y: &[usize]) -> f64 {
    let (a, b, c, d) = pair_counts(x, y);
    let den = (a + b) * (b + d) + (a + c) * (c + d);
    if den == 0.0 {
        return 1.0;
    }
    2.0 * (a * d - b * c) / den
}

fn entropy_of(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts.map(|c| c as f64 / n).filter(|&p| p > 0.0).map(|p| -p * p.log2()).sum()
}

/// `H(X) + H(Y) - 2 I(X; Y)` in bits, from the definition.
pub fn voi_oracle(x: &[usize], y: &[usize]) -> f64 {
    let n = x.len() as f64;
    let mut cx: HashMap<usize, usize> = HashMap::new();
    let mut cy: HashMap<usize, usize> = HashMap::new();
    let mut cxy: HashMap<(usize, usize), usize> = HashMap::new();
    for (&a, &b) in x.iter().zip(y) {
        *cx.entry(a).or_default() += 1;
        *cy.entry(b).or_default() += 1;
        *cxy.entry((a, b)).or_default() += 1;
    }
    let mut mi = 0.0;
    for (&(a, b), &c) in &cxy {
        let pxy = c as f64 / n;
        mi += pxy * (pxy / ((cx[&a] as f64 / n) * (cy[&b] as f64 / n))).log2();
    }
    entropy_of(cx.values().copied(), n) + entropy_of(cy.values().copied(), n) - 2.0 * mi
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
}

/// Standard error of the sample mean.
pub fn std_error(x: &[f64]) -> f64 {
    (variance(x) / x.len() as f64).sqrt()
}

/// Sample variance and the standard error of that estimate.
pub fn variance_with_error(x: &[f64]) -> (f64, f64) {
    let m = mean(x);
    let sq: Vec<f64> = x.iter().map(|v| (v - m).powi(2)).collect();
    (variance(x), std_error(&sq))
}

pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

/// Ranks starting at 1, ties averaged.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    correlation(&ranks(x), &ranks(y))
}

/// Two-sided KS distance of sorted samples against CDF values at those samples.
pub fn ks_distance(cdf_at_sorted: &[f64]) -> f64 {
    let n = cdf_at_sorted.len() as f64;
    cdf_at_sorted
        .iter()
        .enumerate()
        .map(|(i, &f)| (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs()))
        .fold(0.0, f64::max)
}

pub fn random_spd<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| 0.7 * rng.sample::<f64, _>(StandardNormal));
    &a * a.transpose() + DMatrix::identity(d, d) * 0.3
}

/// Random mean and covariance with `Σ[0,0] = 1`.
pub fn random_unit_first<R: Rng + ?Sized>(d: usize, mean_scale: f64, rng: &mut R) -> (DVector<f64>, DMatrix<f64>) {
    let s = random_spd(d, rng);
    let s = &s / s[(0, 0)];
    let mu = DVector::from_fn(d, |_, _| mean_scale * rng.sample::<f64, _>(StandardNormal));
    (mu, s)
}

/// `ln N(x | m, S)` by an explicit inverse and determinant.
pub fn gaussian_ln_pdf(x: &DVector<f64>, m: &DVector<f64>, s: &DMatrix<f64>) -> f64 {
    let d = x.len() as f64;
    let inv = s.clone().try_inverse().expect("invertible");
    let r = x - m;
    -0.5 * (d * (2.0 * std::f64::consts::PI).ln() + s.determinant().ln() + (r.transpose() * inv * r)[(0, 0)])
}

/// Unit vector from hyperspherical angles, by the product-of-sines rule.
pub fn unit_from_angles(angles: &[f64]) -> Vec<f64> {
    let p = angles.len() + 1;
    let mut u = vec![0.0; p];
    let mut s = 1.0;
    for k in 0..p - 1 {
        u[k] = s * angles[k].cos();
        s *= angles[k].sin();
    }
    u[p - 1] = s;
    u
}
