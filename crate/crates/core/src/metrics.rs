//! Partition comparison and consensus clustering.
//!
//! Entropies are in bits. VoI between partitions `A` and `B` of `n` items is
//! `(1/n)[Σf(a_i) + Σf(b_j) - 2Σf(n_ij)]` with `f(x) = x log₂ x`.

use std::collections::HashMap;
use std::hash::Hash;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Labels relabeled to `0..K` in order of first appearance.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Partition {
    labels: Vec<usize>,
}

impl Partition {
    pub fn from_labels<L: Eq + Hash + Copy>(labels: &[L]) -> Self {
        let mut map = HashMap::new();
        let labels = labels
            .iter()
            .map(|l| {
                let next = map.len();
                *map.entry(*l).or_insert(next)
            })
            .collect();
        Self { labels }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_clusters(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.num_clusters()];
        for &l in &self.labels {
            s[l] += 1;
        }
        s
    }

    pub fn into_labels(self) -> Vec<usize> {
        self.labels
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    pub rows: usize,
    pub cols: usize,
    /// Row-major `rows×cols`.
    pub counts: Vec<usize>,
    pub row_sums: Vec<usize>,
    pub col_sums: Vec<usize>,
    pub n: usize,
}

impl ContingencyTable {
    pub fn new(a: &Partition, b: &Partition) -> Result<Self> {
        check_lengths(a, b)?;
        let (rows, cols) = (a.num_clusters(), b.num_clusters());
        let mut counts = vec![0; rows * cols];
        for (&i, &j) in a.labels.iter().zip(&b.labels) {
            counts[i * cols + j] += 1;
        }
        Ok(Self { rows, cols, counts, row_sums: a.sizes(), col_sums: b.sizes(), n: a.len() })
    }

    pub fn get(&self, i: usize, j: usize) -> usize {
        self.counts[i * self.cols + j]
    }
}

fn check_lengths(a: &Partition, b: &Partition) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::domain(format!("partition lengths differ: {} vs {}", a.len(), b.len())));
    }
    Ok(())
}

fn xlog2x(x: f64) -> f64 {
    if x > 0.0 {
        x * x.log2()
    } else {
        0.0
    }
}

fn choose2(x: usize) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Shannon entropy of a partition, in bits.
pub fn entropy(c: &Partition) -> f64 {
    if c.is_empty() {
        return 0.0;
    }
    let n = c.len() as f64;
    let s: f64 = c.sizes().iter().map(|&k| xlog2x(k as f64)).sum();
    (n.log2() - s / n).max(0.0)
}

/// Mutual information in bits.
pub fn mutual_information(a: &Partition, b: &Partition) -> Result<f64> {
    let t = ContingencyTable::new(a, b)?;
    if t.n == 0 {
        return Ok(0.0);
    }
    let n = t.n as f64;
    let mut mi = 0.0;
    for i in 0..t.rows {
        for j in 0..t.cols {
            let nij = t.get(i, j) as f64;
            if nij > 0.0 {
                mi += nij / n * (n * nij / (t.row_sums[i] as f64 * t.col_sums[j] as f64)).log2();
            }
        }
    }
    Ok(mi)
}

/// Variation of information in bits.
pub fn voi(a: &Partition, b: &Partition) -> Result<f64> {
    let t = ContingencyTable::new(a, b)?;
    if t.n == 0 {
        return Ok(0.0);
    }
    let rows: f64 = t.row_sums.iter().map(|&k| xlog2x(k as f64)).sum();
    let cols: f64 = t.col_sums.iter().map(|&k| xlog2x(k as f64)).sum();
    let joint: f64 = t.counts.iter().map(|&k| xlog2x(k as f64)).sum();
    Ok(((rows + cols - 2.0 * joint) / t.n as f64).max(0.0))
}

struct PairCounts {
    both: f64,
    rows: f64,
    cols: f64,
    total: f64,
}

fn pair_counts(a: &Partition, b: &Partition) -> Result<PairCounts> {
    let t = ContingencyTable::new(a, b)?;
    if t.n < 2 {
        return Err(Error::domain(format!("need at least 2 items, got {}", t.n)));
    }
    Ok(PairCounts {
        both: t.counts.iter().map(|&k| choose2(k)).sum(),
        rows: t.row_sums.iter().map(|&k| choose2(k)).sum(),
        cols: t.col_sums.iter().map(|&k| choose2(k)).sum(),
        total: choose2(t.n),
    })
}

/// Fraction of item pairs on which the two partitions agree.
pub fn rand_index(a: &Partition, b: &Partition) -> Result<f64> {
    let pc = pair_counts(a, b)?;
    let separated = pc.total - pc.rows - pc.cols + pc.both;
    Ok((pc.both + separated) / pc.total)
}

/// Hubert–Arabie adjusted Rand index. When the expected and maximum index
/// coincide (both partitions trivial) the value is 1 for equal partitions
/// and 0 otherwise.
pub fn adjusted_rand_index(a: &Partition, b: &Partition) -> Result<f64> {
    let pc = pair_counts(a, b)?;
    let expected = pc.rows * pc.cols / pc.total;
    let max = 0.5 * (pc.rows + pc.cols);
    let denom = max - expected;
    if denom == 0.0 {
        return Ok(if a == b { 1.0 } else { 0.0 });
    }
    Ok((pc.both - expected) / denom)
}

/// Potential scale reduction factor of a scalar series across chains.
///
/// Constant series (zero within-chain variance) give 1 when the chains also
/// agree and `+∞` otherwise.
pub fn gelman_rubin(series: &[Vec<f64>]) -> Result<f64> {
    let m = series.len();
    if m < 2 {
        return Err(Error::domain(format!("need at least 2 chains, got {m}")));
    }
    let n = series[0].len();
    if n < 2 || series.iter().any(|s| s.len() != n) {
        return Err(Error::domain("chains must have equal lengths of at least 2"));
    }
    let nf = n as f64;
    let means: Vec<f64> = series.iter().map(|s| s.iter().sum::<f64>() / nf).collect();
    let grand = means.iter().sum::<f64>() / m as f64;
    let b = nf / (m as f64 - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let w = series
        .iter()
        .zip(&means)
        .map(|(s, mu)| s.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (nf - 1.0))
        .sum::<f64>()
        / m as f64;
    if w == 0.0 {
        return Ok(if b == 0.0 { 1.0 } else { f64::INFINITY });
    }
    let var_plus = (nf - 1.0) / nf * w + b / nf;
    Ok((var_plus / w).sqrt())
}

// -- SALSO -----------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SalsoConfig {
    /// Defaults to twice the largest cluster count among the draws.
    #[serde(default)]
    pub max_clusters: Option<usize>,
    #[serde(default = "default_runs")]
    pub n_runs: usize,
    #[serde(default = "default_sweeps")]
    pub max_sweeps: usize,
}

fn default_runs() -> usize {
    16
}

fn default_sweeps() -> usize {
    100
}

impl Default for SalsoConfig {
    fn default() -> Self {
        Self { max_clusters: None, n_runs: default_runs(), max_sweeps: default_sweeps() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SalsoResult {
    pub partition: Partition,
    /// `Σ_m VoI(C, C_m)` in bits, summed over all (not deduplicated) draws.
    pub objective: f64,
}

/// `Σ_m VoI(candidate, draw_m)`.
pub fn voi_objective(candidate: &Partition, draws: &[Partition]) -> Result<f64> {
    draws.iter().map(|d| voi(candidate, d)).sum()
}

/// Work budget (in item×draw×candidate steps) for scoring the distinct draws
/// themselves as candidates.
const DRAW_SCORING_BUDGET: f64 = 1e9;

/// Approximate minimizer of the summed VoI over partitions with at most
/// `max_clusters` clusters: randomized greedy allocation followed by
/// reassignment sweeps, best of `n_runs` restarts.
pub fn salso<R: Rng + ?Sized>(draws: &[Partition], config: &SalsoConfig, rng: &mut R) -> Result<SalsoResult> {
    let first = draws.first().ok_or_else(|| Error::domain("consensus needs at least one draw"))?;
    let n = first.len();
    if draws.iter().any(|d| d.len() != n) {
        return Err(Error::domain("draws have differing lengths"));
    }
    if n == 0 {
        return Ok(SalsoResult { partition: first.clone(), objective: 0.0 });
    }
    let max_k_seen = draws.iter().map(Partition::num_clusters).max().unwrap_or(1);
    let max_clusters = config.max_clusters.unwrap_or(2 * max_k_seen).clamp(1, n);

    // Deduplicate: the objective is a weighted sum over distinct draws.
    let mut index: HashMap<&Partition, usize> = HashMap::new();
    let mut unique: Vec<&Partition> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for d in draws {
        match index.get(d) {
            Some(&k) => weights[k] += 1.0,
            None => {
                index.insert(d, unique.len());
                unique.push(d);
                weights.push(1.0);
            }
        }
    }
    let search = Search::new(&unique, &weights, n, max_clusters);

    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut consider = |labels: Vec<usize>, obj: f64| {
        if best.as_ref().map_or(true, |(_, b)| obj < *b - 1e-9) {
            best = Some((labels, obj));
        }
    };

    for _ in 0..config.n_runs.max(1) {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut state = search.greedy(&order);
        search.sweeps(&mut state, config.max_sweeps, rng);
        let obj = search.objective(&state);
        consider(state.labels, obj);
    }

    // Seed one more local search from the best-scoring distinct draw so the
    // result never loses to an input draw.
    let by_freq = {
        let mut v: Vec<usize> = (0..unique.len()).collect();
        v.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
        v
    };
    let per_candidate = (unique.len() * n) as f64;
    let affordable = ((DRAW_SCORING_BUDGET / per_candidate) as usize).max(1).min(unique.len());
    if affordable < unique.len() {
        log::warn!("consensus: scoring {affordable} of {} distinct draws as candidates", unique.len());
    }
    let mut best_draw: Option<(usize, f64)> = None;
    for &u in &by_freq[..affordable] {
        if unique[u].num_clusters() > max_clusters {
            continue;
        }
        let obj = search.objective(&search.state_from(unique[u].labels()));
        if best_draw.map_or(true, |(_, b)| obj < b) {
            best_draw = Some((u, obj));
        }
    }
    if let Some((u, _)) = best_draw {
        let mut state = search.state_from(unique[u].labels());
        search.sweeps(&mut state, config.max_sweeps, rng);
        let obj = search.objective(&state);
        consider(state.labels, obj);
    }

    let (labels, _) = best.expect("at least one run");
    let partition = Partition::from_labels(&labels);
    let objective = unique
        .iter()
        .zip(&weights)
        .map(|(d, w)| voi(&partition, d).map(|v| v * w))
        .sum::<Result<f64>>()?;
    Ok(SalsoResult { partition, objective })
}

struct Search<'a> {
    draws: &'a [&'a Partition],
    weights: &'a [f64],
    total_weight: f64,
    n: usize,
    max_clusters: usize,
    draw_k: Vec<usize>,
}

/// Candidate partition with per-cluster sizes and, for each draw, the
/// cluster × draw-label contingency counts.
struct SearchState {
    labels: Vec<usize>,
    sizes: Vec<usize>,
    joint: Vec<Vec<usize>>,
}

const UNASSIGNED: usize = usize::MAX;

impl<'a> Search<'a> {
    fn new(draws: &'a [&'a Partition], weights: &'a [f64], n: usize, max_clusters: usize) -> Self {
        Self {
            draws,
            weights,
            total_weight: weights.iter().sum(),
            n,
            max_clusters,
            draw_k: draws.iter().map(|d| d.num_clusters()).collect(),
        }
    }

    fn empty_state(&self) -> SearchState {
        SearchState {
            labels: vec![UNASSIGNED; self.n],
            sizes: vec![0; self.max_clusters],
            joint: self.draw_k.iter().map(|&k| vec![0; self.max_clusters * k]).collect(),
        }
    }

    fn state_from(&self, labels: &[usize]) -> SearchState {
        let mut s = self.empty_state();
        for (i, &l) in labels.iter().enumerate() {
            self.place(&mut s, i, l);
        }
        s
    }

    fn place(&self, s: &mut SearchState, item: usize, k: usize) {
        s.labels[item] = k;
        s.sizes[k] += 1;
        for (m, d) in self.draws.iter().enumerate() {
            s.joint[m][k * self.draw_k[m] + d.labels()[item]] += 1;
        }
    }

    fn unplace(&self, s: &mut SearchState, item: usize) {
        let k = s.labels[item];
        s.labels[item] = UNASSIGNED;
        s.sizes[k] -= 1;
        for (m, d) in self.draws.iter().enumerate() {
            s.joint[m][k * self.draw_k[m] + d.labels()[item]] -= 1;
        }
    }

    /// Change in `n·Σ_m w_m VoI` (up to terms independent of the candidate)
    /// from adding `item` to cluster `k`.
    fn delta(&self, s: &SearchState, item: usize, k: usize) -> f64 {
        let nk = s.sizes[k] as f64;
        let mut d = self.total_weight * (xlog2x(nk + 1.0) - xlog2x(nk));
        for (m, dr) in self.draws.iter().enumerate() {
            let c = s.joint[m][k * self.draw_k[m] + dr.labels()[item]] as f64;
            d -= 2.0 * self.weights[m] * (xlog2x(c + 1.0) - xlog2x(c));
        }
        d
    }

    /// Best cluster for `item`: live clusters in label order, then the first
    /// empty slot. Ties go to the lower label.
    fn best_cluster(&self, s: &SearchState, item: usize) -> usize {
        let mut best = (UNASSIGNED, f64::INFINITY);
        let mut opened = false;
        for k in 0..self.max_clusters {
            if s.sizes[k] == 0 {
                if opened {
                    continue;
                }
                opened = true;
            }
            let d = self.delta(s, item, k);
            if d < best.1 {
                best = (k, d);
            }
        }
        best.0
    }

    fn greedy(&self, order: &[usize]) -> SearchState {
        let mut s = self.empty_state();
        for &i in order {
            let k = self.best_cluster(&s, i);
            self.place(&mut s, i, k);
        }
        s
    }

    fn sweeps<R: Rng + ?Sized>(&self, s: &mut SearchState, max_sweeps: usize, rng: &mut R) {
        let mut order: Vec<usize> = (0..self.n).collect();
        let mut current = self.objective(s);
        for _ in 0..max_sweeps {
            order.shuffle(rng);
            for &i in &order {
                self.unplace(s, i);
                let k = self.best_cluster(s, i);
                self.place(s, i, k);
            }
            let next = self.objective(s);
            if next >= current - 1e-9 {
                break;
            }
            current = next;
        }
    }

    /// `Σ_m w_m VoI(candidate, draw_m)` in bits.
    fn objective(&self, s: &SearchState) -> f64 {
        let own: f64 = s.sizes.iter().map(|&k| xlog2x(k as f64)).sum();
        let mut total = 0.0;
        for (m, d) in self.draws.iter().enumerate() {
            let theirs: f64 = d.sizes().iter().map(|&k| xlog2x(k as f64)).sum();
            let joint: f64 = s.joint[m].iter().map(|&k| xlog2x(k as f64)).sum();
            total += self.weights[m] * (own + theirs - 2.0 * joint);
        }
        total / self.n as f64
    }
}
