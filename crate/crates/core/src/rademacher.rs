//! Rademacher sums `S = Σ c_k ε_k` and the matrix quantity
//! `‖A‖_{ε,p} = sup_{‖s‖₂,‖t‖₂ ≤ 1} ‖Σ a_ij ε_ij s_i t_j‖_p`.
//!
//! The supremum is not computable in general. [`estimate_rad_norm`] returns
//! the `L_p` value at the best feasible witness it finds, which is a lower
//! bound, together with the Hitczenko-functional optimum as a surrogate.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{symmetric_eigen, top_singular_pair, DenseMatrix, Entry, SparsePattern};
use crate::rng::{derive_seed, sign_bits, stream, Domain, SignBits};

/// Longest coefficient vector accepted by exact enumeration.
pub const EXACT_MAX_LEN: usize = 20;
/// Exact `combinatorial_m` always runs at or below this many entries.
pub const EXACT_M_MAX_NNZ: usize = 24;
/// Otherwise it runs when `C(nnz, k)` does not exceed this.
pub const EXACT_M_MAX_SUBSETS: u64 = 1_000_000;

fn check_order(p: f64) -> Result<()> {
    if p.is_finite() && p >= 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("moment order must be a finite p >= 1, got {p}")))
    }
}

/// Hitczenko's two-sided proxy for `‖Σ c_k ε_k‖_p`:
/// `Σ_{k≤⌊p⌋} c*_k + √p (Σ_{k>⌊p⌋} (c*_k)²)^{1/2}`.
///
/// # Panics
/// If `p < 1`.
pub fn hitczenko_lp(c: &[f64], p: f64) -> f64 {
    assert!(p >= 1.0, "hitczenko_lp needs p >= 1, got {p}");
    let mut abs: Vec<f64> = c.iter().map(|x| x.abs()).collect();
    abs.sort_unstable_by(|a, b| b.total_cmp(a));
    let head = (p.floor() as usize).min(abs.len());
    let tail: f64 = abs[head..].iter().map(|x| x * x).sum();
    abs[..head].iter().sum::<f64>() + p.sqrt() * tail.sqrt()
}

/// Exact law of `|Σ c_k ε_k|`, by enumerating all sign patterns.
#[derive(Debug, Clone)]
pub struct RadSumDistribution {
    /// `|S|` over the `2^{m−1}` patterns with the first sign fixed, ascending.
    /// The law of `|S|` is symmetric in that sign, so each value has mass
    /// `2^{−(m−1)}`.
    values: Vec<f64>,
}

impl RadSumDistribution {
    pub fn new(c: &[f64]) -> Result<Self> {
        if c.len() > EXACT_MAX_LEN {
            return Err(Error::OverBudget {
                what: "exact Rademacher enumeration",
                detail: format!("{} coefficients, limit {EXACT_MAX_LEN}", c.len()),
            });
        }
        if c.iter().any(|x| !x.is_finite()) {
            return Err(invalid("non-finite Rademacher coefficient"));
        }
        let mut values = Vec::with_capacity(1 << c.len().saturating_sub(1));
        values.push(c.first().copied().unwrap_or(0.0));
        for &ck in c.iter().skip(1) {
            let len = values.len();
            for i in 0..len {
                let v = values[i];
                values[i] = v + ck;
                values.push(v - ck);
            }
        }
        for v in &mut values {
            *v = v.abs();
        }
        values.sort_unstable_by(f64::total_cmp);
        Ok(Self { values })
    }

    pub fn support_len(&self) -> usize {
        self.values.len()
    }

    /// `(E|S|^p)^{1/p}` for any `p > 0`.
    pub fn lp(&self, p: f64) -> f64 {
        let max = *self.values.last().expect("nonempty");
        if max == 0.0 {
            return 0.0;
        }
        let mean = self.values.iter().map(|v| (v / max).powf(p)).sum::<f64>() / self.values.len() as f64;
        max * mean.powf(1.0 / p)
    }

    /// `P(|S| ≥ x)`. Values within a relative `1e-12` below `x` count as
    /// reaching it, so that ties are not lost to rounding.
    pub fn prob_at_least(&self, x: f64) -> f64 {
        let cut = x - 1e-12 * x.abs();
        let below = self.values.partition_point(|&v| v < cut);
        (self.values.len() - below) as f64 / self.values.len() as f64
    }
}

/// `‖Σ c_k ε_k‖_p` by full enumeration (`len(c) ≤ 20`).
pub fn exact_lp_radsum(c: &[f64], p: f64) -> Result<f64> {
    check_order(p)?;
    Ok(RadSumDistribution::new(c)?.lp(p))
}

/// Monte Carlo estimate of `‖Σ c_k ε_k‖_p` with a delta-method standard error.
///
/// Sample `k` draws its signs from counter `k` of the `RadSum` stream of
/// `seed`, so the result does not depend on the thread count.
pub fn mc_lp_radsum(c: &[f64], p: f64, samples: usize, seed: u64) -> Result<(f64, f64)> {
    check_order(p)?;
    if samples == 0 {
        return Err(invalid("mc_lp_radsum needs samples >= 1"));
    }
    let scale = c.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return Ok((0.0, 0.0));
    }
    let xs: Vec<f64> = (0..samples as u64)
        .into_par_iter()
        .map(|k| {
            let mut signs = SignBits::new(stream(seed, Domain::RadSum, k));
            let s: f64 = c.iter().map(|x| x / scale * signs.next_sign()).sum();
            s.abs().powf(p)
        })
        .collect();
    let n = samples as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return Ok((0.0, 0.0));
    }
    let var = if samples > 1 {
        xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let est = mean.powf(1.0 / p);
    let stderr = est / (p * mean) * (var / n).sqrt();
    Ok((scale * est, scale * stderr))
}

/// Search strategy for [`combinatorial_m`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MMode {
    Greedy,
    Local,
    Exact,
}

/// `max_{|I| ≤ p} ‖(|a_ij| 1_{(i,j)∈I})‖` with the maximizing subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinatorialM {
    pub value: f64,
    pub subset: Vec<Entry>,
    pub mode: MMode,
}

/// Subset size used by `combinatorial_m`: `⌊p⌋`, capped by `nnz`.
pub fn m_subset_size(p: f64, nnz: usize) -> usize {
    (p.floor() as usize).max(1).min(nnz)
}

fn binomial(n: usize, k: usize) -> u64 {
    let k = k.min(n - k.min(n));
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

/// Whether exact `combinatorial_m` is within budget.
pub fn exact_m_feasible(nnz: usize, p: f64) -> bool {
    nnz <= EXACT_M_MAX_NNZ || binomial(nnz, m_subset_size(p, nnz)) <= EXACT_M_MAX_SUBSETS
}

/// Operator norm of `|a|` restricted to a handful of entries, via a small
/// dense Gram matrix.
fn subset_norm(entries: &[Entry], idx: &[usize]) -> f64 {
    match idx.len() {
        0 => return 0.0,
        1 => return entries[idx[0]].weight.abs(),
        _ => {}
    }
    let mut rows: Vec<usize> = idx.iter().map(|&k| entries[k].row).collect();
    let mut cols: Vec<usize> = idx.iter().map(|&k| entries[k].col).collect();
    rows.sort_unstable();
    rows.dedup();
    cols.sort_unstable();
    cols.dedup();
    if rows.len() == 1 || cols.len() == 1 {
        return idx.iter().map(|&k| entries[k].weight.powi(2)).sum::<f64>().sqrt();
    }
    let dense = restricted_dense(entries, idx, &rows, &cols);
    let gram = if rows.len() < cols.len() {
        dense.transpose().gram()
    } else {
        dense.gram()
    };
    let (eig, _) = symmetric_eigen(&gram);
    eig.into_iter().fold(0.0f64, f64::max).sqrt()
}

fn restricted_dense(entries: &[Entry], idx: &[usize], rows: &[usize], cols: &[usize]) -> DenseMatrix {
    let mut dense = DenseMatrix::zeros(rows.len(), cols.len());
    for &k in idx {
        let e = entries[k];
        let r = rows.binary_search(&e.row).expect("row listed");
        let c = cols.binary_search(&e.col).expect("col listed");
        dense.set(r, c, e.weight.abs());
    }
    dense
}

fn greedy_subset(entries: &[Entry], k: usize) -> (Vec<usize>, f64) {
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    let mut in_set = vec![false; entries.len()];
    let mut value = 0.0;
    for _ in 0..k {
        let mut best: Option<(usize, f64)> = None;
        for cand in 0..entries.len() {
            if in_set[cand] {
                continue;
            }
            chosen.push(cand);
            let v = subset_norm(entries, &chosen);
            chosen.pop();
            if best.is_none_or(|(_, bv)| v > bv) {
                best = Some((cand, v));
            }
        }
        let (cand, v) = best.expect("k <= nnz");
        in_set[cand] = true;
        chosen.push(cand);
        value = v;
    }
    (chosen, value)
}

fn local_search(entries: &[Entry], mut chosen: Vec<usize>, mut value: f64) -> (Vec<usize>, f64) {
    let mut in_set = vec![false; entries.len()];
    for &c in &chosen {
        in_set[c] = true;
    }
    for _pass in 0..1000 {
        let mut best: Option<(usize, usize, f64)> = None;
        for slot in 0..chosen.len() {
            let old = chosen[slot];
            for cand in 0..entries.len() {
                if in_set[cand] {
                    continue;
                }
                chosen[slot] = cand;
                let v = subset_norm(entries, &chosen);
                if v > value * (1.0 + 1e-12) && best.is_none_or(|(_, _, bv)| v > bv) {
                    best = Some((slot, cand, v));
                }
            }
            chosen[slot] = old;
        }
        match best {
            Some((slot, cand, v)) => {
                in_set[chosen[slot]] = false;
                in_set[cand] = true;
                chosen[slot] = cand;
                value = v;
            }
            None => break,
        }
    }
    (chosen, value)
}

fn exact_subset(entries: &[Entry], k: usize) -> (Vec<usize>, f64) {
    let n = entries.len();
    let mut idx: Vec<usize> = (0..k).collect();
    let mut best = (idx.clone(), subset_norm(entries, &idx));
    loop {
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return best;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
        let v = subset_norm(entries, &idx);
        if v > best.1 {
            best = (idx.clone(), v);
        }
    }
}

/// Largest operator norm of `|a|` restricted to at most `⌊p⌋` entries.
///
/// The norm of a nonnegative matrix is monotone in its entries, so only
/// subsets of exactly `min(⌊p⌋, nnz)` entries are searched.
pub fn combinatorial_m(a: &SparsePattern, p: f64, mode: MMode) -> Result<CombinatorialM> {
    check_order(p)?;
    let entries = a.entries();
    if entries.is_empty() {
        return Ok(CombinatorialM {
            value: 0.0,
            subset: Vec::new(),
            mode,
        });
    }
    let k = m_subset_size(p, entries.len());
    let (mut chosen, value) = match mode {
        MMode::Greedy => greedy_subset(entries, k),
        MMode::Local => {
            let (g, v) = greedy_subset(entries, k);
            local_search(entries, g, v)
        }
        MMode::Exact => {
            if !exact_m_feasible(entries.len(), p) {
                return Err(Error::OverBudget {
                    what: "exact combinatorial M",
                    detail: format!(
                        "C({}, {k}) subsets exceeds {EXACT_M_MAX_SUBSETS} and nnz > {EXACT_M_MAX_NNZ}",
                        entries.len()
                    ),
                });
            }
            exact_subset(entries, k)
        }
    };
    chosen.sort_unstable();
    Ok(CombinatorialM {
        value,
        subset: chosen.into_iter().map(|k| entries[k]).collect(),
        mode,
    })
}

/// Unit vectors `s` (length rows) and `t` (length cols).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessPair {
    pub s: Vec<f64>,
    pub t: Vec<f64>,
}

impl WitnessPair {
    /// Coefficients `a_ij s_i t_j` of the sign sum, zeros dropped.
    pub fn coefficients(&self, a: &SparsePattern) -> Vec<f64> {
        a.entries()
            .iter()
            .map(|e| e.weight * self.s[e.row] * self.t[e.col])
            .filter(|&c| c != 0.0)
            .collect()
    }

    pub fn is_feasible(&self) -> bool {
        let n2 = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        n2(&self.s) <= 1.0 + 1e-12 && n2(&self.t) <= 1.0 + 1e-12
    }
}

/// Top singular vectors of `|a| 1_I`, taken entrywise nonnegative and
/// embedded into the full index ranges.
pub fn proof_witness(a: &SparsePattern, subset: &[Entry]) -> Result<WitnessPair> {
    let mut s = vec![0.0; a.rows()];
    let mut t = vec![0.0; a.cols()];
    if subset.is_empty() {
        return Ok(WitnessPair { s, t });
    }
    let mut rows: Vec<usize> = subset.iter().map(|e| e.row).collect();
    let mut cols: Vec<usize> = subset.iter().map(|e| e.col).collect();
    rows.sort_unstable();
    rows.dedup();
    cols.sort_unstable();
    cols.dedup();
    let idx: Vec<usize> = (0..subset.len()).collect();
    let dense = restricted_dense(subset, &idx, &rows, &cols);
    let (_, u, v) = top_singular_pair(&dense)?;
    for (r, &i) in rows.iter().enumerate() {
        s[i] = u[r].abs();
    }
    for (c, &j) in cols.iter().enumerate() {
        t[j] = v[c].abs();
    }
    Ok(WitnessPair { s, t })
}

/// `‖Σ c_k ε_k‖_p` for `p ∈ {2, 4, 6}` from power sums of the coefficients.
pub fn even_moment_lp(c: &[f64], p: f64) -> Option<f64> {
    let s = |q: i32| c.iter().map(|x| x.powi(q)).sum::<f64>();
    let (s2, s4) = (s(2), s(4));
    let moment = match p {
        2.0 => s2,
        4.0 => 3.0 * s2 * s2 - 2.0 * s4,
        6.0 => 15.0 * s2 * s2 * s2 - 30.0 * s4 * s2 + 16.0 * s(6),
        _ => return None,
    };
    Some(moment.max(0.0).powf(1.0 / p))
}

/// `L_p` of a coefficient vector: exact when it has at most 20 nonzero
/// entries or `p ∈ {2, 4, 6}`, Monte Carlo otherwise. Returns
/// `(value, stderr, exact)`.
pub fn lp_of_coefficients(c: &[f64], p: f64, samples: usize, seed: u64) -> Result<(f64, f64, bool)> {
    check_order(p)?;
    let nonzero: Vec<f64> = c.iter().copied().filter(|&x| x != 0.0).collect();
    if nonzero.len() <= EXACT_MAX_LEN {
        Ok((exact_lp_radsum(&nonzero, p)?, 0.0, true))
    } else if let Some(v) = even_moment_lp(&nonzero, p) {
        Ok((v, 0.0, true))
    } else {
        let (v, se) = mc_lp_radsum(&nonzero, p, samples, seed)?;
        Ok((v, se, false))
    }
}

/// Tuning for [`estimate_rad_norm`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadNormConfig {
    pub seed: u64,
    /// Monte Carlo samples for witnesses with more than 20 coefficients.
    pub samples: usize,
    /// Random starts of the alternating ascent.
    pub restarts: usize,
    pub ascent_iters: usize,
    /// Candidates, ranked by the Hitczenko objective, whose true `L_p` is evaluated.
    pub finalists: usize,
    /// `None` picks exact when within budget and local otherwise.
    pub m_mode: Option<MMode>,
}

impl Default for RadNormConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            samples: 4000,
            restarts: 8,
            ascent_iters: 40,
            finalists: 16,
            m_mode: None,
        }
    }
}

/// Result of [`estimate_rad_norm`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadNormEstimate {
    pub p: f64,
    /// `L_p` value at `witness`; a lower bound on `‖A‖_{ε,p}` up to `lower_stderr`.
    pub lower: f64,
    pub lower_stderr: f64,
    /// Whether `lower` came from exact enumeration.
    pub exact: bool,
    /// Best Hitczenko-objective value over all candidates.
    pub surrogate: f64,
    pub witness: WitnessPair,
    /// Origin of the winning witness.
    pub method: String,
    /// Combinatorial `M` used for the subset witness.
    pub m: CombinatorialM,
    /// Candidate families that were tried.
    pub tried: Vec<String>,
}

/// A candidate witness with sparse `s`, `t`.
struct Candidate {
    s: Vec<(usize, f64)>,
    t: Vec<(usize, f64)>,
    objective: f64,
    method: &'static str,
}

struct Workspace<'a> {
    a: &'a SparsePattern,
    abs: Vec<Entry>,
    row_ptr: Vec<usize>,
    p: f64,
}

impl<'a> Workspace<'a> {
    fn new(a: &'a SparsePattern, p: f64) -> Self {
        let abs: Vec<Entry> = a
            .entries()
            .iter()
            .map(|e| Entry {
                weight: e.weight.abs(),
                ..*e
            })
            .collect();
        let mut row_ptr = vec![0; a.rows() + 1];
        for e in &abs {
            row_ptr[e.row + 1] += 1;
        }
        for i in 0..a.rows() {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { a, abs, row_ptr, p }
    }

    /// Coefficients `a_ij s_i t_j` for sparse `s`, `t` (signed weights).
    fn coefficients(&self, s: &[(usize, f64)], t: &[(usize, f64)], t_dense: &mut [f64]) -> Vec<f64> {
        for &(j, v) in t {
            t_dense[j] = v;
        }
        let entries = self.a.entries();
        let mut out = Vec::new();
        for &(i, si) in s {
            for e in &entries[self.row_ptr[i]..self.row_ptr[i + 1]] {
                let c = e.weight * si * t_dense[e.col];
                if c != 0.0 {
                    out.push(c);
                }
            }
        }
        for &(j, _) in t {
            t_dense[j] = 0.0;
        }
        out
    }

    fn objective(&self, s: &[(usize, f64)], t: &[(usize, f64)], t_dense: &mut [f64]) -> f64 {
        hitczenko_lp(&self.coefficients(s, t, t_dense), self.p)
    }

    /// Objective at dense nonnegative `s`, `t` and its gradients.
    fn objective_grad(&self, s: &[f64], t: &[f64], gs: &mut [f64], gt: &mut [f64]) -> f64 {
        let c: Vec<f64> = self.abs.iter().map(|e| e.weight * s[e.row] * t[e.col]).collect();
        let head = (self.p.floor() as usize).min(c.len());
        let mut order: Vec<usize> = (0..c.len()).collect();
        let mut in_head = vec![false; c.len()];
        if head > 0 && head < c.len() {
            order.select_nth_unstable_by(head - 1, |&x, &y| c[y].total_cmp(&c[x]).then(x.cmp(&y)));
        }
        for &k in &order[..head] {
            in_head[k] = true;
        }
        let head_sum: f64 = order[..head].iter().map(|&k| c[k]).sum();
        let tail_sq: f64 = order[head..].iter().map(|&k| c[k] * c[k]).sum();
        let tail = tail_sq.sqrt();
        gs.iter_mut().for_each(|x| *x = 0.0);
        gt.iter_mut().for_each(|x| *x = 0.0);
        let rt_p = self.p.sqrt();
        for (k, e) in self.abs.iter().enumerate() {
            let w = if in_head[k] {
                1.0
            } else if tail > 0.0 {
                rt_p * c[k] / tail
            } else {
                0.0
            };
            gs[e.row] += w * e.weight * t[e.col];
            gt[e.col] += w * e.weight * s[e.row];
        }
        head_sum + rt_p * tail
    }

    /// Alternating normalized-gradient ascent; `support` caps the number of
    /// nonzero coordinates of each vector.
    fn ascend(&self, mut s: Vec<f64>, mut t: Vec<f64>, support: Option<usize>, iters: usize) -> (Vec<f64>, Vec<f64>, f64) {
        let mut gs = vec![0.0; s.len()];
        let mut gt = vec![0.0; t.len()];
        project(&mut s, support);
        project(&mut t, support);
        let mut best = (s.clone(), t.clone(), self.objective_grad(&s, &t, &mut gs, &mut gt));
        for _ in 0..iters {
            let mut next = gs.clone();
            if !project(&mut next, support) {
                break;
            }
            s = next;
            self.objective_grad(&s, &t, &mut gs, &mut gt);
            let mut next = gt.clone();
            if !project(&mut next, support) {
                break;
            }
            t = next;
            let val = self.objective_grad(&s, &t, &mut gs, &mut gt);
            if val > best.2 * (1.0 + 1e-12) {
                best = (s.clone(), t.clone(), val);
            } else {
                break;
            }
        }
        best
    }
}

/// Keeps the `support` largest coordinates and normalizes; false for a zero vector.
fn project(v: &mut [f64], support: Option<usize>) -> bool {
    if let Some(k) = support.filter(|&k| k < v.len()) {
        let mut order: Vec<usize> = (0..v.len()).collect();
        order.select_nth_unstable_by(k, |&x, &y| v[y].total_cmp(&v[x]).then(x.cmp(&y)));
        for &i in &order[k..] {
            v[i] = 0.0;
        }
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    true
}

fn sparse(v: &[f64]) -> Vec<(usize, f64)> {
    v.iter().enumerate().filter(|(_, x)| **x != 0.0).map(|(i, x)| (i, *x)).collect()
}

fn uniform(idx: &[usize]) -> Vec<(usize, f64)> {
    let w = 1.0 / (idx.len() as f64).sqrt();
    idx.iter().map(|&i| (i, w)).collect()
}

/// Indices of the `k` largest weights among `(index, |weight|)`, ties to the lower index.
fn top_k(mut items: Vec<(usize, f64)>, k: usize) -> Vec<usize> {
    items.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    let mut idx: Vec<usize> = items.into_iter().take(k).map(|x| x.0).collect();
    idx.sort_unstable();
    idx
}

/// Lower estimate of `‖A‖_{ε,p}` from proof-derived witnesses and ascent on
/// the Hitczenko objective.
pub fn estimate_rad_norm(a: &SparsePattern, p: f64, config: &RadNormConfig) -> Result<RadNormEstimate> {
    check_order(p)?;
    if config.samples == 0 {
        return Err(invalid("estimate_rad_norm needs samples >= 1"));
    }
    let mode = config.m_mode.unwrap_or(if exact_m_feasible(a.nnz(), p) {
        MMode::Exact
    } else {
        MMode::Local
    });
    let m = combinatorial_m(a, p, mode)?;
    let zero = WitnessPair {
        s: vec![0.0; a.rows()],
        t: vec![0.0; a.cols()],
    };
    if a.nnz() == 0 {
        return Ok(RadNormEstimate {
            p,
            lower: 0.0,
            lower_stderr: 0.0,
            exact: true,
            surrogate: 0.0,
            witness: zero,
            method: "zero".into(),
            m,
            tried: Vec::new(),
        });
    }

    let ws = Workspace::new(a, p);
    let mut t_dense = vec![0.0; a.cols()];
    let mut cands: Vec<Candidate> = Vec::new();
    let push = |cands: &mut Vec<Candidate>, s: Vec<(usize, f64)>, t: Vec<(usize, f64)>, method: &'static str, t_dense: &mut [f64]| {
        let objective = ws.objective(&s, &t, t_dense);
        cands.push(Candidate { s, t, objective, method });
    };

    let top = a
        .entries()
        .iter()
        .copied()
        .reduce(|x, y| if y.weight.abs() > x.weight.abs() { y } else { x })
        .expect("nonempty");
    push(&mut cands, vec![(top.row, 1.0)], vec![(top.col, 1.0)], "proof:max-entry", &mut t_dense);

    let mw = proof_witness(a, &m.subset)?;
    push(&mut cands, sparse(&mw.s), sparse(&mw.t), "proof:m-subset", &mut t_dense);

    let lo = (p.floor() as usize).max(1);
    let hi = (p.ceil() as usize).max(1);
    let sizes: Vec<usize> = if lo == hi { vec![lo] } else { vec![lo, hi] };
    let at = a.transpose();
    for (pat, by_row) in [(a, true), (&at, false)] {
        let ent = pat.entries();
        let mut start = 0;
        while start < ent.len() {
            let line = ent[start].row;
            let end = start + ent[start..].iter().take_while(|e| e.row == line).count();
            let items: Vec<(usize, f64)> = ent[start..end].iter().map(|e| (e.col, e.weight.abs())).collect();
            for &k in &sizes {
                let idx = top_k(items.clone(), k);
                let (s, t) = if by_row {
                    (vec![(line, 1.0)], uniform(&idx))
                } else {
                    (uniform(&idx), vec![(line, 1.0)])
                };
                push(&mut cands, s, t, if by_row { "proof:row-top" } else { "proof:col-top" }, &mut t_dense);
            }
            start = end;
        }
    }

    let mut starts: Vec<(Vec<f64>, Vec<f64>, &'static str)> = Vec::new();
    for r in 0..config.restarts as u64 {
        let mut rng = stream(config.seed, Domain::WitnessStart, r);
        let s: Vec<f64> = (0..a.rows()).map(|_| rng.gen::<f64>()).collect();
        let t: Vec<f64> = (0..a.cols()).map(|_| rng.gen::<f64>()).collect();
        starts.push((s, t, "ascent:random"));
    }
    let best_proof = cands
        .iter()
        .max_by(|x, y| x.objective.total_cmp(&y.objective))
        .expect("nonempty");
    let densify = |v: &[(usize, f64)], n: usize| {
        let mut d = vec![0.0; n];
        v.iter().for_each(|&(i, x)| d[i] = x.abs());
        d
    };
    starts.push((densify(&best_proof.s, a.rows()), densify(&best_proof.t, a.cols()), "ascent:from-proof"));
    starts.push((mw.s.clone(), mw.t.clone(), "ascent:from-m"));
    for (s0, t0, tag) in starts {
        for support in [Some(hi), None] {
            let (s, t, _) = ws.ascend(s0.clone(), t0.clone(), support, config.ascent_iters);
            push(&mut cands, sparse(&s), sparse(&t), tag, &mut t_dense);
        }
    }

    let surrogate = cands.iter().map(|c| c.objective).fold(0.0, f64::max);
    let mut tried: Vec<String> = cands.iter().map(|c| c.method.to_string()).collect();
    tried.sort();
    tried.dedup();

    let mut order: Vec<usize> = (0..cands.len()).collect();
    order.sort_by(|&x, &y| cands[y].objective.total_cmp(&cands[x].objective).then(x.cmp(&y)));
    order.truncate(config.finalists.max(1));
    for fixed in [0, 1] {
        if !order.contains(&fixed) {
            order.push(fixed);
        }
    }

    let pilot = (config.samples / 4).max(64);
    let mut best: Option<(usize, f64, f64, bool)> = None;
    for (rank, &ci) in order.iter().enumerate() {
        let c = ws.coefficients(&cands[ci].s, &cands[ci].t, &mut t_dense);
        let (v, se, exact) = lp_of_coefficients(&c, p, pilot, derive_seed(config.seed, rank as u64))?;
        if best.is_none_or(|(_, bv, _, _)| v > bv) {
            best = Some((ci, v, se, exact));
        }
    }
    let (ci, mut lower, mut lower_stderr, exact) = best.expect("nonempty");
    if !exact {
        let c = ws.coefficients(&cands[ci].s, &cands[ci].t, &mut t_dense);
        let (v, se) = mc_lp_radsum(&c, p, config.samples, derive_seed(config.seed, u64::MAX))?;
        lower = v;
        lower_stderr = se;
    }
    let chosen = &cands[ci];
    Ok(RadNormEstimate {
        p,
        lower,
        lower_stderr,
        exact,
        surrogate,
        witness: WitnessPair {
            s: densify(&chosen.s, a.rows()),
            t: densify(&chosen.t, a.cols()),
        },
        method: chosen.method.to_string(),
        m,
        tried,
    })
}

/// `max_l` of the block estimates, which is exact for block-diagonal
/// patterns. Ties keep the first block.
pub fn block_max_radnorm(blocks: &[SparsePattern], p: f64, config: &RadNormConfig) -> Result<RadNormEstimate> {
    let mut best: Option<RadNormEstimate> = None;
    for b in blocks {
        let est = estimate_rad_norm(b, p, config)?;
        if best.as_ref().is_none_or(|x| est.lower > x.lower) {
            best = Some(est);
        }
    }
    best.ok_or_else(|| invalid("block_max_radnorm needs at least one block"))
}

/// `Σ a_ij ε_ij s_i t_j` for one sign draw; used by tests and diagnostics.
pub fn sample_bilinear(a: &SparsePattern, w: &WitnessPair, seed: u64, counter: u64) -> f64 {
    let mut signs = sign_bits(seed, counter);
    a.entries()
        .iter()
        .map(|e| e.weight * signs.next_sign() * w.s[e.row] * w.t[e.col])
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent enumeration: iterate over all `2^m` sign bitmasks.
    fn brute_lp(c: &[f64], p: f64) -> f64 {
        let m = c.len();
        let total: f64 = (0..1u64 << m)
            .map(|mask| {
                let s: f64 = c
                    .iter()
                    .enumerate()
                    .map(|(k, x)| if mask >> k & 1 == 1 { *x } else { -*x })
                    .sum();
                s.abs().powf(p)
            })
            .sum();
        (total / (1u64 << m) as f64).powf(1.0 / p)
    }

    fn brute_prob(c: &[f64], x: f64) -> f64 {
        let m = c.len();
        let hits = (0..1u64 << m)
            .filter(|mask| {
                let s: f64 = c
                    .iter()
                    .enumerate()
                    .map(|(k, v)| if mask >> k & 1 == 1 { *v } else { -*v })
                    .sum();
                s.abs() >= x * (1.0 - 1e-12)
            })
            .count();
        hits as f64 / (1u64 << m) as f64
    }

    #[test]
    fn hitczenko_examples() {
        assert_eq!(hitczenko_lp(&[1.0], 4.0), 1.0);
        assert!((hitczenko_lp(&[1.0; 4], 2.0) - 4.0).abs() < 1e-12);
        assert!((hitczenko_lp(&[2.0, 1.0], 1.0) - 3.0).abs() < 1e-12);
        assert!((hitczenko_lp(&[-1.0, 3.0, 0.5], 1.5) - (3.0 + 1.5f64.sqrt() * 1.25f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn hitczenko_drops_across_an_integer() {
        let c = [1.0, 1.0, 1.0, 0.1];
        assert!(hitczenko_lp(&c, 2.0) > hitczenko_lp(&c, 3.0));
        assert!(exact_lp_radsum(&c, 2.0).unwrap() < exact_lp_radsum(&c, 3.0).unwrap());
    }

    #[test]
    fn exact_examples() {
        assert_eq!(exact_lp_radsum(&[1.0], 3.0).unwrap(), 1.0);
        assert!((exact_lp_radsum(&[3.0, 4.0], 2.0).unwrap() - 5.0).abs() < 1e-12);
        assert!((exact_lp_radsum(&[1.0, 1.0], 4.0).unwrap() - 2f64.powf(0.75)).abs() < 1e-12);
        assert!(exact_lp_radsum(&[1.0; 21], 2.0).is_err());
        assert!(exact_lp_radsum(&[1.0], 0.5).is_err());
        assert_eq!(exact_lp_radsum(&[], 2.0).unwrap(), 0.0);
    }

    #[test]
    fn mc_examples() {
        assert_eq!(mc_lp_radsum(&[1.0], 2.0, 50, 9).unwrap().0, 1.0);
        let (v, se) = mc_lp_radsum(&[3.0, 4.0], 2.0, 100_000, 1).unwrap();
        assert!((v - 5.0).abs() <= 3.0 * se, "{v} ± {se}");
        let c = vec![1.0; 18];
        let exact = exact_lp_radsum(&c, 6.0).unwrap();
        let (v, se) = mc_lp_radsum(&c, 6.0, 20_000, 2).unwrap();
        assert!((v - exact).abs() <= 3.0 * se, "{v} ± {se} vs {exact}");
        assert_eq!(mc_lp_radsum(&c, 6.0, 500, 3).unwrap(), mc_lp_radsum(&c, 6.0, 500, 3).unwrap());
        assert!(mc_lp_radsum(&c, 6.0, 0, 3).is_err());
    }

    #[test]
    fn distribution_tail() {
        let d = RadSumDistribution::new(&[1.0, 1.0]).unwrap();
        assert_eq!(d.prob_at_least(2.0), 0.5);
        assert_eq!(d.prob_at_least(0.0), 1.0);
        assert_eq!(d.prob_at_least(2.5), 0.0);
    }

    fn star(d: usize) -> SparsePattern {
        SparsePattern::indicator(1, d, (0..d).map(|j| (0, j))).unwrap()
    }

    #[test]
    fn m_examples() {
        for mode in [MMode::Greedy, MMode::Local, MMode::Exact] {
            let m = combinatorial_m(&star(6), 4.0, mode).unwrap();
            assert!((m.value - 2.0).abs() < 1e-12);
            assert_eq!(m.subset.len(), 4);
            let m = combinatorial_m(&star(6), 3.7, mode).unwrap();
            assert!((m.value - 3f64.sqrt()).abs() < 1e-12);
            let m = combinatorial_m(&SparsePattern::identity(7), 5.0, mode).unwrap();
            assert!((m.value - 1.0).abs() < 1e-12);
            let m = combinatorial_m(&SparsePattern::ones(2, 2), 4.0, mode).unwrap();
            assert!((m.value - 2.0).abs() < 1e-12);
        }
        assert!(matches!(
            combinatorial_m(&SparsePattern::ones(8, 8), 8.0, MMode::Exact),
            Err(Error::OverBudget { .. })
        ));
        assert_eq!(combinatorial_m(&SparsePattern::zeros(3, 3), 2.0, MMode::Exact).unwrap().value, 0.0);
    }

    #[test]
    fn greedy_breaks_ties_low() {
        let m = combinatorial_m(&SparsePattern::identity(4), 1.0, MMode::Greedy).unwrap();
        assert_eq!((m.subset[0].row, m.subset[0].col), (0, 0));
    }

    #[test]
    fn estimate_examples() {
        let cfg = RadNormConfig::default();
        let single = SparsePattern::new(3, 4, [(1, 2, -2.5)]).unwrap();
        for p in [1.0, 2.0, 7.5] {
            let est = estimate_rad_norm(&single, p, &cfg).unwrap();
            assert!((est.lower - 2.5).abs() < 1e-12);
            assert!(est.exact);
            assert_eq!(est.witness.s, vec![0.0, 1.0, 0.0]);
            assert_eq!(est.witness.t, vec![0.0, 0.0, 1.0, 0.0]);
        }
        for (d, p) in [(6, 2.0), (6, 4.0), (9, 6.0), (5, 5.0), (8, 3.5)] {
            let est = estimate_rad_norm(&star(d), p, &cfg).unwrap();
            assert!(est.lower >= 0.5 * (p.floor()).sqrt(), "d={d} p={p}: {}", est.lower);
            assert!(est.lower <= p.sqrt() + 1e-9);
        }
        let est = estimate_rad_norm(&SparsePattern::identity(6), 2.0, &cfg).unwrap();
        assert!((est.lower - 1.0).abs() < 1e-12);
        assert!(est.witness.is_feasible());
    }

    #[test]
    fn estimate_is_deterministic_and_feasible() {
        let a = crate::patterns::random_pattern(14, 0.4, 5).unwrap();
        let cfg = RadNormConfig {
            samples: 800,
            ..RadNormConfig::default()
        };
        let x = estimate_rad_norm(&a, 3.0, &cfg).unwrap();
        let y = estimate_rad_norm(&a, 3.0, &cfg).unwrap();
        assert_eq!(x, y);
        assert!(x.witness.is_feasible());
        assert!(x.lower <= x.surrogate * 10.0);
        let coef = x.witness.coefficients(&a);
        if x.exact {
            assert!((exact_lp_radsum(&coef, 3.0).unwrap() - x.lower).abs() < 1e-12);
        }
    }

    #[test]
    fn block_max_examples() {
        let cfg = RadNormConfig::default();
        let b = star(5);
        let one = block_max_radnorm(std::slice::from_ref(&b), 3.0, &cfg).unwrap();
        assert_eq!(one, estimate_rad_norm(&b, 3.0, &cfg).unwrap());
        let two = block_max_radnorm(&[b.clone(), b.clone()], 3.0, &cfg).unwrap();
        assert_eq!(two.lower, one.lower);
        let x = SparsePattern::new(1, 1, [(0, 0, 2.0)]).unwrap();
        let y = SparsePattern::new(1, 1, [(0, 0, 3.0)]).unwrap();
        assert_eq!(block_max_radnorm(&[x, y], 2.0, &cfg).unwrap().lower, 3.0);
        assert!(block_max_radnorm(&[], 2.0, &cfg).is_err());
    }

    #[test]
    fn block_max_matches_assembled() {
        let cfg = RadNormConfig::default();
        let blocks = vec![star(4), SparsePattern::ones(2, 2), SparsePattern::identity(3)];
        let whole = SparsePattern::block_diagonal(&blocks);
        let bm = block_max_radnorm(&blocks, 4.0, &cfg).unwrap();
        let full = estimate_rad_norm(&whole, 4.0, &cfg).unwrap();
        let ratio = full.lower / bm.lower;
        assert!((0.95..=1.05).contains(&ratio), "{ratio}");
    }

    fn coeffs(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-3.0f64..3.0, 1..=max_len)
    }

    fn zero_one_pattern() -> impl Strategy<Value = SparsePattern> {
        (2usize..6, 2usize..6)
            .prop_flat_map(|(r, c)| (Just(r), Just(c), prop::collection::vec(any::<bool>(), r * c)))
            .prop_map(|(r, c, bits)| {
                SparsePattern::indicator(r, c, (0..r * c).filter(|&k| bits[k]).map(|k| (k / c, k % c))).unwrap()
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn even_moments_match_enumeration(c in coeffs(16)) {
            for p in [2.0, 4.0, 6.0] {
                let closed = even_moment_lp(&c, p).unwrap();
                let exact = exact_lp_radsum(&c, p).unwrap();
                prop_assert!((closed - exact).abs() <= 1e-9 * exact.max(1e-12), "p={} {} vs {}", p, closed, exact);
            }
            prop_assert!(even_moment_lp(&c, 3.0).is_none());
        }

        #[test]
        fn hitczenko_homogeneous_and_symmetric(c in coeffs(12), lambda in -4.0f64..4.0, p in 1.0f64..16.0, rot in 0usize..12) {
            let h = hitczenko_lp(&c, p);
            prop_assert!((hitczenko_lp(&c.iter().map(|x| lambda * x).collect::<Vec<_>>(), p) - lambda.abs() * h).abs() <= 1e-9 * (1.0 + h));
            let mut perm = c.clone();
            perm.rotate_left(rot % c.len());
            perm[0] = -perm[0];
            prop_assert!((hitczenko_lp(&perm, p) - h).abs() <= 1e-12 * (1.0 + h));
        }

        #[test]
        fn monotone_in_p(c in coeffs(12)) {
            let grid = [1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0];
            for w in grid.windows(2) {
                prop_assert!(exact_lp_radsum(&c, w[0]).unwrap() <= exact_lp_radsum(&c, w[1]).unwrap() * (1.0 + 1e-12));
            }
            // The head length jumps at integers, so the functional is only
            // monotone between consecutive integers.
            for k in 1..16 {
                let cell = [k as f64, k as f64 + 0.25, k as f64 + 0.5, k as f64 + 0.999];
                for w in cell.windows(2) {
                    prop_assert!(hitczenko_lp(&c, w[0]) <= hitczenko_lp(&c, w[1]) * (1.0 + 1e-12));
                }
            }
        }


        #[test]
        fn enumeration_matches_brute_force(c in coeffs(12), p in 1.0f64..10.0) {
            let e = exact_lp_radsum(&c, p).unwrap();
            prop_assert!((e - brute_lp(&c, p)).abs() <= 1e-10 * (1.0 + e));
            let d = RadSumDistribution::new(&c).unwrap();
            let x = 0.5 * e;
            prop_assert_eq!(d.prob_at_least(x), brute_prob(&c, x));
        }

        #[test]
        fn khintchine_and_paley_zygmund(c in coeffs(16)) {
            let d = RadSumDistribution::new(&c).unwrap();
            let l2 = c.iter().map(|x| x * x).sum::<f64>().sqrt();
            for p in [2.0, 3.0, 4.0, 6.0] {
                let lp = d.lp(p);
                prop_assert!(lp <= p.sqrt() * l2 * (1.0 + 1e-12));
                let ratio = lp / d.lp(2.0 * p);
                prop_assert!(d.prob_at_least(0.5 * lp) >= 0.25 * ratio.powf(2.0 * p) * (1.0 - 1e-12));
            }
        }

        #[test]
        fn m_mode_ordering_and_hilbert_schmidt(a in zero_one_pattern(), p in 1.0f64..8.0) {
            let g = combinatorial_m(&a, p, MMode::Greedy).unwrap();
            let l = combinatorial_m(&a, p, MMode::Local).unwrap();
            let e = combinatorial_m(&a, p, MMode::Exact).unwrap();
            prop_assert!(e.value >= l.value * (1.0 - 1e-12));
            prop_assert!(l.value >= g.value * (1.0 - 1e-12));
            for m in [&g, &l, &e] {
                prop_assert!(m.subset.len() <= m_subset_size(p, a.nnz()));
                prop_assert!(m.value <= (m.subset.len() as f64).sqrt() * a.max_abs() * (1.0 + 1e-12));
                let sub = SparsePattern::new(a.rows(), a.cols(), m.subset.iter().map(|x| (x.row, x.col, x.weight.abs()))).unwrap();
                let oracle = crate::linalg::operator_norm_oracle(&sub.to_dense()).unwrap();
                prop_assert!((oracle - m.value).abs() <= 1e-9 * (1.0 + oracle));
            }
        }

        #[test]
        fn half_constant_at_proof_witness(a in zero_one_pattern(), pi in 0usize..4) {
            let p = [1.0, 2.0, 4.0, 8.0][pi];
            prop_assume!(a.nnz() <= EXACT_MAX_LEN);
            let m = combinatorial_m(&a, p, MMode::Exact).unwrap();
            let w = proof_witness(&a, &m.subset).unwrap();
            prop_assert!(w.is_feasible());
            let lp = exact_lp_radsum(&w.coefficients(&a), p).unwrap();
            prop_assert!(lp >= 0.5 * m.value * (1.0 - 1e-12), "{} < {}/2", lp, m.value);
        }

        #[test]
        fn estimate_dominates_half_m(r in 2usize..6, c in 2usize..6, seed in 0u64..1000, pi in 0usize..4) {
            let p = [1.0, 2.0, 3.5, 6.0][pi];
            let a = crate::patterns::random_pattern(r.max(c), 0.5, seed).unwrap();
            let cfg = RadNormConfig { samples: 400, restarts: 2, ..RadNormConfig::default() };
            let est = estimate_rad_norm(&a, p, &cfg).unwrap();
            prop_assert!(0.5 * est.m.value <= est.lower + 3.0 * est.lower_stderr + 1e-12);
            prop_assert!(est.lower <= est.surrogate.max(est.lower) + 1e-12);
        }
    }
}
