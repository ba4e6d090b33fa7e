//! Closed-form bound evaluators. Every "∼" statement is evaluated as a shape
//! function with all constants set to 1; `ln` is the natural logarithm.

use std::collections::BTreeSet;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::SparsePattern;
use crate::patterns::{CirculantSpec, DirectedGraph, GraphFamily};
use crate::rademacher::{estimate_rad_norm, RadNormConfig};

/// Moment order `ln(n + 1)` used by the circulant bounds, clamped to 1.
pub fn rad_order(n: usize) -> f64 {
    (n as f64 + 1.0).ln().max(1.0)
}

/// `ln ln(n + 3)`.
pub fn lnln(n: usize) -> f64 {
    (n as f64 + 3.0).ln().ln()
}

/// `√Σb² + R`.
pub fn circulant_lower_shape(band_l2: f64, r: f64) -> f64 {
    band_l2 + r
}

/// `√(ln ln(n+3))·√Σb² + ln ln(n+3)·R`.
pub fn circulant_upper_shape(n: usize, band_l2: f64, r: f64) -> f64 {
    let f = lnln(n);
    f.sqrt() * band_l2 + f * r
}

/// `(max_i ‖row_i‖₂, max_j ‖col_j‖₂)`.
pub fn row_col_terms(a: &SparsePattern) -> (f64, f64) {
    (a.max_row_l2(), a.max_col_l2())
}

/// `(ln(n+1))^{1/4}·(row + col)` with `n = max(rows, cols)`.
pub fn seginer_bound(a: &SparsePattern) -> f64 {
    let n = a.rows().max(a.cols());
    let (r, c) = row_col_terms(a);
    (n as f64 + 1.0).ln().powf(0.25) * (r + c)
}

/// `row + col + √ln n` for `max|a_ij| ≤ 1`.
pub fn gaussian_hly_bound(a: &SparsePattern) -> Result<f64> {
    let max = a.max_abs();
    if max > 1.0 {
        return Err(invalid(format!("gaussian bound needs max|a_ij| <= 1, got {max}; rescale first")));
    }
    let n = a.rows().max(a.cols());
    let (r, c) = row_col_terms(a);
    Ok(r + c + (n as f64).ln().sqrt())
}

/// Tuning for [`theorem_lower_rhs`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerRhsConfig {
    pub rad: RadNormConfig,
    /// Exact enumeration of removal sets when the index count is at most this.
    pub exact_max_n: usize,
    /// Greedy removal steps before the inner minimum is frozen.
    pub greedy_steps: usize,
    /// Witness-support indices tried per greedy step.
    pub greedy_candidates: usize,
}

impl Default for LowerRhsConfig {
    fn default() -> Self {
        Self {
            rad: RadNormConfig {
                samples: 1000,
                restarts: 4,
                finalists: 8,
                ..RadNormConfig::default()
            },
            exact_max_n: 12,
            greedy_steps: 6,
            greedy_candidates: 8,
        }
    }
}

/// The three terms of `row + col + max_k min_{|I|≤k} sup ‖Σ_{i,j∉I} …‖_{ln(k+1)}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundBreakdown {
    pub max_row_l2: f64,
    pub max_col_l2: f64,
    pub gamma: f64,
    pub k_used: usize,
    pub removed_set: Vec<usize>,
    pub formula: String,
    pub total: f64,
}

/// Indices touching a nonzero entry (as a row or a column).
fn active_indices(a: &SparsePattern) -> Vec<usize> {
    let set: BTreeSet<usize> = a.entries().iter().flat_map(|e| [e.row, e.col]).collect();
    set.into_iter().collect()
}

/// `k`-grid `{1, 2, 4, …} ∪ {n}`.
pub fn dyadic_grid(n: usize) -> Vec<usize> {
    let mut grid: Vec<usize> = std::iter::successors(Some(1usize), |k| k.checked_mul(2))
        .take_while(|&k| k < n)
        .collect();
    grid.push(n.max(1));
    grid
}

/// One point of the inner minimization: value and the removal set reaching it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerMin {
    pub value: f64,
    pub removed: Vec<usize>,
}

fn sup_without(a: &SparsePattern, removed: &[usize], order: f64, rad: &RadNormConfig) -> Result<(f64, Vec<usize>)> {
    let sub = a.without_indices(removed);
    if sub.nnz() == 0 {
        return Ok((0.0, Vec::new()));
    }
    let est = estimate_rad_norm(&sub, order, rad)?;
    let n = a.rows().max(a.cols());
    let mut weight = vec![0.0; n];
    est.witness.s.iter().enumerate().for_each(|(i, x)| weight[i] += x * x);
    est.witness.t.iter().enumerate().for_each(|(j, x)| weight[j] += x * x);
    let mut support: Vec<usize> = (0..n).filter(|&i| weight[i] > 0.0).collect();
    support.sort_by(|&x, &y| weight[y].total_cmp(&weight[x]).then(x.cmp(&y)));
    Ok((est.lower, support))
}

fn combinations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    let n = items.len();
    if k > n {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.iter().map(|&i| items[i]).collect());
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// `min_{|I| ≤ j} sup ‖Σ_{i,j∉I} a_ij ε_ij s_i t_j‖_order` for `j = 0..=budget`,
/// as a prefix minimum, hence nonincreasing in `j`.
///
/// Exact enumeration over removal sets of active indices when there are at
/// most `exact_max_n` of them; otherwise greedy removal of witness-support
/// indices for `greedy_steps` steps, after which the value is held.
pub fn gamma_inner_profile(a: &SparsePattern, order: f64, budget: usize, config: &LowerRhsConfig) -> Result<Vec<InnerMin>> {
    let active = active_indices(a);
    let (v0, mut support) = sup_without(a, &[], order, &config.rad)?;
    let mut profile = vec![InnerMin {
        value: v0,
        removed: Vec::new(),
    }];
    if active.len() <= config.exact_max_n {
        for size in 1..=budget.min(active.len()) {
            let sets = combinations(&active, size);
            let vals: Vec<f64> = sets
                .par_iter()
                .map(|set| sup_without(a, set, order, &config.rad).map(|x| x.0))
                .collect::<Result<_>>()?;
            let best = vals
                .iter()
                .enumerate()
                .fold(0, |b, (i, v)| if *v < vals[b] { i } else { b });
            let prev = profile.last().expect("nonempty").clone();
            profile.push(if vals[best] < prev.value {
                InnerMin {
                    value: vals[best],
                    removed: sets[best].clone(),
                }
            } else {
                prev
            });
        }
    } else {
        let mut removed: Vec<usize> = Vec::new();
        for step in 1..=budget.min(active.len()) {
            let prev = profile.last().expect("nonempty").clone();
            if step == active.len() {
                profile.push(InnerMin {
                    value: 0.0,
                    removed: active.clone(),
                });
                continue;
            }
            if step > config.greedy_steps || support.is_empty() {
                profile.push(prev);
                continue;
            }
            let cands: Vec<usize> = support.iter().copied().take(config.greedy_candidates).collect();
            let evals: Vec<(f64, Vec<usize>)> = cands
                .par_iter()
                .map(|&c| {
                    let mut set = removed.clone();
                    set.push(c);
                    sup_without(a, &set, order, &config.rad)
                })
                .collect::<Result<_>>()?;
            let best = (0..cands.len())
                .min_by(|&x, &y| evals[x].0.total_cmp(&evals[y].0).then(cands[x].cmp(&cands[y])))
                .expect("nonempty support");
            removed.push(cands[best]);
            support = evals[best].1.clone();
            let mut sorted = removed.clone();
            sorted.sort_unstable();
            profile.push(if evals[best].0 < prev.value {
                InnerMin {
                    value: evals[best].0,
                    removed: sorted,
                }
            } else {
                prev
            });
        }
    }
    while profile.len() <= budget {
        let last = if profile.len() > active.len() {
            InnerMin {
                value: 0.0,
                removed: active.clone(),
            }
        } else {
            profile.last().expect("nonempty").clone()
        };
        profile.push(last);
    }
    Ok(profile)
}

/// Evaluates `row + col + γ`, with `γ = max_k min_{|I|≤k} sup ‖…‖_{ln(k+1)}`
/// over the dyadic `k`-grid. The moment order is clamped to at least 1.
pub fn theorem_lower_rhs(a: &SparsePattern, config: &LowerRhsConfig) -> Result<BoundBreakdown> {
    let (max_row_l2, max_col_l2) = row_col_terms(a);
    let n = a.rows().max(a.cols());
    let active = active_indices(a).len();
    let exact = active <= config.exact_max_n;
    let points: Vec<(usize, InnerMin)> = dyadic_grid(n)
        .into_par_iter()
        .map(|k| {
            let order = ((k as f64) + 1.0).ln().max(1.0);
            if k >= active {
                return Ok((
                    k,
                    InnerMin {
                        value: 0.0,
                        removed: active_indices(a),
                    },
                ));
            }
            let inner = if exact {
                exact_at_size(a, order, k, config)?
            } else {
                gamma_inner_profile(a, order, k, config)?.pop().expect("nonempty")
            };
            Ok((k, inner))
        })
        .collect::<Result<_>>()?;
    let (k_used, inner) = points
        .into_iter()
        .fold(None::<(usize, InnerMin)>, |best, (k, m)| match best {
            Some((bk, bm)) if bm.value >= m.value => Some((bk, bm)),
            _ => Some((k, m)),
        })
        .expect("grid is nonempty");
    Ok(BoundBreakdown {
        max_row_l2,
        max_col_l2,
        gamma: inner.value,
        k_used,
        removed_set: inner.removed,
        formula: "max_row_l2 + max_col_l2 + gamma".into(),
        total: max_row_l2 + max_col_l2 + inner.value,
    })
}

/// Exact inner minimum over removal sets of exactly `k` active indices.
/// Removing entries cannot increase the supremum, so this is the minimum
/// over `|I| ≤ k`.
fn exact_at_size(a: &SparsePattern, order: f64, k: usize, config: &LowerRhsConfig) -> Result<InnerMin> {
    let sets = combinations(&active_indices(a), k);
    let vals: Vec<f64> = sets
        .par_iter()
        .map(|set| sup_without(a, set, order, &config.rad).map(|x| x.0))
        .collect::<Result<_>>()?;
    let best = vals
        .iter()
        .enumerate()
        .fold(0, |b, (i, v)| if *v < vals[b] { i } else { b });
    Ok(InnerMin {
        value: vals[best],
        removed: sets[best].clone(),
    })
}

/// Circulant sandwich: `lower = √Σb² + R`, `upper` with the `ln ln` factors,
/// and for 0-1 bands the form `√d + R` without them; `R = ‖A‖_{ε,ln(n+1)}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CirculantBounds {
    pub n: usize,
    pub order: f64,
    pub band_l2: f64,
    pub rad_norm: f64,
    pub rad_norm_stderr: f64,
    pub lower: f64,
    pub upper: f64,
    pub zero_one: Option<f64>,
}

pub fn circulant_bounds(spec: &CirculantSpec, config: &RadNormConfig) -> Result<CirculantBounds> {
    let n = spec.n();
    let order = rad_order(n);
    let est = estimate_rad_norm(&spec.matrix(), order, config)?;
    let band_l2 = spec.band_l2();
    Ok(CirculantBounds {
        n,
        order,
        band_l2,
        rad_norm: est.lower,
        rad_norm_stderr: est.lower_stderr,
        lower: circulant_lower_shape(band_l2, est.lower),
        upper: circulant_upper_shape(n, band_l2, est.lower),
        zero_one: spec
            .is_zero_one()
            .then(|| (spec.support_size() as f64).sqrt() + est.lower),
    })
}

/// Bounds on `N_{ε,p}(G) = ‖1_E‖_{ε,p}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNpBounds {
    pub p: f64,
    pub max_degree: usize,
    pub lower: f64,
    pub upper: f64,
    /// `√(p/8)`, reported when `p ≤ d`.
    pub star_lower: Option<f64>,
    /// `min{d, √p}`.
    pub degree_upper: f64,
    /// Best `min{p, |E∩(I×J)|}/√(|I||J|)` found.
    pub expansion: f64,
    pub expansion_sizes: (usize, usize),
    /// `sup_I min{p, |E∩(I×I)|}/|I|` (or an upper bound of it, see `sparsity_source`).
    pub sparsity: Option<f64>,
    pub sparsity_source: String,
    /// `√(d·sparsity)`.
    pub sparsity_upper: Option<f64>,
    /// Whether the expansion search was exhaustive.
    pub exact: bool,
    pub regime: String,
}

impl GraphNpBounds {
    pub fn ratio(&self) -> f64 {
        self.lower / self.upper
    }
}

/// Tuning for [`graph_np_bounds`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphBoundsConfig {
    /// Exhaustive subset search up to this many vertices.
    pub exact_max_vertices: usize,
    /// BFS-ball centers tried in the heuristic search.
    pub ball_centers: usize,
}

impl Default for GraphBoundsConfig {
    fn default() -> Self {
        Self {
            exact_max_vertices: 16,
            ball_centers: 4,
        }
    }
}

/// Best `J` for fixed `I`: columns sorted by edge count from `I`, prefix sums.
fn best_partner(g: &DirectedGraph, in_i: &[bool], size_i: usize, p: f64, counts: &mut [usize]) -> (f64, usize) {
    let mut touched = Vec::new();
    for u in (0..g.vertex_count()).filter(|&u| in_i[u]) {
        for &v in g.neighbors(u) {
            if counts[v] == 0 {
                touched.push(v);
            }
            counts[v] += 1;
        }
    }
    let mut c: Vec<usize> = touched.iter().map(|&v| counts[v]).collect();
    touched.iter().for_each(|&v| counts[v] = 0);
    c.sort_unstable_by(|a, b| b.cmp(a));
    let mut best = (0.0, 0);
    let mut acc = 0usize;
    for (t, x) in c.into_iter().enumerate() {
        acc += x;
        let v = (acc as f64).min(p) / ((size_i * (t + 1)) as f64).sqrt();
        if v > best.0 {
            best = (v, t + 1);
        }
    }
    best
}

fn mask_of(n: usize, set: &[usize]) -> Vec<bool> {
    let mut m = vec![false; n];
    set.iter().for_each(|&v| m[v] = true);
    m
}

/// Structured and greedy vertex sets used when exhaustive search is too large.
fn candidate_sets(g: &DirectedGraph, config: &GraphBoundsConfig) -> Vec<Vec<usize>> {
    let n = g.vertex_count();
    let mut sets: Vec<Vec<usize>> = Vec::new();
    let hubs: Vec<usize> = {
        let mut v: Vec<usize> = (0..n).collect();
        v.sort_by(|&a, &b| g.out_degree(b).cmp(&g.out_degree(a)).then(a.cmp(&b)));
        v.truncate(config.ball_centers.max(1));
        v
    };
    for &c in &hubs {
        sets.push(vec![c]);
        sets.push(g.neighbors(c).to_vec());
        let mut ball = vec![c];
        let mut seen = mask_of(n, &ball);
        let mut frontier = vec![c];
        while !frontier.is_empty() && ball.len() < n {
            let mut next = Vec::new();
            for &u in &frontier {
                for &v in g.neighbors(u) {
                    if !seen[v] {
                        seen[v] = true;
                        next.push(v);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            sets.push(next.clone());
            ball.extend(&next);
            ball.sort_unstable();
            sets.push(ball.clone());
            frontier = next;
        }
    }
    // Greedy peeling: drop a minimum-degree vertex of the induced subgraph.
    let mut alive = vec![true; n];
    let mut deg: Vec<usize> = (0..n).map(|u| g.neighbors(u).len()).collect();
    let mut remaining = n;
    let mut next_record = n;
    while remaining > 1 {
        if remaining <= next_record {
            sets.push((0..n).filter(|&u| alive[u]).collect());
            next_record = remaining * 3 / 4;
        }
        let u = (0..n)
            .filter(|&u| alive[u])
            .min_by_key(|&u| (deg[u], u))
            .expect("remaining > 1");
        alive[u] = false;
        remaining -= 1;
        for &v in g.neighbors(u) {
            if alive[v] {
                deg[v] -= 1;
            }
        }
    }
    match g.family() {
        GraphFamily::Hypercube { d } => {
            for l in 0..=*d {
                sets.push(crate::patterns::hypercube_level(*d, l));
            }
            for j in 1..=*d {
                sets.push((0..1usize << j).collect());
            }
        }
        GraphFamily::Torus { m, d } => {
            let mut sub = vec![0usize];
            let mut stride = 1;
            for _ in 0..*d {
                sub = sub
                    .iter()
                    .flat_map(|&b| [b, b + stride])
                    .collect();
                sub.sort_unstable();
                sets.push(sub.clone());
                stride *= m;
            }
        }
        _ => {}
    }
    sets.retain(|s| !s.is_empty());
    sets.sort();
    sets.dedup();
    sets
}

/// `max(1, log₂ p)`: Harper's inequality bounds `|E∩(I×I)|/|I|` by `log₂|I|`
/// on the hypercube, and sets larger than `p` contribute less than 1.
pub fn harper_sparsity_bound(p: f64) -> f64 {
    p.log2().max(1.0)
}

/// `(|E∩(I×I)|, k·2^k, holds)` for `k = ⌈log₂|I|⌉` on `Z_2^d`.
pub fn harper_check(g: &DirectedGraph, subset: &[usize]) -> (usize, usize, bool) {
    let size = subset.len().max(1);
    let k = (usize::BITS - (size - 1).leading_zeros()) as usize;
    let edges = g.edges_within(subset);
    let bound = k << k;
    (edges, bound, edges <= bound)
}

/// Outcome of [`harper_sampled_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarperReport {
    pub d: usize,
    pub checked: usize,
    pub violations: usize,
    /// Subsets meeting `|E∩(I×I)| = k·2^k` exactly.
    pub tight: usize,
}

/// Harper's inequality on `count` seeded subsets of `Z_2^d`: every fourth is
/// a random subcube (where equality holds), the rest uniform random sets of
/// random size.
pub fn harper_sampled_check(d: usize, count: usize, seed: u64) -> Result<HarperReport> {
    let g = crate::patterns::hypercube(d)?;
    let n = 1usize << d;
    let mut report = HarperReport {
        d,
        checked: 0,
        violations: 0,
        tight: 0,
    };
    for i in 0..count as u64 {
        let mut rng = crate::rng::stream(seed, crate::rng::Domain::Subsets, i);
        let subset: Vec<usize> = if i % 4 == 0 {
            let free: Vec<usize> = (0..d).filter(|_| rng.gen_bool(0.5)).collect();
            let base: usize = (0..d).filter(|k| !free.contains(k) && rng.gen_bool(0.5)).map(|k| 1 << k).sum();
            (0..1usize << free.len())
                .map(|bits| base | free.iter().enumerate().filter(|(j, _)| bits >> j & 1 == 1).map(|(_, k)| 1 << k).sum::<usize>())
                .collect()
        } else {
            let size = rng.gen_range(1..=n);
            let mut v: Vec<usize> = (0..n).collect();
            for j in 0..size {
                let r = rng.gen_range(j..n);
                v.swap(j, r);
            }
            v.truncate(size);
            v
        };
        let (edges, bound, ok) = harper_check(&g, &subset);
        report.checked += 1;
        report.violations += usize::from(!ok);
        report.tight += usize::from(edges == bound);
    }
    Ok(report)
}

/// Lower and upper values for `N_{ε,p}(G)`: `upper = min{d, √p}`,
/// `lower = max(√(p/8) when p ≤ d, expansion)`. The sparsity shape
/// `√(d·M_s)` is reported alongside.
pub fn graph_np_bounds(g: &DirectedGraph, p: f64, config: &GraphBoundsConfig) -> Result<GraphNpBounds> {
    if !(p.is_finite() && p >= 1.0) {
        return Err(invalid(format!("graph bounds need p >= 1, got {p}")));
    }
    let n = g.vertex_count();
    let d = g.max_degree();
    let degree_upper = (d as f64).min(p.sqrt());
    let star_lower = (p <= d as f64).then(|| (p / 8.0).sqrt());
    let mut counts = vec![0usize; n];
    let exact = n <= config.exact_max_vertices;
    let mut expansion = (0.0, (0, 0));
    let mut sparsity = 0.0f64;
    let mut consider = |set: &[usize], in_i: &[bool], counts: &mut [usize]| {
        let (v, t) = best_partner(g, in_i, set.len(), p, counts);
        if v > expansion.0 {
            expansion = (v, (set.len(), t));
        }
        let e = g.edges_within(set) as f64;
        sparsity = sparsity.max(e.min(p) / set.len() as f64);
    };
    if exact {
        for bits in 1u32..(1u32 << n) {
            let set: Vec<usize> = (0..n).filter(|&v| bits >> v & 1 == 1).collect();
            let in_i = mask_of(n, &set);
            consider(&set, &in_i, &mut counts);
        }
    } else {
        for set in candidate_sets(g, config) {
            let in_i = mask_of(n, &set);
            consider(&set, &in_i, &mut counts);
        }
    }
    let (sparsity, source) = match g.family() {
        _ if exact => (Some(sparsity), "exact"),
        GraphFamily::Hypercube { .. } => (Some(harper_sparsity_bound(p)), "harper"),
        _ => (None, "unavailable"),
    };
    let lower = star_lower.unwrap_or(0.0).max(expansion.0);
    Ok(GraphNpBounds {
        p,
        max_degree: d,
        lower,
        upper: degree_upper,
        star_lower,
        degree_upper,
        expansion: expansion.0,
        expansion_sizes: expansion.1,
        sparsity,
        sparsity_source: source.into(),
        sparsity_upper: sparsity.map(|m| (d as f64 * m).sqrt()),
        exact,
        regime: "graph".into(),
    })
}

/// Regime shapes on `Z_2^d`: `p ≤ d`, `p ≥ d·2^d`, and the middle range.
pub fn hypercube_np_bounds(d: usize, p: f64) -> Result<GraphNpBounds> {
    if d == 0 || !(p.is_finite() && p >= 1.0) {
        return Err(invalid(format!("hypercube bounds need d >= 1 and p >= 1, got d = {d}, p = {p}")));
    }
    let df = d as f64;
    let (lower, upper, regime) = if p <= df {
        ((p / 8.0).sqrt(), p.sqrt(), "small-p")
    } else if p >= df * 2f64.powi(d as i32) {
        (df, df, "large-p")
    } else {
        let lp = p.ln();
        ((df * lp / (std::f64::consts::E * df / lp).ln()).sqrt(), (df * lp).sqrt(), "middle")
    };
    Ok(GraphNpBounds {
        p,
        max_degree: d,
        lower,
        upper,
        star_lower: (p <= df).then(|| (p / 8.0).sqrt()),
        degree_upper: df.min(p.sqrt()),
        expansion: 0.0,
        expansion_sizes: (0, 0),
        sparsity: None,
        sparsity_source: "unavailable".into(),
        sparsity_upper: None,
        exact: false,
        regime: regime.into(),
    })
}

/// `F` with `N(Z_2^d) ≤ N(Z_m^d) ≤ F·N(Z_2^d)`: 1 for `m = 2`, 2 for even
/// `m`, 3 for odd `m`.
pub fn torus_reduction_factor(m: usize) -> Result<f64> {
    match m {
        0 | 1 => Err(invalid(format!("torus side must be >= 2, got {m}"))),
        2 => Ok(1.0),
        m if m % 2 == 0 => Ok(2.0),
        _ => Ok(3.0),
    }
}

/// `(√d + lower, √d + F·upper)` of the hypercube shapes at `p = d·ln m`.
pub fn torus_expected_norm_bounds(m: usize, d: usize) -> Result<(f64, f64)> {
    if m < 2 || d < 2 {
        return Err(invalid(format!("torus bounds need m, d >= 2, got m = {m}, d = {d}")));
    }
    let h = hypercube_np_bounds(d, d as f64 * (m as f64).ln())?;
    let f = torus_reduction_factor(m)?;
    let rd = (d as f64).sqrt();
    Ok((rd + h.lower, rd + f * h.upper))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patterns::{circulant_graph, hypercube, random_pattern, torus, OffsetGraphSpec};
    use crate::rademacher::{combinatorial_m, MMode};
    use proptest::prelude::*;

    #[test]
    fn row_col_examples() {
        assert_eq!(row_col_terms(&SparsePattern::identity(5)), (1.0, 1.0));
        let star = SparsePattern::ones(1, 4);
        assert_eq!(row_col_terms(&star), (2.0, 1.0));
        let c = CirculantSpec::padded(9, &[1.0, -2.0, 0.0, 0.5]).unwrap();
        let (r, col) = row_col_terms(&c.matrix());
        assert!((r - c.band_l2()).abs() < 1e-12 && (col - c.band_l2()).abs() < 1e-12);
    }

    #[test]
    fn seginer_and_gaussian_examples() {
        assert!((seginer_bound(&SparsePattern::identity(1)) - 2.0 * 2f64.ln().powf(0.25)).abs() < 1e-12);
        let n = 10;
        let ones = CirculantSpec::new(vec![1.0; n]).unwrap().matrix();
        assert!((seginer_bound(&ones) - 11f64.ln().powf(0.25) * 2.0 * (n as f64).sqrt()).abs() < 1e-12);
        assert!((gaussian_hly_bound(&SparsePattern::zeros(7, 7)).unwrap() - 7f64.ln().sqrt()).abs() < 1e-12);
        assert!((gaussian_hly_bound(&SparsePattern::identity(7)).unwrap() - 2.0 - 7f64.ln().sqrt()).abs() < 1e-12);
        let q = hypercube(5).unwrap().adjacency();
        assert!((gaussian_hly_bound(&q).unwrap() - 2.0 * 5f64.sqrt() - (5.0 * 2f64.ln()).sqrt()).abs() < 1e-12);
        assert!(gaussian_hly_bound(&SparsePattern::identity(2).scaled(1.5)).is_err());
    }

    fn quick() -> LowerRhsConfig {
        LowerRhsConfig {
            rad: RadNormConfig {
                samples: 300,
                restarts: 2,
                finalists: 4,
                ascent_iters: 20,
                ..RadNormConfig::default()
            },
            ..LowerRhsConfig::default()
        }
    }

    #[test]
    fn lower_rhs_identity() {
        for n in [3, 6] {
            let b = theorem_lower_rhs(&SparsePattern::identity(n), &quick()).unwrap();
            assert!((b.gamma - 1.0).abs() < 1e-12, "{b:?}");
            assert!((b.total - 3.0).abs() < 1e-12);
            assert!(b.k_used < n);
        }
    }

    #[test]
    fn lower_rhs_single_entry() {
        let a = SparsePattern::new(4, 4, [(2, 1, -3.0)]).unwrap();
        let b = theorem_lower_rhs(&a, &quick()).unwrap();
        assert_eq!((b.max_row_l2, b.max_col_l2), (3.0, 3.0));
        assert!(b.gamma <= 3.0 + 1e-12);
        let json = serde_json::to_value(&b).unwrap();
        for key in ["max_row_l2", "max_col_l2", "gamma", "k_used", "removed_set", "formula", "total"] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn inner_profile_matches_estimate_at_zero_budget() {
        let a = hypercube(3).unwrap().adjacency();
        let order = rad_order(8);
        let cfg = quick();
        let prof = gamma_inner_profile(&a, order, 0, &cfg).unwrap();
        let est = estimate_rad_norm(&a, order, &cfg.rad).unwrap();
        assert_eq!(prof[0].value, est.lower);
    }

    #[test]
    fn greedy_profile_on_large_pattern() {
        let a = SparsePattern::identity(20);
        let cfg = LowerRhsConfig {
            exact_max_n: 4,
            ..quick()
        };
        let prof = gamma_inner_profile(&a, 2.0, 25, &cfg).unwrap();
        assert_eq!(prof.len(), 26);
        assert!((prof[5].value - 1.0).abs() < 1e-12);
        assert_eq!(prof[20].value, 0.0);
    }

    #[test]
    fn circulant_bound_examples() {
        let cfg = RadNormConfig {
            samples: 1000,
            ..RadNormConfig::default()
        };
        let single = CirculantSpec::padded(16, &[0.0, 0.0, -2.0]).unwrap();
        let b = circulant_bounds(&single, &cfg).unwrap();
        assert!((b.rad_norm - 2.0).abs() < 1e-12);
        assert!((b.lower - 4.0).abs() < 1e-12);
        let s = OffsetGraphSpec::new(32, vec![1, 2]).unwrap();
        let b = circulant_bounds(&s.band(), &cfg).unwrap();
        assert!(b.lower <= b.upper);
        assert!((b.zero_one.unwrap() - (2.0 + b.rad_norm)).abs() < 1e-12);
        assert!(circulant_bounds(&CirculantSpec::padded(8, &[0.5]).unwrap(), &cfg).unwrap().zero_one.is_none());
    }

    #[test]
    fn graph_bound_examples() {
        let cfg = GraphBoundsConfig::default();
        let q4 = hypercube(4).unwrap();
        let b = graph_np_bounds(&q4, 3.0, &cfg).unwrap();
        assert!(b.exact);
        assert!(b.lower >= (3.0f64 / 8.0).sqrt());
        assert!(b.upper <= 3f64.sqrt() + 1e-12);
        assert!(b.lower <= b.upper + 1e-12);
        let b = graph_np_bounds(&q4, 16.0, &cfg).unwrap();
        assert_eq!(b.upper, 4.0);
        let cyc = circulant_graph(&OffsetGraphSpec::new(30, vec![1, 4]).unwrap());
        assert_eq!(graph_np_bounds(&cyc, 20.0, &cfg).unwrap().upper, 4.0);
        let v1 = crate::patterns::hypercube_level(4, 1);
        let v0 = crate::patterns::hypercube_level(4, 0);
        let e = q4.edges_between(&mask_of(16, &v1), &mask_of(16, &v0));
        let value = (e as f64).min(4.0) / ((v1.len() * v0.len()) as f64).sqrt();
        assert_eq!(value, 2.0);
        assert!(graph_np_bounds(&q4, 4.0, &cfg).unwrap().expansion >= 2.0);
    }

    #[test]
    fn graph_bounds_heuristic_path() {
        let cfg = GraphBoundsConfig::default();
        let q = hypercube(7).unwrap();
        for p in [2.0, 5.0, 40.0, 900.0] {
            let b = graph_np_bounds(&q, p, &cfg).unwrap();
            assert!(!b.exact);
            assert!(b.lower <= b.upper + 1e-12, "{b:?}");
            assert_eq!(b.sparsity_source, "harper");
        }
        let t = torus(5, 2).unwrap();
        let b = graph_np_bounds(&t, 6.0, &cfg).unwrap();
        assert!(b.lower <= b.upper + 1e-12 && b.lower > 0.0);
    }

    #[test]
    fn hypercube_regimes() {
        let b = hypercube_np_bounds(3, 2.0).unwrap();
        assert_eq!((b.lower, b.upper), (0.5, 2f64.sqrt()));
        for p in [24.0, 100.0] {
            let b = hypercube_np_bounds(3, p).unwrap();
            assert_eq!((b.lower, b.upper), (3.0, 3.0));
        }
        let b = hypercube_np_bounds(8, 16.0).unwrap();
        let l = 16f64.ln();
        assert!((b.lower - (8.0 * l / (std::f64::consts::E * 8.0 / l).ln()).sqrt()).abs() < 1e-12);
        assert!((b.upper - (8.0 * l).sqrt()).abs() < 1e-12);
        assert_eq!(b.regime, "middle");
        assert!(hypercube_np_bounds(0, 2.0).is_err());
    }

    #[test]
    fn torus_examples() {
        assert_eq!(torus_reduction_factor(2).unwrap(), 1.0);
        assert_eq!(torus_reduction_factor(6).unwrap(), 2.0);
        assert_eq!(torus_reduction_factor(7).unwrap(), 3.0);
        assert!(torus_reduction_factor(1).is_err());
        let (lo, hi) = torus_expected_norm_bounds(2, 5).unwrap();
        let h = hypercube_np_bounds(5, 5.0 * 2f64.ln()).unwrap();
        assert!((lo - 5f64.sqrt() - h.lower).abs() < 1e-12 && (hi - 5f64.sqrt() - h.upper).abs() < 1e-12);
        let (lo, hi) = torus_expected_norm_bounds(4, 3).unwrap();
        assert!(lo <= hi);
    }

    #[test]
    fn harper_sampled() {
        for d in 1..=8 {
            let r = harper_sampled_check(d, 100, 5).unwrap();
            assert_eq!((r.checked, r.violations), (100, 0));
            assert!(r.tight >= 25, "{r:?}");
        }
    }

    #[test]
    fn harper_on_subcubes_is_tight() {
        let q = hypercube(6).unwrap();
        for j in 0..=6 {
            let sub: Vec<usize> = (0..1usize << j).collect();
            let (e, bound, ok) = harper_check(&q, &sub);
            assert!(ok);
            assert_eq!(e, bound);
        }
    }

    #[test]
    fn m_is_monotone_under_subgraphs() {
        for (d, m, ps) in [(2, 4, vec![1.0, 2.0, 3.0, 4.0]), (3, 4, vec![1.0, 2.0])] {
            let q = hypercube(d).unwrap().adjacency();
            let t = torus(m, d).unwrap().adjacency();
            for p in ps {
                let a = combinatorial_m(&q, p, MMode::Exact).unwrap().value;
                let b = combinatorial_m(&t, p, MMode::Exact).unwrap().value;
                assert!(a <= b + 1e-12, "d={d} p={p}: {a} > {b}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn domination_monotone(n in 1usize..12, density in 0.1f64..0.9, seed in any::<u64>(), shrink in 0.0f64..1.0) {
            let big = random_pattern(n, density, seed).unwrap();
            let small = big.map_weights(|e| e.weight * shrink);
            let (r1, c1) = row_col_terms(&small);
            let (r2, c2) = row_col_terms(&big);
            prop_assert!(r1 <= r2 + 1e-12 && c1 <= c2 + 1e-12);
            prop_assert!(seginer_bound(&small) <= seginer_bound(&big) + 1e-12);
            prop_assert!(gaussian_hly_bound(&small).unwrap() <= gaussian_hly_bound(&big).unwrap() + 1e-12);
            if n >= 2 {
                prop_assert!(seginer_bound(&big) >= r2 + c2 - 1e-12);
            }
        }

        #[test]
        fn inner_profile_nonincreasing(n in 2usize..6, density in 0.2f64..0.8, seed in any::<u64>(), order in 1.0f64..3.0) {
            let a = random_pattern(n, density, seed).unwrap();
            let prof = gamma_inner_profile(&a, order, n, &quick()).unwrap();
            for w in prof.windows(2) {
                prop_assert!(w[1].value <= w[0].value);
            }
        }

        #[test]
        fn harper_random_subsets(d in 1usize..=8, seed in any::<u64>(), frac in 0.01f64..1.0) {
            let q = hypercube(d).unwrap();
            let n = 1usize << d;
            let mut v: Vec<usize> = (0..n).collect();
            v.sort_by_key(|&i| crate::rng::derive_seed(seed, i as u64));
            v.truncate(((n as f64 * frac).ceil() as usize).max(1));
            prop_assert!(harper_check(&q, &v).2);
        }

        #[test]
        fn expansion_never_exceeds_degree_bound(n in 4usize..=16, raw in prop::collection::btree_set(1usize..=8, 1..=3), p in 1.0f64..40.0) {
            let offs: Vec<usize> = raw.into_iter().filter(|&x| 2 * x <= n).collect();
            prop_assume!(!offs.is_empty());
            let g = circulant_graph(&OffsetGraphSpec::new(n, offs).unwrap());
            let b = graph_np_bounds(&g, p, &GraphBoundsConfig::default()).unwrap();
            prop_assert!(b.expansion <= b.degree_upper + 1e-12);
            prop_assert!(b.lower <= b.upper + 1e-12);
        }
    }
}
