//! Cube families of circulant graphs, the good-sequence construction, the
//! block-diagonal cover built from it, and the dyadic magnitude split of a
//! circulant band.
//!
//! Constructions recompute their certificates from scratch before returning;
//! a failed certificate is reported as [`Error::Certificate`].

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{circulant_upper_shape, rad_order};
use crate::error::{invalid, Error, Result};
use crate::linalg::{Entry, SparsePattern};
use crate::patterns::{CirculantSpec, OffsetGraphSpec};
use crate::rademacher::{estimate_rad_norm, RadNormConfig};

/// Largest number of offsets accepted by the `2^d` subset-sum enumeration.
pub const MAX_CUBE_OFFSETS: usize = 20;

fn cert(invariant: &'static str, detail: impl Into<String>) -> Error {
    Error::Certificate {
        invariant: invariant.into(),
        detail: detail.into(),
    }
}

/// `D_k = k − S` and `U_k = k + S` where `S` is the set of subset sums of
/// the offsets modulo `n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CubeFamily {
    spec: OffsetGraphSpec,
    sums: Vec<usize>,
}

impl CubeFamily {
    pub fn new(spec: &OffsetGraphSpec) -> Result<Self> {
        if spec.d() > MAX_CUBE_OFFSETS {
            return Err(Error::OverBudget {
                what: "cube enumeration",
                detail: format!("d = {} exceeds {MAX_CUBE_OFFSETS}", spec.d()),
            });
        }
        let n = spec.n();
        let mut seen = vec![false; n];
        seen[0] = true;
        let mut sums = vec![0usize];
        for &p in spec.offsets() {
            let len = sums.len();
            for i in 0..len {
                let v = (sums[i] + p) % n;
                if !seen[v] {
                    seen[v] = true;
                    sums.push(v);
                }
            }
        }
        sums.sort_unstable();
        Ok(Self {
            spec: spec.clone(),
            sums,
        })
    }

    pub fn spec(&self) -> &OffsetGraphSpec {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.spec.n()
    }

    pub fn d(&self) -> usize {
        self.spec.d()
    }

    /// Common cardinality of every `D_k` and `U_k`.
    pub fn m(&self) -> usize {
        self.sums.len()
    }

    /// Distinct subset sums modulo `n`, ascending.
    pub fn sums(&self) -> &[usize] {
        &self.sums
    }

    pub fn has_distinct_sums(&self) -> bool {
        self.sums.len() == 1 << self.d()
    }

    pub fn lower(&self, k: usize) -> Vec<usize> {
        let n = self.n();
        let mut v: Vec<usize> = self.sums.iter().map(|&s| (k % n + n - s) % n).collect();
        v.sort_unstable();
        v
    }

    pub fn upper(&self, k: usize) -> Vec<usize> {
        let n = self.n();
        let mut v: Vec<usize> = self.sums.iter().map(|&s| (k + s) % n).collect();
        v.sort_unstable();
        v
    }

    /// `i ∈ D_k`.
    pub fn in_lower(&self, k: usize, i: usize) -> bool {
        let n = self.n();
        self.sums.binary_search(&((k % n + n - i % n) % n)).is_ok()
    }
}

pub fn lower_cube(k: usize, spec: &OffsetGraphSpec) -> Result<Vec<usize>> {
    Ok(CubeFamily::new(spec)?.lower(k))
}

pub fn upper_cube(k: usize, spec: &OffsetGraphSpec) -> Result<Vec<usize>> {
    Ok(CubeFamily::new(spec)?.upper(k))
}

/// Exhaustive check of `|D_k| = |U_k| = m`, `i ∈ D_k ⟺ k ∈ U_i`,
/// `Σ_k 1_{D_k}(i) = m` and `D_{k+1} = D_k + 1`. Errors name the first
/// identity that fails.
pub fn check_cube_identities(family: &CubeFamily) -> Result<()> {
    let (n, m) = (family.n(), family.m());
    let mut coverage = vec![0usize; n];
    for k in 0..n {
        let (lower, upper) = (family.lower(k), family.upper(k));
        let distinct = |v: &[usize]| v.windows(2).all(|w| w[0] < w[1]);
        if lower.len() != m || upper.len() != m || !distinct(&lower) || !distinct(&upper) {
            return Err(cert("cube-size", format!("k = {k}: |D_k| = {}, |U_k| = {}, m = {m}", lower.len(), upper.len())));
        }
        for i in 0..n {
            let in_d = lower.binary_search(&i).is_ok();
            if in_d != family.in_lower(k, i) || in_d != family.upper(i).binary_search(&k).is_ok() {
                return Err(cert("cube-duality", format!("k = {k}, i = {i}")));
            }
        }
        lower.iter().for_each(|&i| coverage[i] += 1);
        let mut shifted: Vec<usize> = lower.iter().map(|&i| (i + 1) % n).collect();
        shifted.sort_unstable();
        if shifted != family.lower((k + 1) % n) {
            return Err(cert("cube-shift", format!("D_{} != D_{k} + 1", (k + 1) % n)));
        }
    }
    if let Some(i) = coverage.iter().position(|&c| c != m) {
        return Err(cert("cube-coverage", format!("index {i} lies in {} cubes, m = {m}", coverage[i])));
    }
    Ok(())
}

fn pick_with_mask(family: &CubeFamily, excluded: &[bool], need: f64) -> Option<usize> {
    (0..family.n()).find(|&k| {
        let kept = family.lower(k).into_iter().filter(|&i| !excluded[i]).count();
        kept as f64 >= need
    })
}

/// First `k` (ascending) with `|D_k \ J| ≥ (1 − c)·m`.
pub fn exclusion_pick(j: &[usize], family: &CubeFamily, c: f64) -> Result<usize> {
    let n = family.n();
    if !(c > 0.0 && c < 1.0) {
        return Err(invalid(format!("exclusion constant must lie in (0,1), got {c}")));
    }
    let mut excluded = vec![false; n];
    for &i in j {
        if i >= n {
            return Err(invalid(format!("vertex {i} out of range for n = {n}")));
        }
        excluded[i] = true;
    }
    let size = excluded.iter().filter(|&&x| x).count();
    if size as f64 > c * n as f64 {
        return Err(invalid(format!("|J| = {size} exceeds c·n = {}", c * n as f64)));
    }
    pick_with_mask(family, &excluded, (1.0 - c) * family.m() as f64)
        .ok_or_else(|| cert("exclusion", format!("no k with |D_k \\ J| >= (1-c)m for |J| = {size}")))
}

/// `|E ∩ (I × I)|` for a circulant graph and a vertex mask.
fn edges_in_mask(residues: &[usize], n: usize, vertices: &[usize], mask: &[bool]) -> usize {
    vertices
        .iter()
        .map(|&u| residues.iter().filter(|&&r| mask[(u + r) % n]).count())
        .sum()
}

/// Centers `k_l` and trimmed cubes `I_l = D_{k_l} \ ∪_{l'<l} D_{k_{l'}}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoodSequence {
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub centers: Vec<usize>,
    pub blocks: Vec<Vec<usize>>,
    /// `|E ∩ (I_l × I_l)|` per block.
    pub block_edges: Vec<usize>,
    pub covered_edges: usize,
}

impl GoodSequence {
    pub fn s(&self) -> usize {
        self.centers.len()
    }

    /// Recomputes every invariant in integer arithmetic.
    pub fn certify(&self, family: &CubeFamily) -> Result<()> {
        let n = family.n();
        let m = family.m();
        let d = family.d();
        if self.blocks.len() != self.centers.len() {
            return Err(cert("good-sequence shape", "centers and blocks differ in length"));
        }
        let s = self.s();
        if 8 * m * s < n {
            return Err(cert("s >= n/(8m)", format!("s = {s}, n = {n}, m = {m}")));
        }
        let mut owner = vec![usize::MAX; n];
        let residues = family.spec().residues();
        let mut total = 0;
        for (l, (block, &k)) in self.blocks.iter().zip(&self.centers).enumerate() {
            if 8 * block.len() < 7 * m {
                return Err(cert("|I_l| >= 7m/8", format!("block {l} has {} of m = {m}", block.len())));
            }
            for &i in block {
                if !family.in_lower(k, i) {
                    return Err(cert("I_l within D_k", format!("vertex {i} not in D_{k}")));
                }
                if owner[i] != usize::MAX {
                    return Err(cert("disjoint blocks", format!("vertex {i} in blocks {} and {l}", owner[i])));
                }
                owner[i] = l;
            }
            let mut mask = vec![false; n];
            block.iter().for_each(|&i| mask[i] = true);
            let e = edges_in_mask(&residues, n, block, &mask);
            if e != self.block_edges[l] {
                return Err(cert("block edge count", format!("block {l}: recorded {}, found {e}", self.block_edges[l])));
            }
            total += e;
        }
        if total != self.covered_edges {
            return Err(cert("covered edge total", format!("recorded {}, found {total}", self.covered_edges)));
        }
        if 16 * total < d * n {
            return Err(cert("sum of block edges >= dn/16", format!("{total} edges, d = {d}, n = {n}")));
        }
        Ok(())
    }
}

/// Greedy construction with `s = ⌈n/(8m)⌉` and exclusion constant `1/8`.
pub fn good_sequence(spec: &OffsetGraphSpec) -> Result<GoodSequence> {
    let family = CubeFamily::new(spec)?;
    let n = family.n();
    let m = family.m();
    let s = n.div_ceil(8 * m);
    let residues = spec.residues();
    let mut excluded = vec![false; n];
    let mut centers = Vec::with_capacity(s);
    let mut blocks = Vec::with_capacity(s);
    let mut block_edges = Vec::with_capacity(s);
    for _ in 0..s {
        let k = pick_with_mask(&family, &excluded, 7.0 * m as f64 / 8.0)
            .ok_or_else(|| cert("exclusion", format!("no admissible center after {} rounds", centers.len())))?;
        let block: Vec<usize> = family.lower(k).into_iter().filter(|&i| !excluded[i]).collect();
        let mut mask = vec![false; n];
        block.iter().for_each(|&i| mask[i] = true);
        block_edges.push(edges_in_mask(&residues, n, &block, &mask));
        family.lower(k).into_iter().for_each(|i| excluded[i] = true);
        centers.push(k);
        blocks.push(block);
    }
    let seq = GoodSequence {
        n,
        d: family.d(),
        m,
        covered_edges: block_edges.iter().sum(),
        centers,
        blocks,
        block_edges,
    };
    seq.certify(&family)?;
    Ok(seq)
}

/// Recomputed facts about a [`BlockCover`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverCertificate {
    pub n_matrices: usize,
    pub m: usize,
    pub max_block_size: usize,
    /// `2^d`.
    pub block_size_bound: u64,
    /// Smallest number of matrices `B_k` covering an edge of `E`.
    pub min_coverage: u64,
    /// `min_coverage / N`, to compare with `1/32`.
    pub min_coverage_ratio: f64,
    pub blocks_ok: bool,
    pub subgraph_ok: bool,
    pub symmetric_ok: bool,
    pub entrywise_ok: bool,
}

impl CoverCertificate {
    pub fn passed(&self) -> bool {
        self.blocks_ok && self.subgraph_ok && self.symmetric_ok && self.entrywise_ok
    }
}

/// `B_k = 1_{∪_l (I_l+k)×(I_l+k) ∩ E}` for `k = 0..n`. Matrices are produced
/// on demand from the base blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockCover {
    pub spec: OffsetGraphSpec,
    pub sequence: GoodSequence,
    pub certificate: CoverCertificate,
}

impl BlockCover {
    pub fn n_matrices(&self) -> usize {
        self.spec.n()
    }

    /// Blocks of `B_k`: the shifted trimmed cubes.
    pub fn blocks_at(&self, k: usize) -> Vec<Vec<usize>> {
        let n = self.spec.n();
        self.sequence
            .blocks
            .iter()
            .map(|b| {
                let mut v: Vec<usize> = b.iter().map(|&i| (i + k) % n).collect();
                v.sort_unstable();
                v
            })
            .collect()
    }

    pub fn matrix(&self, k: usize) -> SparsePattern {
        let n = self.spec.n();
        let residues = self.spec.residues();
        let mut mask = vec![false; n];
        let mut edges = Vec::new();
        for block in self.blocks_at(k) {
            block.iter().for_each(|&i| mask[i] = true);
            for &u in &block {
                for &r in &residues {
                    let v = (u + r) % n;
                    if mask[v] {
                        edges.push((u, v, 1.0));
                    }
                }
            }
            block.iter().for_each(|&i| mask[i] = false);
        }
        SparsePattern::new(n, n, edges).expect("cover entries are in range and distinct")
    }

    /// Writes `B_0000.txt …` and `certificate.json` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        let io = |e: std::io::Error| invalid(format!("writing {}: {e}", dir.display()));
        fs::create_dir_all(dir).map_err(io)?;
        let width = self.n_matrices().saturating_sub(1).to_string().len().max(3);
        for k in 0..self.n_matrices() {
            fs::write(dir.join(format!("B_{k:0width$}.txt")), self.matrix(k).to_text()).map_err(io)?;
        }
        let json = serde_json::to_string_pretty(&self.certificate).expect("certificate serializes");
        fs::write(dir.join("certificate.json"), json + "\n").map_err(io)
    }
}

/// Recomputes the cover certificate by accumulating, for every edge, the
/// number of matrices `B_k` that contain it.
pub fn certify_cover(spec: &OffsetGraphSpec, seq: &GoodSequence) -> CoverCertificate {
    let n = spec.n();
    let residues = spec.residues();
    let deg = residues.len();
    let bound = 1u64 << spec.d().min(63);
    let zero = || (vec![0u64; n * deg], true, true, true, 0usize);
    let (coverage, blocks_ok, subgraph_ok, symmetric_ok, max_block) = (0..n)
        .into_par_iter()
        .fold(zero, |(mut cov, mut b_ok, mut sub_ok, mut sym_ok, mut max_b), k| {
            let mut owner = vec![usize::MAX; n];
            for (l, block) in seq.blocks.iter().enumerate() {
                max_b = max_b.max(block.len());
                b_ok &= (block.len() as u64) <= bound;
                for &i in block {
                    let v = (i + k) % n;
                    b_ok &= owner[v] == usize::MAX;
                    owner[v] = l;
                }
            }
            for u in 0..n {
                if owner[u] == usize::MAX {
                    continue;
                }
                for (ri, &r) in residues.iter().enumerate() {
                    let v = (u + r) % n;
                    if owner[v] == owner[u] {
                        sub_ok &= spec.is_edge(u, v);
                        sym_ok &= spec.is_edge(v, u);
                        cov[u * deg + ri] += 1;
                    }
                }
            }
            (cov, b_ok, sub_ok, sym_ok, max_b)
        })
        .reduce(zero, |a, b| {
            let cov = a.0.iter().zip(&b.0).map(|(x, y)| x + y).collect();
            (cov, a.1 && b.1, a.2 && b.2, a.3 && b.3, a.4.max(b.4))
        });
    let min_coverage = coverage.iter().copied().min().unwrap_or(0);
    CoverCertificate {
        n_matrices: n,
        m: seq.m,
        max_block_size: max_block,
        block_size_bound: bound,
        min_coverage,
        min_coverage_ratio: min_coverage as f64 / n as f64,
        blocks_ok,
        subgraph_ok,
        symmetric_ok,
        entrywise_ok: deg == 0 || 32 * min_coverage >= n as u64,
    }
}

/// Cyclic shifts of the good-sequence blocks, `N = n`, with certificate.
pub fn block_cover(spec: &OffsetGraphSpec) -> Result<BlockCover> {
    let sequence = good_sequence(spec)?;
    let certificate = certify_cover(spec, &sequence);
    let check = [
        (certificate.blocks_ok, "blocks disjoint and of size <= 2^d"),
        (certificate.subgraph_ok, "B_k within E"),
        (certificate.symmetric_ok, "B_k symmetric"),
        (certificate.entrywise_ok, "(1/32) 1_E <= (1/N) sum B_k"),
    ];
    if let Some((_, name)) = check.iter().find(|(ok, _)| !ok) {
        return Err(cert(name, format!("n = {}, offsets {:?}", spec.n(), spec.offsets())));
    }
    Ok(BlockCover {
        spec: spec.clone(),
        sequence,
        certificate,
    })
}

/// `⌊ln ln(n + 3)⌋`.
pub fn dyadic_depth(n: usize) -> usize {
    ((n as f64 + 3.0).ln().ln()).floor().max(0.0) as usize
}

/// Partition of a normalized band by magnitude: level `k ≥ 1` holds
/// `e^{−k} < |b| ≤ e^{−k+1}`, level 0 holds `|b| ≤ e^{−k₀}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadicSplit {
    pub n: usize,
    /// `max|b|`; the levels hold `b / scale`.
    pub scale: f64,
    pub k0: usize,
    /// `thresholds[k] = e^{−k}` for `k = 0..=k0`.
    pub thresholds: Vec<f64>,
    /// Normalized bands, indexed by level.
    pub levels: Vec<Vec<f64>>,
}

impl DyadicSplit {
    pub fn level_spec(&self, k: usize) -> CirculantSpec {
        CirculantSpec::new(self.levels[k].clone()).expect("level band is finite and nonempty")
    }

    pub fn is_empty_level(&self, k: usize) -> bool {
        self.levels[k].iter().all(|&b| b == 0.0)
    }

    /// Level sum, which equals the normalized band.
    pub fn reconstruct(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.levels.iter().map(|l| l[j]).sum()).collect()
    }

    /// Level a normalized magnitude belongs to.
    pub fn level_of(&self, magnitude: f64) -> usize {
        (1..=self.k0)
            .find(|&k| magnitude > self.thresholds[k] && magnitude <= self.thresholds[k - 1])
            .unwrap_or(0)
    }
}

pub fn dyadic_split(spec: &CirculantSpec) -> Result<DyadicSplit> {
    let scale = spec.max_abs();
    if scale == 0.0 {
        return Err(invalid("dyadic_split needs a band that is not identically zero"));
    }
    let n = spec.n();
    let k0 = dyadic_depth(n);
    let thresholds: Vec<f64> = (0..=k0).map(|k| (-(k as f64)).exp()).collect();
    let mut split = DyadicSplit {
        n,
        scale,
        k0,
        thresholds,
        levels: vec![vec![0.0; n]; k0 + 1],
    };
    for (j, &b) in spec.band().iter().enumerate() {
        if b != 0.0 {
            let v = b / scale;
            let k = split.level_of(v.abs());
            split.levels[k][j] = v;
        }
    }
    Ok(split)
}

/// One summand of [`composed_upper_bound`], in the original scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelTerm {
    pub level: usize,
    /// Nonzero band positions at this level.
    pub support: usize,
    pub band_l2: f64,
    /// `‖A^(k)‖_{ε,ln(n+1)}` estimate (level 0 uses the Gaussian shape instead).
    pub rad_norm: f64,
    pub term: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComposedBound {
    pub total: f64,
    pub levels: Vec<LevelTerm>,
    /// `√(ln ln(n+3))·√Σb² + ln ln(n+3)·R` with `R` estimated on the whole band.
    pub closed_form: f64,
    /// `total / closed_form`.
    pub ratio: f64,
}

/// Sum over levels of the per-level bounds: level 0 uses
/// `row + col + e^{−k₀}√ln n`, level `k ≥ 1` uses `e^{−k+1}√d_k + R^(k)`.
pub fn composed_upper_bound(spec: &CirculantSpec, config: &RadNormConfig) -> Result<ComposedBound> {
    let split = dyadic_split(spec)?;
    let n = split.n;
    let p = rad_order(n);
    let mut levels = Vec::new();
    for k in 0..=split.k0 {
        if split.is_empty_level(k) {
            continue;
        }
        let level = split.level_spec(k);
        let band_l2 = level.band_l2();
        let support = level.support_size();
        let (rad_norm, term) = if k == 0 {
            let t = split.thresholds[split.k0];
            (0.0, 2.0 * band_l2 + t * (n as f64).ln().sqrt())
        } else {
            let r = estimate_rad_norm(&level.matrix(), p, config)?.lower;
            (r, split.thresholds[k - 1] * (support as f64).sqrt() + r)
        };
        levels.push(LevelTerm {
            level: k,
            support,
            band_l2: band_l2 * split.scale,
            rad_norm: rad_norm * split.scale,
            term: term * split.scale,
        });
    }
    let total = levels.iter().map(|l| l.term).sum();
    let r = estimate_rad_norm(&spec.matrix(), p, config)?.lower;
    let closed_form = circulant_upper_shape(n, spec.band_l2(), r);
    Ok(ComposedBound {
        total,
        levels,
        closed_form,
        ratio: total / closed_form,
    })
}

/// `(1/N) Σ_k B_k` entrywise, as a pattern; only for small `n`.
pub fn cover_average(cover: &BlockCover) -> SparsePattern {
    let n = cover.n_matrices();
    let mut acc = vec![0.0; n * n];
    for k in 0..n {
        for e in cover.matrix(k).entries() {
            acc[e.row * n + e.col] += 1.0;
        }
    }
    let entries = acc
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != 0.0)
        .map(|(idx, &v)| Entry {
            row: idx / n,
            col: idx % n,
            weight: v / n as f64,
        })
        .collect();
    SparsePattern::from_canonical(n, n, entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patterns::circulant_graph;
    use proptest::prelude::*;

    fn spec(n: usize, offs: &[usize]) -> OffsetGraphSpec {
        OffsetGraphSpec::new(n, offs.to_vec()).unwrap()
    }

    #[test]
    fn cube_examples() {
        let s = spec(8, &[1, 2]);
        assert_eq!(lower_cube(5, &s).unwrap(), vec![2, 3, 4, 5]);
        assert_eq!(upper_cube(5, &s).unwrap(), vec![0, 5, 6, 7]);
        let f = CubeFamily::new(&spec(64, &[1, 2, 4, 8])).unwrap();
        assert!(f.has_distinct_sums());
        assert_eq!(f.m(), 16);
        for k in 0..64 {
            assert_eq!(f.lower(k).len(), 16);
        }
        let many: Vec<usize> = (1..=21).collect();
        assert!(CubeFamily::new(&spec(64, &many)).is_err());
    }

    #[test]
    fn cube_identities_hold_and_detect_tampering() {
        for (n, offs) in [(8, vec![1, 2, 3]), (64, vec![1, 2, 4, 8]), (30, vec![5, 10, 15])] {
            check_cube_identities(&CubeFamily::new(&spec(n, &offs)).unwrap()).unwrap();
        }
        let mut f = CubeFamily::new(&spec(16, &[1, 3])).unwrap();
        f.sums.push(f.sums[1]);
        let err = check_cube_identities(&f).unwrap_err();
        assert!(matches!(err, Error::Certificate { ref invariant, .. } if invariant == "cube-size"), "{err}");
    }

    #[test]
    fn exclusion_examples() {
        let f = CubeFamily::new(&spec(32, &[1, 2])).unwrap();
        assert_eq!(exclusion_pick(&[], &f, 0.125).unwrap(), 0);
        let j = f.lower(1);
        let k = exclusion_pick(&j, &f, 0.125).unwrap();
        let kept = f.lower(k).iter().filter(|i| !j.contains(i)).count();
        assert_eq!(kept, 4);
        assert!(exclusion_pick(&(0..5).collect::<Vec<_>>(), &f, 0.125).is_err());
        assert!(exclusion_pick(&[], &f, 1.0).is_err());
    }

    #[test]
    fn good_sequence_examples() {
        let g = good_sequence(&spec(32, &[1, 2])).unwrap();
        assert_eq!((g.s(), g.blocks[0].len()), (1, 4));
        assert!(16 * g.covered_edges >= 2 * 32);
        assert!(g.covered_edges >= 4);
        let g = good_sequence(&spec(8, &[1])).unwrap();
        assert_eq!((g.s(), g.blocks[0].len()), (1, 2));
    }

    #[test]
    fn certify_rejects_tampering() {
        let s = spec(64, &[1, 3]);
        let f = CubeFamily::new(&s).unwrap();
        let good = good_sequence(&s).unwrap();
        let mut bad = good.clone();
        bad.blocks[0].pop();
        assert!(bad.certify(&f).is_err());
        let mut bad = good.clone();
        bad.covered_edges += 1;
        assert!(bad.certify(&f).is_err());
        let mut bad = good.clone();
        bad.centers.pop();
        bad.blocks.pop();
        bad.block_edges.pop();
        assert!(bad.certify(&f).is_err());
    }

    #[test]
    fn cover_examples() {
        for (n, offs, max_block) in [(32, vec![1, 2], 4), (8, vec![1], 2)] {
            let s = spec(n, &offs);
            let cover = block_cover(&s).unwrap();
            assert_eq!(cover.n_matrices(), n);
            assert!(cover.certificate.passed());
            assert!(cover.certificate.max_block_size <= max_block);
            let adj = circulant_graph(&s).adjacency();
            for k in 0..n {
                let b = cover.matrix(k);
                assert_eq!(b, b.transpose());
                assert!(b.entrywise_le(&adj, 1.0).unwrap());
            }
            let avg = cover_average(&cover);
            assert!(adj.entrywise_le(&avg, 1.0 / 32.0).unwrap());
        }
    }

    #[test]
    fn cover_writes_files() {
        let dir = tempfile::tempdir().unwrap();
        let cover = block_cover(&spec(16, &[1, 3])).unwrap();
        cover.write_dir(dir.path()).unwrap();
        let b3: SparsePattern = fs::read_to_string(dir.path().join("B_003.txt")).unwrap().parse().unwrap();
        assert_eq!(b3, cover.matrix(3));
        let json = fs::read_to_string(dir.path().join("certificate.json")).unwrap();
        let back: CoverCertificate = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cover.certificate);
    }

    #[test]
    fn dyadic_examples() {
        let s = CirculantSpec::padded(100, &[1.0, 0.5, 0.2]).unwrap();
        let split = dyadic_split(&s).unwrap();
        assert_eq!(split.k0, 1);
        assert_eq!(&split.levels[1][..3], &[1.0, 0.5, 0.0]);
        assert_eq!(&split.levels[0][..3], &[0.0, 0.0, 0.2]);
        let s = spec(40, &[1, 5]).band();
        let split = dyadic_split(&s).unwrap();
        assert!(split.is_empty_level(0));
        assert_eq!(split.reconstruct(), s.band());
        assert!(dyadic_split(&CirculantSpec::new(vec![0.0; 5]).unwrap()).is_err());
        assert_eq!(dyadic_depth(1), 0);
        assert_eq!(dyadic_depth(100), 1);
    }

    #[test]
    fn composed_examples() {
        let cfg = RadNormConfig {
            samples: 1000,
            ..RadNormConfig::default()
        };
        let s = spec(32, &[1, 2]);
        let b = composed_upper_bound(&s.band(), &cfg).unwrap();
        assert_eq!(b.levels.len(), 1);
        let r = estimate_rad_norm(&s.band().matrix(), rad_order(32), &cfg).unwrap().lower;
        assert!((b.total - (4f64.sqrt() + r)).abs() < 1e-9);
        let small = CirculantSpec::padded(64, &[0.2, 0.1, 0.0, 0.2]).unwrap();
        let gauss_only = CirculantSpec::padded(5, &[0.3, 0.1]).unwrap();
        let b = composed_upper_bound(&gauss_only, &cfg).unwrap();
        assert_eq!(b.levels.len(), 1);
        assert_eq!(b.levels[0].level, 0);
        let expect = 0.3 * (2.0 * (1.0f64 + 1.0 / 9.0).sqrt() + (5f64).ln().sqrt());
        assert!((b.total - expect).abs() < 1e-12);
        let mixed = composed_upper_bound(&small, &cfg).unwrap();
        assert!(mixed.total > 0.0 && mixed.ratio.is_finite());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn cube_identities(n in 2usize..=96, raw in prop::collection::btree_set(1usize..=48, 1..=5)) {
            let offs: Vec<usize> = raw.into_iter().filter(|&p| 2 * p <= n).collect();
            prop_assume!(!offs.is_empty());
            let s = spec(n, &offs);
            let f = CubeFamily::new(&s).unwrap();
            let m = f.m();
            prop_assert!(m <= 1 << offs.len());
            let g = circulant_graph(&s);
            let mut count = vec![0usize; n];
            for k in 0..n {
                let lo = f.lower(k);
                prop_assert_eq!(lo.len(), m);
                prop_assert_eq!(f.upper(k).len(), m);
                lo.iter().for_each(|&i| count[i] += 1);
                for &i in &lo {
                    prop_assert!(f.upper(i).contains(&k));
                    let nb = g.neighbors(i).iter().filter(|v| lo.contains(v)).count();
                    prop_assert!(nb <= g.out_degree(i));
                    prop_assert!(nb >= offs.len(), "vertex {} of D_{} has {} neighbours", i, k, nb);
                }
                let shifted: Vec<usize> = {
                    let mut v: Vec<usize> = lo.iter().map(|&i| (i + 3) % n).collect();
                    v.sort_unstable();
                    v
                };
                prop_assert_eq!(shifted, f.lower(k + 3));
            }
            prop_assert!(count.iter().all(|&c| c == m));
        }

        #[test]
        fn exclusion_adversarial(n in 16usize..=200, p1 in 1usize..=8, extra in 0usize..=20, seed in any::<u64>()) {
            let offs = if extra > p1 && 2 * extra <= n { vec![p1, extra] } else { vec![p1] };
            let s = spec(n, &offs);
            let f = CubeFamily::new(&s).unwrap();
            let size = n / 8;
            let mut j: Vec<usize> = (0..n).collect();
            j.sort_by_key(|&i| crate::rng::derive_seed(seed, i as u64));
            j.truncate(size);
            let k = exclusion_pick(&j, &f, 0.125).unwrap();
            let kept = f.lower(k).iter().filter(|i| !j.contains(i)).count();
            prop_assert!(8 * kept >= 7 * f.m());
        }

        #[test]
        fn sequence_and_cover_certified(n in 8usize..=300, raw in prop::collection::btree_set(1usize..=150, 1..=4)) {
            let offs: Vec<usize> = raw.into_iter().filter(|&p| 2 * p <= n).collect();
            prop_assume!(!offs.is_empty());
            let s = spec(n, &offs);
            let cover = block_cover(&s).unwrap();
            prop_assert!(cover.certificate.passed());
            prop_assert!(cover.certificate.max_block_size <= 1 << offs.len());
        }

        #[test]
        fn dyadic_round_trip(band in prop::collection::vec(prop_oneof![Just(0.0), -5.0f64..5.0], 1..200)) {
            prop_assume!(band.iter().any(|&b| b != 0.0));
            let c = CirculantSpec::new(band.clone()).unwrap();
            let split = dyadic_split(&c).unwrap();
            let normalized: Vec<f64> = band.iter().map(|b| b / split.scale).collect();
            prop_assert_eq!(split.reconstruct(), normalized);
            for (k, level) in split.levels.iter().enumerate() {
                for &v in level.iter().filter(|&&v| v != 0.0) {
                    if k == 0 {
                        prop_assert!(v.abs() <= split.thresholds[split.k0]);
                    } else {
                        prop_assert!(v.abs() > split.thresholds[k] && v.abs() <= split.thresholds[k - 1]);
                    }
                }
            }
        }
    }
}
