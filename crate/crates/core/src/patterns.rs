//! Generators for circulant matrices and graphs, Hamming hypercubes, discrete
//! tori and the banded circulant supergraph of a torus.
//!
//! Vertices are 0-based everywhere. Graphs are stored as directed edge sets,
//! so an undirected edge `{i, j}` contributes both `(i, j)` and `(j, i)`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{Entry, SparsePattern};
use crate::rng::{stream, Domain};

/// Circulant coefficients: `a_ij = band[(i − j) mod n]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CirculantSpec {
    n: usize,
    band: Vec<f64>,
}

impl CirculantSpec {
    pub fn new(band: Vec<f64>) -> Result<Self> {
        if band.is_empty() {
            return Err(invalid("circulant band must have n >= 1 entries"));
        }
        if band.iter().any(|b| !b.is_finite()) {
            return Err(invalid("circulant band has non-finite entries"));
        }
        Ok(Self { n: band.len(), band })
    }

    /// Band of length `n`, zero-padded after the given prefix.
    pub fn padded(n: usize, prefix: &[f64]) -> Result<Self> {
        if prefix.len() > n {
            return Err(invalid(format!("band prefix of length {} exceeds n = {n}", prefix.len())));
        }
        let mut band = prefix.to_vec();
        band.resize(n, 0.0);
        Self::new(band)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn band(&self) -> &[f64] {
        &self.band
    }

    /// `√(Σ b_j²)`, the common row and column length.
    pub fn band_l2(&self) -> f64 {
        self.band.iter().map(|b| b * b).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.band.iter().fold(0.0, |m, b| m.max(b.abs()))
    }

    pub fn is_zero_one(&self) -> bool {
        self.band.iter().all(|&b| b == 0.0 || b == 1.0)
    }

    /// Number of nonzero band positions (row degree of the pattern).
    pub fn support_size(&self) -> usize {
        self.band.iter().filter(|&&b| b != 0.0).count()
    }

    pub fn matrix(&self) -> SparsePattern {
        circulant_matrix(self)
    }
}

/// `n × n` pattern with `a_ij = b_{(i−j) mod n}`.
pub fn circulant_matrix(spec: &CirculantSpec) -> SparsePattern {
    let n = spec.n;
    let mut entries = Vec::with_capacity(n * spec.support_size());
    for i in 0..n {
        for j in 0..n {
            let w = spec.band[(i + n - j) % n];
            if w != 0.0 {
                entries.push(Entry { row: i, col: j, weight: w });
            }
        }
    }
    SparsePattern::from_canonical(n, n, entries)
}

/// Circulant graph on `Z_n` with edges `i − j ≡ ±p_k (mod n)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OffsetGraphSpec {
    n: usize,
    offsets: Vec<usize>,
}

impl OffsetGraphSpec {
    /// Offsets must be strictly increasing with `1 ≤ p_1` and `2 p_d ≤ n`.
    pub fn new(n: usize, offsets: Vec<usize>) -> Result<Self> {
        if n < 2 {
            return Err(invalid(format!("circulant graph needs n >= 2, got {n}")));
        }
        if offsets.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid(format!("offsets must be strictly increasing: {offsets:?}")));
        }
        if let Some(&p) = offsets.iter().find(|&&p| p == 0 || 2 * p > n) {
            return Err(invalid(format!("offset {p} outside 1..=n/2 for n = {n}")));
        }
        Ok(Self { n, offsets })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    /// Number of offsets `d`.
    pub fn d(&self) -> usize {
        self.offsets.len()
    }

    /// `2d`, or `2d − 1` when `p_d = n/2`.
    pub fn degree(&self) -> usize {
        let half = self.offsets.last().is_some_and(|&p| 2 * p == self.n);
        2 * self.d() - usize::from(half)
    }

    pub fn edge_count(&self) -> usize {
        self.degree() * self.n
    }

    /// Residues `r` with `(i, i + r) ∈ E`, sorted and deduplicated.
    pub fn residues(&self) -> Vec<usize> {
        let mut r: Vec<usize> = self
            .offsets
            .iter()
            .flat_map(|&p| [p % self.n, (self.n - p) % self.n])
            .collect();
        r.sort_unstable();
        r.dedup();
        r
    }

    /// The 0-1 band whose circulant matrix is the adjacency matrix.
    pub fn band(&self) -> CirculantSpec {
        let mut band = vec![0.0; self.n];
        for r in self.residues() {
            band[r] = 1.0;
        }
        CirculantSpec { n: self.n, band }
    }

    pub fn is_edge(&self, i: usize, j: usize) -> bool {
        let diff = (j + self.n - i % self.n) % self.n;
        self.offsets.iter().any(|&p| diff == p || diff == self.n - p)
    }
}

/// Structural origin of a graph, used to seed structured subset searches.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum GraphFamily {
    Circulant { n: usize, offsets: Vec<usize> },
    Hypercube { d: usize },
    Torus { m: usize, d: usize },
    Generic,
}

/// Directed graph on `0..n` stored as sorted out-neighbour lists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectedGraph {
    adj: Vec<Vec<usize>>,
    family: GraphFamily,
}

impl DirectedGraph {
    pub fn from_edges<I>(n: usize, edges: I, family: GraphFamily) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut adj = vec![Vec::new(); n];
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(invalid(format!("edge ({i}, {j}) out of range for {n} vertices")));
            }
            adj[i].push(j);
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self { adj, family })
    }

    pub fn vertex_count(&self) -> usize {
        self.adj.len()
    }

    pub fn family(&self) -> &GraphFamily {
        &self.family
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn out_degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn max_degree(&self) -> usize {
        self.adj.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i < self.adj.len() && self.adj[i].binary_search(&j).is_ok()
    }

    /// Edges in row-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(i, list)| list.iter().map(move |&j| (i, j)))
    }

    pub fn is_symmetric(&self) -> bool {
        self.edges().all(|(i, j)| self.has_edge(j, i))
    }

    pub fn has_self_loops(&self) -> bool {
        self.edges().any(|(i, j)| i == j)
    }

    /// Same edge set, ignoring the family tag.
    pub fn same_edges(&self, other: &Self) -> bool {
        self.adj == other.adj
    }

    /// 0-1 adjacency matrix `1_E`.
    pub fn adjacency(&self) -> SparsePattern {
        let n = self.adj.len();
        let entries = self
            .edges()
            .map(|(row, col)| Entry { row, col, weight: 1.0 })
            .collect();
        SparsePattern::from_canonical(n, n, entries)
    }

    /// `|E ∩ (I × J)|` for membership masks.
    pub fn edges_between(&self, in_i: &[bool], in_j: &[bool]) -> usize {
        self.adj
            .iter()
            .enumerate()
            .filter(|(i, _)| in_i[*i])
            .map(|(_, list)| list.iter().filter(|&&j| in_j[j]).count())
            .sum()
    }

    /// `|E ∩ (I × I)|` for a vertex list.
    pub fn edges_within(&self, vertices: &[usize]) -> usize {
        let mut mask = vec![false; self.adj.len()];
        for &v in vertices {
            mask[v] = true;
        }
        self.edges_between(&mask, &mask)
    }
}

pub fn circulant_graph(spec: &OffsetGraphSpec) -> DirectedGraph {
    let n = spec.n;
    let residues = spec.residues();
    let adj = (0..n)
        .map(|i| {
            let mut list: Vec<usize> = residues.iter().map(|r| (i + r) % n).collect();
            list.sort_unstable();
            list
        })
        .collect();
    DirectedGraph {
        adj,
        family: GraphFamily::Circulant {
            n,
            offsets: spec.offsets.clone(),
        },
    }
}

/// Largest hypercube dimension accepted by the generators.
pub const MAX_CUBE_DIM: usize = 24;

/// Hamming hypercube `{0,1}^d`; vertex `v` is the bitmask of its coordinates.
pub fn hypercube(d: usize) -> Result<DirectedGraph> {
    if d == 0 || d > MAX_CUBE_DIM {
        return Err(invalid(format!("hypercube dimension must be in 1..={MAX_CUBE_DIM}, got {d}")));
    }
    let n = 1usize << d;
    let adj = (0..n)
        .map(|v| {
            let mut list: Vec<usize> = (0..d).map(|k| v ^ (1 << k)).collect();
            list.sort_unstable();
            list
        })
        .collect();
    Ok(DirectedGraph {
        adj,
        family: GraphFamily::Hypercube { d },
    })
}

/// Vertices of `Z_2^d` with exactly `level` ones.
pub fn hypercube_level(d: usize, level: usize) -> Vec<usize> {
    (0..1usize << d).filter(|v| v.count_ones() as usize == level).collect()
}

fn checked_pow(m: usize, d: usize) -> Result<usize> {
    u32::try_from(d)
        .ok()
        .and_then(|d| m.checked_pow(d))
        .filter(|&n| n <= 1 << 26)
        .ok_or_else(|| invalid(format!("{m}^{d} vertices is too large")))
}

/// Index of `(i_1, …, i_d) ∈ Z_m^d`: `Σ i_k m^{k−1}`.
pub fn torus_index(m: usize, coords: &[usize]) -> usize {
    coords.iter().rev().fold(0, |acc, &c| acc * m + c)
}

pub fn torus_coords(m: usize, d: usize, mut index: usize) -> Vec<usize> {
    (0..d)
        .map(|_| {
            let c = index % m;
            index /= m;
            c
        })
        .collect()
}

/// Discrete torus `Z_m^d`: vertices differing by ±1 (mod m) in exactly one
/// coordinate are adjacent. Vertices are labelled by [`torus_index`].
pub fn torus(m: usize, d: usize) -> Result<DirectedGraph> {
    if m < 2 || d == 0 {
        return Err(invalid(format!("torus needs m >= 2 and d >= 1, got m = {m}, d = {d}")));
    }
    let n = checked_pow(m, d)?;
    let mut adj = Vec::with_capacity(n);
    for v in 0..n {
        let coords = torus_coords(m, d, v);
        let mut list = Vec::with_capacity(2 * d);
        let mut stride = 1;
        for &c in &coords {
            let up = (c + 1) % m;
            let down = (c + m - 1) % m;
            list.push(v - c * stride + up * stride);
            list.push(v - c * stride + down * stride);
            stride *= m;
        }
        list.sort_unstable();
        list.dedup();
        adj.push(list);
    }
    Ok(DirectedGraph {
        adj,
        family: GraphFamily::Torus { m, d },
    })
}

/// Edges of `Z_2^d` placed on the `{0,1}^d` corner of `Z_m^d` (torus labels).
/// For `m ≥ 2` every such edge is a torus edge.
pub fn hypercube_in_torus(m: usize, d: usize) -> Result<SparsePattern> {
    let n = checked_pow(m, d)?;
    let cube = hypercube(d)?;
    let label = |v: usize| torus_index(m, &(0..d).map(|k| v >> k & 1).collect::<Vec<_>>());
    SparsePattern::indicator(n, n, cube.edges().map(|(u, v)| (label(u), label(v))))
}

/// `Z_m^d` relabelled onto `Z_{m^d}` and the circulant graph whose bands
/// `±m^{k−1}, ±(m−1)m^{k−1}` contain every torus edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusEmbedding {
    pub m: usize,
    pub d: usize,
    /// Signed offsets before reduction, `4d` of them.
    pub signed_offsets: Vec<i64>,
    /// Canonical offsets in `1..=n/2`, deduplicated.
    pub spec: OffsetGraphSpec,
}

impl TorusEmbedding {
    pub fn n(&self) -> usize {
        self.spec.n()
    }

    pub fn index_of(&self, coords: &[usize]) -> usize {
        torus_index(self.m, coords)
    }

    pub fn coords_of(&self, index: usize) -> Vec<usize> {
        torus_coords(self.m, self.d, index)
    }

    pub fn banded_graph(&self) -> DirectedGraph {
        circulant_graph(&self.spec)
    }

    /// Exhaustive check that the relabelled torus is a subgraph of the banded
    /// circulant graph.
    pub fn torus_edges_contained(&self) -> Result<bool> {
        let t = torus(self.m, self.d)?;
        let contained = t.edges().all(|(i, j)| self.spec.is_edge(i, j));
        Ok(contained)
    }
}

pub fn torus_as_circulant_bands(m: usize, d: usize) -> Result<TorusEmbedding> {
    if m < 2 || d == 0 {
        return Err(invalid(format!("torus needs m >= 2 and d >= 1, got m = {m}, d = {d}")));
    }
    let n = checked_pow(m, d)?;
    let mut signed = Vec::with_capacity(4 * d);
    let mut canonical = Vec::with_capacity(4 * d);
    let mut stride = 1usize;
    for _ in 0..d {
        for base in [stride, (m - 1) * stride] {
            for sign in [1i64, -1] {
                signed.push(sign * base as i64);
                let r = (sign * base as i64).rem_euclid(n as i64) as usize;
                canonical.push(r.min(n - r));
            }
        }
        stride *= m;
    }
    canonical.sort_unstable();
    canonical.dedup();
    Ok(TorusEmbedding {
        m,
        d,
        signed_offsets: signed,
        spec: OffsetGraphSpec::new(n, canonical)?,
    })
}

/// Declarative pattern description, `name:key=value,…`.
///
/// ```text
/// circulant:n=32,offsets=1,2        0-1 circulant graph adjacency
/// circulant:n=16,band=1,0.5,0.25    weighted circulant, band zero-padded to n
/// hypercube:d=3
/// torus:m=4,d=2
/// band-graph:m=3,d=2                banded circulant supergraph of Z_m^d
/// random:n=12,density=0.3,seed=1    uniform(-1,1) weights on a random support
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PatternSpec {
    Circulant { n: usize, offsets: Vec<usize> },
    CirculantBand { n: usize, band: Vec<f64> },
    Hypercube { d: usize },
    Torus { m: usize, d: usize },
    BandGraph { m: usize, d: usize },
    Random { n: usize, density: f64, seed: u64 },
}

/// A generated pattern together with the structure it came from.
#[derive(Debug, Clone)]
pub struct BuiltPattern {
    pub matrix: SparsePattern,
    pub graph: Option<DirectedGraph>,
    pub circulant: Option<CirculantSpec>,
    pub offsets: Option<OffsetGraphSpec>,
}

impl PatternSpec {
    pub fn build(&self) -> Result<BuiltPattern> {
        Ok(match self {
            PatternSpec::Circulant { n, offsets } => {
                let spec = OffsetGraphSpec::new(*n, offsets.clone())?;
                let graph = circulant_graph(&spec);
                BuiltPattern {
                    matrix: graph.adjacency(),
                    graph: Some(graph),
                    circulant: Some(spec.band()),
                    offsets: Some(spec),
                }
            }
            PatternSpec::CirculantBand { n, band } => {
                let spec = CirculantSpec::padded(*n, band)?;
                BuiltPattern {
                    matrix: spec.matrix(),
                    graph: None,
                    circulant: Some(spec),
                    offsets: None,
                }
            }
            PatternSpec::Hypercube { d } => graph_pattern(hypercube(*d)?),
            PatternSpec::Torus { m, d } => graph_pattern(torus(*m, *d)?),
            PatternSpec::BandGraph { m, d } => {
                let emb = torus_as_circulant_bands(*m, *d)?;
                let graph = emb.banded_graph();
                BuiltPattern {
                    matrix: graph.adjacency(),
                    graph: Some(graph),
                    circulant: Some(emb.spec.band()),
                    offsets: Some(emb.spec),
                }
            }
            PatternSpec::Random { n, density, seed } => BuiltPattern {
                matrix: random_pattern(*n, *density, *seed)?,
                graph: None,
                circulant: None,
                offsets: None,
            },
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            PatternSpec::Circulant { .. } | PatternSpec::CirculantBand { .. } => "circulant",
            PatternSpec::Hypercube { .. } => "hypercube",
            PatternSpec::Torus { .. } => "torus",
            PatternSpec::BandGraph { .. } => "band-graph",
            PatternSpec::Random { .. } => "random",
        }
    }
}

fn graph_pattern(graph: DirectedGraph) -> BuiltPattern {
    BuiltPattern {
        matrix: graph.adjacency(),
        graph: Some(graph),
        circulant: None,
        offsets: None,
    }
}

/// Square pattern whose entries are kept independently with probability
/// `density`, with weights uniform in (−1, 1).
pub fn random_pattern(n: usize, density: f64, seed: u64) -> Result<SparsePattern> {
    if n == 0 || !(0.0..=1.0).contains(&density) {
        return Err(invalid(format!("random pattern needs n >= 1 and density in [0,1], got {n}, {density}")));
    }
    let mut rng = stream(seed, Domain::Corpus, n as u64);
    let mut entries = Vec::new();
    for row in 0..n {
        for col in 0..n {
            let keep = rng.gen_bool(density);
            let w: f64 = rng.gen_range(-1.0..1.0);
            if keep && w != 0.0 {
                entries.push(Entry { row, col, weight: w });
            }
        }
    }
    Ok(SparsePattern::from_canonical(n, n, entries))
}

fn parse_fields(body: &str) -> Result<BTreeMap<String, String>> {
    let mut fields: BTreeMap<String, String> = BTreeMap::new();
    let mut last: Option<String> = None;
    for tok in body.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        match tok.split_once('=') {
            Some((k, v)) => {
                let k = k.trim().to_string();
                if fields.insert(k.clone(), v.trim().to_string()).is_some() {
                    return Err(Error::Parse(format!("duplicate key {k:?}")));
                }
                last = Some(k);
            }
            None => {
                let key = last
                    .as_ref()
                    .ok_or_else(|| Error::Parse(format!("value {tok:?} without a key")))?;
                let v = fields.get_mut(key).expect("key inserted");
                v.push(',');
                v.push_str(tok);
            }
        }
    }
    Ok(fields)
}

struct Fields {
    name: String,
    map: BTreeMap<String, String>,
}

impl Fields {
    fn take<T: FromStr>(&mut self, key: &str) -> Result<T> {
        let raw = self
            .map
            .remove(key)
            .ok_or_else(|| Error::Parse(format!("{}: missing key {key:?}", self.name)))?;
        raw.parse()
            .map_err(|_| Error::Parse(format!("{}: bad value {raw:?} for {key:?}", self.name)))
    }

    fn take_list<T: FromStr>(&mut self, key: &str) -> Result<Vec<T>> {
        let raw = self
            .map
            .remove(key)
            .ok_or_else(|| Error::Parse(format!("{}: missing key {key:?}", self.name)))?;
        raw.split(',')
            .map(|t| {
                t.trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("{}: bad list item {t:?} for {key:?}", self.name)))
            })
            .collect()
    }

    fn finish(self) -> Result<()> {
        match self.map.keys().next() {
            Some(k) => Err(Error::Parse(format!("{}: unknown key {k:?}", self.name))),
            None => Ok(()),
        }
    }
}

impl FromStr for PatternSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, body) = s.trim().split_once(':').unwrap_or((s.trim(), ""));
        let mut f = Fields {
            name: name.to_string(),
            map: parse_fields(body)?,
        };
        let spec = match name {
            "circulant" => {
                let n = f.take("n")?;
                if f.map.contains_key("band") {
                    PatternSpec::CirculantBand {
                        n,
                        band: f.take_list("band")?,
                    }
                } else {
                    PatternSpec::Circulant {
                        n,
                        offsets: f.take_list("offsets")?,
                    }
                }
            }
            "hypercube" => PatternSpec::Hypercube { d: f.take("d")? },
            "torus" => PatternSpec::Torus {
                m: f.take("m")?,
                d: f.take("d")?,
            },
            "band-graph" => PatternSpec::BandGraph {
                m: f.take("m")?,
                d: f.take("d")?,
            },
            "random" => PatternSpec::Random {
                n: f.take("n")?,
                density: f.take("density")?,
                seed: f.take("seed")?,
            },
            other => return Err(Error::Parse(format!("unknown pattern {other:?}"))),
        };
        f.finish()?;
        Ok(spec)
    }
}

fn join<T: fmt::Debug>(items: &[T]) -> String {
    items.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

impl fmt::Display for PatternSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PatternSpec::Circulant { n, offsets } => write!(f, "circulant:n={n},offsets={}", join(offsets)),
            PatternSpec::CirculantBand { n, band } => write!(f, "circulant:n={n},band={}", join(band)),
            PatternSpec::Hypercube { d } => write!(f, "hypercube:d={d}"),
            PatternSpec::Torus { m, d } => write!(f, "torus:m={m},d={d}"),
            PatternSpec::BandGraph { m, d } => write!(f, "band-graph:m={m},d={d}"),
            PatternSpec::Random { n, density, seed } => write!(f, "random:n={n},density={density:?},seed={seed}"),
        }
    }
}
