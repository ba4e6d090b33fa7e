use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::dense::DenseMatrix;
use crate::error::{invalid, Error, Result};

/// One stored coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub row: usize,
    pub col: usize,
    pub weight: f64,
}

/// Coordinate-listed real matrix in canonical form: entries sorted row-major,
/// at most one per position, no stored zeros.
///
/// The same type doubles as the weighted adjacency matrix of a directed graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsePattern {
    rows: usize,
    cols: usize,
    entries: Vec<Entry>,
}

impl SparsePattern {
    /// Builds a canonical pattern. Zero weights are dropped; duplicates,
    /// out-of-range indices and non-finite weights are rejected.
    pub fn new<I>(rows: usize, cols: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut out = Vec::new();
        for (row, col, weight) in entries {
            if row >= rows || col >= cols {
                return Err(Error::IndexOutOfRange {
                    row,
                    col,
                    rows,
                    cols,
                });
            }
            if !weight.is_finite() {
                return Err(Error::NonFiniteWeight { row, col });
            }
            if weight != 0.0 {
                out.push(Entry { row, col, weight });
            }
        }
        out.sort_by_key(|e| (e.row, e.col));
        if let Some(w) = out.windows(2).find(|w| (w[0].row, w[0].col) == (w[1].row, w[1].col)) {
            return Err(Error::DuplicateEntry {
                row: w[0].row,
                col: w[0].col,
            });
        }
        Ok(Self { rows, cols, entries: out })
    }

    /// Entries already known to be canonical (sorted, unique, nonzero).
    pub(crate) fn from_canonical(rows: usize, cols: usize, entries: Vec<Entry>) -> Self {
        debug_assert!(entries.windows(2).all(|w| (w[0].row, w[0].col) < (w[1].row, w[1].col)));
        debug_assert!(entries.iter().all(|e| e.weight != 0.0));
        Self { rows, cols, entries }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_canonical(n, n, (0..n).map(|i| Entry { row: i, col: i, weight: 1.0 }).collect())
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        let entries = (0..rows)
            .flat_map(|row| (0..cols).map(move |col| Entry { row, col, weight: 1.0 }))
            .collect();
        Self::from_canonical(rows, cols, entries)
    }

    /// 0-1 pattern with ones at the given positions.
    pub fn indicator<I>(rows: usize, cols: usize, positions: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        Self::new(rows, cols, positions.into_iter().map(|(i, j)| (i, j, 1.0)))
    }

    pub fn from_dense(dense: &DenseMatrix) -> Self {
        let mut entries = Vec::new();
        for row in 0..dense.rows() {
            for col in 0..dense.cols() {
                let weight = dense.get(row, col);
                if weight != 0.0 {
                    entries.push(Entry { row, col, weight });
                }
            }
        }
        Self::from_canonical(dense.rows(), dense.cols(), entries)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.rows, self.cols);
        for e in &self.entries {
            d.set(e.row, e.col, e.weight);
        }
        d
    }

    /// Block-diagonal assembly of `blocks`.
    pub fn block_diagonal(blocks: &[SparsePattern]) -> Self {
        let rows = blocks.iter().map(|b| b.rows).sum();
        let cols = blocks.iter().map(|b| b.cols).sum();
        let mut entries = Vec::new();
        let (mut r0, mut c0) = (0, 0);
        for b in blocks {
            entries.extend(b.entries.iter().map(|e| Entry {
                row: e.row + r0,
                col: e.col + c0,
                weight: e.weight,
            }));
            r0 += b.rows;
            c0 += b.cols;
        }
        Self::from_canonical(rows, cols, entries)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries
            .binary_search_by_key(&(row, col), |e| (e.row, e.col))
            .map(|k| self.entries[k].weight)
            .unwrap_or(0.0)
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.get(row, col) != 0.0
    }

    pub fn transpose(&self) -> Self {
        let mut entries: Vec<Entry> = self
            .entries
            .iter()
            .map(|e| Entry {
                row: e.col,
                col: e.row,
                weight: e.weight,
            })
            .collect();
        entries.sort_by_key(|e| (e.row, e.col));
        Self::from_canonical(self.cols, self.rows, entries)
    }

    /// `f` applied to every stored weight; results equal to zero are dropped.
    pub fn map_weights(&self, mut f: impl FnMut(&Entry) -> f64) -> Self {
        let entries = self
            .entries
            .iter()
            .filter_map(|e| {
                let weight = f(e);
                (weight != 0.0).then_some(Entry { weight, ..*e })
            })
            .collect();
        Self::from_canonical(self.rows, self.cols, entries)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        self.map_weights(|e| e.weight * factor)
    }

    pub fn abs(&self) -> Self {
        self.map_weights(|e| e.weight.abs())
    }

    /// Keeps the entries satisfying `keep`.
    pub fn filter(&self, mut keep: impl FnMut(&Entry) -> bool) -> Self {
        let entries = self.entries.iter().copied().filter(|e| keep(e)).collect();
        Self::from_canonical(self.rows, self.cols, entries)
    }

    /// Square patterns only: zeroes every row and column whose index is in `removed`.
    pub fn without_indices(&self, removed: &[usize]) -> Self {
        let mut mask = vec![false; self.rows.max(self.cols)];
        for &i in removed {
            if i < mask.len() {
                mask[i] = true;
            }
        }
        self.filter(|e| !mask[e.row] && !mask[e.col])
    }

    /// `B[row_perm[i], col_perm[j]] = A[i, j]`.
    pub fn permuted(&self, row_perm: &[usize], col_perm: &[usize]) -> Result<Self> {
        if row_perm.len() != self.rows || col_perm.len() != self.cols {
            return Err(invalid("permutation length does not match shape"));
        }
        Self::new(
            self.rows,
            self.cols,
            self.entries
                .iter()
                .map(|e| (row_perm[e.row], col_perm[e.col], e.weight)),
        )
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, e| m.max(e.weight.abs()))
    }

    pub fn row_norms(&self) -> Vec<f64> {
        let mut sq = vec![0.0; self.rows];
        for e in &self.entries {
            sq[e.row] += e.weight * e.weight;
        }
        sq.into_iter().map(f64::sqrt).collect()
    }

    pub fn col_norms(&self) -> Vec<f64> {
        let mut sq = vec![0.0; self.cols];
        for e in &self.entries {
            sq[e.col] += e.weight * e.weight;
        }
        sq.into_iter().map(f64::sqrt).collect()
    }

    pub fn max_row_l2(&self) -> f64 {
        self.row_norms().into_iter().fold(0.0, f64::max)
    }

    pub fn max_col_l2(&self) -> f64 {
        self.col_norms().into_iter().fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        self.entries.iter().map(|e| e.weight * e.weight).sum::<f64>().sqrt()
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for e in &self.entries {
            y[e.row] += e.weight * x[e.col];
        }
    }

    /// `y = Aᵀ x`.
    pub fn matvec_t(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for e in &self.entries {
            y[e.col] += e.weight * x[e.row];
        }
    }

    /// Bilinear form `sᵀ A t`.
    pub fn bilinear(&self, s: &[f64], t: &[f64]) -> f64 {
        self.entries.iter().map(|e| e.weight * s[e.row] * t[e.col]).sum()
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }

    /// Entrywise (Hadamard) product.
    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        let mut entries = Vec::new();
        let (mut a, mut b) = (self.entries.iter().peekable(), other.entries.iter().peekable());
        while let (Some(x), Some(y)) = (a.peek().copied(), b.peek().copied()) {
            match (x.row, x.col).cmp(&(y.row, y.col)) {
                std::cmp::Ordering::Less => {
                    a.next();
                }
                std::cmp::Ordering::Greater => {
                    b.next();
                }
                std::cmp::Ordering::Equal => {
                    let weight = x.weight * y.weight;
                    if weight != 0.0 {
                        entries.push(Entry { weight, ..*x });
                    }
                    a.next();
                    b.next();
                }
            }
        }
        Ok(Self::from_canonical(self.rows, self.cols, entries))
    }

    /// True iff `scale · a_ij ≤ b_ij` at every position, zeros included.
    pub fn entrywise_le(&self, other: &Self, scale: f64) -> Result<bool> {
        self.check_same_shape(other)?;
        // Positions outside both supports compare 0 ≤ 0. Walk the merged supports.
        let (mut a, mut b) = (self.entries.iter().peekable(), other.entries.iter().peekable());
        loop {
            let (lhs, rhs) = match (a.peek().copied(), b.peek().copied()) {
                (None, None) => return Ok(true),
                (Some(x), None) => {
                    a.next();
                    (scale * x.weight, 0.0)
                }
                (None, Some(y)) => {
                    b.next();
                    (0.0, y.weight)
                }
                (Some(x), Some(y)) => match (x.row, x.col).cmp(&(y.row, y.col)) {
                    std::cmp::Ordering::Less => {
                        a.next();
                        (scale * x.weight, 0.0)
                    }
                    std::cmp::Ordering::Greater => {
                        b.next();
                        (0.0, y.weight)
                    }
                    std::cmp::Ordering::Equal => {
                        let pair = (scale * x.weight, y.weight);
                        a.next();
                        b.next();
                        pair
                    }
                },
            };
            if lhs > rhs {
                return Ok(false);
            }
        }
    }

    /// Text form: header `rows cols nnz`, then one `i j w` line per entry.
    pub fn to_text(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for SparsePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} {} {}", self.rows, self.cols, self.entries.len())?;
        for e in &self.entries {
            writeln!(f, "{} {} {:?}", e.row, e.col, e.weight)?;
        }
        Ok(())
    }
}

impl FromStr for SparsePattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut lines = s
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| Error::Parse("missing header".into()))?;
        let head: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::Parse(format!("bad header token {t:?}"))))
            .collect::<Result<_>>()?;
        let [rows, cols, nnz] = head[..] else {
            return Err(Error::Parse(format!("header must be `rows cols nnz`, got {header:?}")));
        };
        let mut triples = Vec::with_capacity(nnz);
        for line in lines {
            let toks: Vec<&str> = line.split_whitespace().collect();
            let [i, j, w] = toks[..] else {
                return Err(Error::Parse(format!("entry line must be `i j w`, got {line:?}")));
            };
            let parse_idx = |t: &str| t.parse::<usize>().map_err(|_| Error::Parse(format!("bad index {t:?}")));
            let w: f64 = w.parse().map_err(|_| Error::Parse(format!("bad weight {w:?}")))?;
            triples.push((parse_idx(i)?, parse_idx(j)?, w));
        }
        if triples.len() != nnz {
            return Err(Error::Parse(format!("header declares {nnz} entries, found {}", triples.len())));
        }
        Self::new(rows, cols, triples)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SparsePattern {
        SparsePattern::new(2, 3, [(1, 2, -1.5), (0, 0, 2.0), (0, 1, 0.0)]).unwrap()
    }

    #[test]
    fn canonical_form_drops_zeros_and_sorts() {
        let a = small();
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.entries()[0], Entry { row: 0, col: 0, weight: 2.0 });
        assert_eq!(a.get(1, 2), -1.5);
        assert_eq!(a.get(0, 1), 0.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            SparsePattern::new(2, 2, [(2, 0, 1.0)]),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            SparsePattern::new(2, 2, [(1, 0, 1.0), (1, 0, 2.0)]),
            Err(Error::DuplicateEntry { row: 1, col: 0 })
        ));
        assert!(matches!(
            SparsePattern::new(2, 2, [(1, 0, f64::NAN)]),
            Err(Error::NonFiniteWeight { .. })
        ));
    }

    #[test]
    fn text_round_trip() {
        let a = SparsePattern::new(3, 3, [(0, 1, 0.1), (2, 2, -3.0), (1, 0, 1e-300)]).unwrap();
        let text = a.to_text();
        assert!(text.starts_with("3 3 3\n"));
        let b: SparsePattern = text.parse().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn text_parse_errors() {
        assert!("2 2\n".parse::<SparsePattern>().is_err());
        assert!("2 2 2\n0 0 1\n".parse::<SparsePattern>().is_err());
        assert!("2 2 1\n0 x 1\n".parse::<SparsePattern>().is_err());
    }

    #[test]
    fn hadamard_identities() {
        let a = small();
        assert_eq!(a.hadamard(&SparsePattern::ones(2, 3)).unwrap(), a);
        assert_eq!(a.hadamard(&SparsePattern::zeros(2, 3)).unwrap().nnz(), 0);
        let e = SparsePattern::indicator(3, 3, [(0, 0), (0, 1), (2, 1)]).unwrap();
        let f = SparsePattern::indicator(3, 3, [(0, 1), (2, 1), (2, 2)]).unwrap();
        let both = SparsePattern::indicator(3, 3, [(0, 1), (2, 1)]).unwrap();
        assert_eq!(e.hadamard(&f).unwrap(), both);
        assert!(a.hadamard(&SparsePattern::ones(3, 2)).is_err());
    }

    #[test]
    fn domination() {
        let a = small();
        assert!(a.entrywise_le(&a, 1.0).unwrap());
        assert!(!SparsePattern::ones(2, 2)
            .entrywise_le(&SparsePattern::zeros(2, 2), 1.0)
            .unwrap());
        // negative entries of A are dominated by zeros of B
        let neg = SparsePattern::new(2, 2, [(0, 0, -1.0)]).unwrap();
        assert!(neg.entrywise_le(&SparsePattern::zeros(2, 2), 1.0).unwrap());
        assert!(!SparsePattern::zeros(2, 2).entrywise_le(&neg, 1.0).unwrap());
        let half = SparsePattern::ones(2, 2).scaled(0.5);
        assert!(SparsePattern::ones(2, 2).entrywise_le(&half, 0.5).unwrap());
        assert!(!SparsePattern::ones(2, 2).entrywise_le(&half, 0.51).unwrap());
        assert!(a.entrywise_le(&SparsePattern::ones(3, 3), 1.0).is_err());
    }

    #[test]
    fn row_col_norms_and_transpose() {
        let a = small();
        assert_eq!(a.row_norms(), vec![2.0, 1.5]);
        assert_eq!(a.col_norms(), vec![2.0, 0.0, 1.5]);
        let t = a.transpose();
        assert_eq!(t.shape(), (3, 2));
        assert_eq!(t.get(2, 1), -1.5);
        assert_eq!(t.transpose(), a);
    }

    #[test]
    fn block_diagonal_and_removal() {
        let b = SparsePattern::block_diagonal(&[SparsePattern::ones(2, 2), SparsePattern::identity(1)]);
        assert_eq!(b.shape(), (3, 3));
        assert_eq!(b.nnz(), 5);
        assert_eq!(b.get(2, 2), 1.0);
        assert_eq!(b.get(1, 2), 0.0);
        let r = b.without_indices(&[0]);
        assert_eq!(r.nnz(), 2);
    }
}
