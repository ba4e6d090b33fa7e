use crate::error::{Error, Result};

/// Largest dimension accepted by the exact oracle.
pub const ORACLE_MAX_DIM: usize = 32;

/// Row-major dense matrix, used for small exact computations.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Panics if the rows are ragged.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    /// `AᵀA`.
    pub fn gram(&self) -> Self {
        let mut g = Self::zeros(self.cols, self.cols);
        for a in 0..self.cols {
            for b in a..self.cols {
                let v: f64 = (0..self.rows).map(|i| self.get(i, a) * self.get(i, b)).sum();
                g.set(a, b, v);
                g.set(b, a, v);
            }
        }
        g
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.get(i, j) * x[j]).sum())
            .collect()
    }
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues (unsorted) and the matrix whose column `k` is the
/// eigenvector of eigenvalue `k`.
pub fn symmetric_eigen(sym: &DenseMatrix) -> (Vec<f64>, DenseMatrix) {
    let n = sym.rows();
    assert_eq!(n, sym.cols(), "symmetric_eigen needs a square matrix");
    let mut a = sym.clone();
    let mut v = DenseMatrix::identity(n);
    let scale = a.data.iter().map(|x| x * x).sum::<f64>().sqrt();
    if scale == 0.0 {
        return (vec![0.0; n], v);
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a.get(i, j) * a.get(i, j))
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    ((0..n).map(|i| a.get(i, i)).collect(), v)
}

fn check_oracle_dims(a: &DenseMatrix) -> Result<()> {
    let dim = a.rows().max(a.cols());
    if dim > ORACLE_MAX_DIM {
        return Err(Error::OverBudget {
            what: "operator_norm_oracle",
            detail: format!("dimension {dim} > {ORACLE_MAX_DIM}"),
        });
    }
    Ok(())
}

/// Exact largest singular value via the full eigen-decomposition of the
/// smaller Gram matrix. Dimensions above [`ORACLE_MAX_DIM`] are rejected.
pub fn operator_norm_oracle(a: &DenseMatrix) -> Result<f64> {
    check_oracle_dims(a)?;
    if a.rows() == 0 || a.cols() == 0 {
        return Ok(0.0);
    }
    let gram = if a.rows() < a.cols() { a.transpose().gram() } else { a.gram() };
    let (vals, _) = symmetric_eigen(&gram);
    Ok(vals.into_iter().fold(0.0, f64::max).max(0.0).sqrt())
}

/// Top singular triple `(σ, u, v)` with `A v = σ u`, `‖u‖ = ‖v‖ = 1`.
///
/// For a nonnegative matrix the vectors are returned nonnegative.
pub fn top_singular_pair(a: &DenseMatrix) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    check_oracle_dims(a)?;
    let (vals, vecs) = symmetric_eigen(&a.gram());
    let (k, &lambda) = vals
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.total_cmp(y.1).then(y.0.cmp(&x.0)))
        .expect("nonempty matrix");
    let mut v: Vec<f64> = (0..a.cols()).map(|i| vecs.get(i, k)).collect();
    if v.iter().sum::<f64>() < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    let sigma = lambda.max(0.0).sqrt();
    let mut u = a.matvec(&v);
    let un = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    if un > 0.0 {
        u.iter_mut().for_each(|x| *x /= un);
    } else {
        u = vec![0.0; a.rows()];
        if let Some(first) = u.first_mut() {
            *first = 1.0;
        }
    }
    Ok((sigma, u, v))
}
