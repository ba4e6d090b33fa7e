use rand::Rng;
use serde::{Deserialize, Serialize};

use super::sparse::SparsePattern;
use crate::error::{invalid, Result};
use crate::rng::{stream, Domain};

/// Independent seeded starts; the largest value wins.
pub const RESTARTS: u64 = 3;

/// Krylov cycle length between restarts.
const CYCLE: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormResult {
    pub value: f64,
    /// Gram-operator applications, summed over all starts.
    pub iterations: usize,
    pub converged: bool,
    /// Relative residual `‖Gx − θx‖ / θ` of the accepted Ritz pair.
    pub residual: f64,
}

/// Applies the Gram operator of the smaller side: `AᵀA` or `AAᵀ`.
struct Gram<'a> {
    a: &'a SparsePattern,
    transposed: bool,
    scratch: Vec<f64>,
}

impl<'a> Gram<'a> {
    fn new(a: &'a SparsePattern) -> Self {
        let transposed = a.rows() < a.cols();
        let inner = if transposed { a.cols() } else { a.rows() };
        Self {
            a,
            transposed,
            scratch: vec![0.0; inner],
        }
    }

    fn dim(&self) -> usize {
        if self.transposed {
            self.a.rows()
        } else {
            self.a.cols()
        }
    }

    fn apply(&mut self, x: &[f64], y: &mut [f64]) {
        if self.transposed {
            self.a.matvec_t(x, &mut self.scratch);
            self.a.matvec(&self.scratch, y);
        } else {
            self.a.matvec(x, &mut self.scratch);
            self.a.matvec_t(&self.scratch, y);
        }
    }

    /// `‖A x‖` (or `‖Aᵀx‖`) for unit `x`: a certified lower bound on σ_max.
    fn image_norm(&mut self, x: &[f64]) -> f64 {
        if self.transposed {
            self.a.matvec_t(x, &mut self.scratch);
        } else {
            self.a.matvec(x, &mut self.scratch);
        }
        norm2(&self.scratch) / norm2(x)
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

fn orthogonalize(w: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for q in basis {
            let c = dot(w, q);
            w.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
        }
    }
}

fn random_unit(rng: &mut impl Rng, dim: usize, basis: &[Vec<f64>]) -> Option<Vec<f64>> {
    for _ in 0..8 {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        orthogonalize(&mut v, basis);
        let n = norm2(&v);
        if n > 1e-8 {
            v.iter_mut().for_each(|x| *x /= n);
            return Some(v);
        }
    }
    None
}

/// Number of eigenvalues of the symmetric tridiagonal `(alpha, beta)` below `x`.
fn sturm_count(alpha: &[f64], beta: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for i in 0..alpha.len() {
        let off = if i == 0 { 0.0 } else { beta[i - 1] * beta[i - 1] };
        q = alpha[i] - x - if off == 0.0 { 0.0 } else { off / q };
        if q == 0.0 {
            q = -f64::EPSILON * (x.abs() + 1.0);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// `β_k·|y_k| / θ` for the top Ritz pair of the current tridiagonal, the
/// relative Gram residual that pair would have.
fn lanczos_residual(alpha: &[f64], beta: &[f64], next_beta: f64) -> f64 {
    let y = tridiagonal_top_vector(alpha, beta);
    let k = alpha.len();
    let theta: f64 = (0..k).map(|i| alpha[i] * y[i] * y[i]).sum::<f64>()
        + 2.0 * (0..k - 1).map(|i| beta[i] * y[i] * y[i + 1]).sum::<f64>();
    if theta <= 0.0 {
        return f64::INFINITY;
    }
    next_beta * y[k - 1].abs() / theta
}

/// Unit eigenvector for the largest eigenvalue of a symmetric tridiagonal
/// matrix: Sturm bisection for the eigenvalue, then inverse iteration.
fn tridiagonal_top_vector(alpha: &[f64], beta: &[f64]) -> Vec<f64> {
    let k = alpha.len();
    let radius = |i: usize| {
        let l = if i > 0 { beta[i - 1].abs() } else { 0.0 };
        let r = if i + 1 < k { beta[i].abs() } else { 0.0 };
        l + r
    };
    let mut lo = (0..k).map(|i| alpha[i] - radius(i)).fold(f64::INFINITY, f64::min);
    let mut hi = (0..k).map(|i| alpha[i] + radius(i)).fold(f64::NEG_INFINITY, f64::max);
    let scale = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
    while hi - lo > 4.0 * f64::EPSILON * scale {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(alpha, beta, mid) == k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let shift = hi + 8.0 * f64::EPSILON * scale;
    let mut x: Vec<f64> = (0..k).map(|i| 1.0 / (1.0 + i as f64)).collect();
    for _ in 0..3 {
        // Solve (T − shift·I) y = x by Gaussian elimination without pivoting;
        // vanishing pivots are replaced by a tiny value.
        let tiny = f64::EPSILON * scale;
        let mut diag: Vec<f64> = alpha.iter().map(|a| a - shift).collect();
        let mut rhs = x.clone();
        for i in 1..k {
            if diag[i - 1].abs() < tiny {
                diag[i - 1] = -tiny;
            }
            let f = beta[i - 1] / diag[i - 1];
            diag[i] -= f * beta[i - 1];
            rhs[i] -= f * rhs[i - 1];
        }
        if diag[k - 1].abs() < tiny {
            diag[k - 1] = -tiny;
        }
        let mut y = vec![0.0; k];
        y[k - 1] = rhs[k - 1] / diag[k - 1];
        for i in (0..k - 1).rev() {
            y[i] = (rhs[i] - beta[i] * y[i + 1]) / diag[i];
        }
        let n = norm2(&y);
        if !(n.is_finite() && n > 0.0) {
            break;
        }
        x = y.into_iter().map(|v| v / n).collect();
    }
    let n = norm2(&x);
    x.into_iter().map(|v| v / n).collect()
}

struct Run {
    value: f64,
    iterations: usize,
    converged: bool,
    residual: f64,
}

/// Explicitly restarted Lanczos on the Gram operator with full
/// reorthogonalisation. On breakdown the Krylov space is invariant, so the
/// cycle continues from a fresh random direction orthogonal to the basis.
fn top_eigen_run(gram: &mut Gram<'_>, seed: u64, restart: u64, tol: f64, max_iter: usize) -> Run {
    let dim = gram.dim();
    let mut rng = stream(seed, Domain::NormStart, restart);
    let mut start = random_unit(&mut rng, dim, &[]).expect("dim >= 1");
    let mut iterations = 0;
    let mut best_value = 0.0f64;
    let mut w = vec![0.0; dim];
    loop {
        let k_max = CYCLE.min(dim);
        let mut basis: Vec<Vec<f64>> = vec![start];
        let mut alpha = Vec::with_capacity(k_max);
        let mut beta: Vec<f64> = Vec::with_capacity(k_max);
        while alpha.len() < k_max && iterations < max_iter {
            let j = alpha.len();
            gram.apply(&basis[j], &mut w);
            iterations += 1;
            let a = dot(&w, &basis[j]);
            alpha.push(a);
            orthogonalize(&mut w, &basis);
            let b = norm2(&w);
            if alpha.len() == k_max {
                break;
            }
            if alpha.len() % 4 == 0 && lanczos_residual(&alpha, &beta, b) <= 0.5 * tol {
                break;
            }
            let scale = alpha.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
            if b <= 1e-12 * scale {
                // invariant subspace: continue with a new direction
                match random_unit(&mut rng, dim, &basis) {
                    Some(v) => {
                        beta.push(0.0);
                        basis.push(v);
                    }
                    None => break,
                }
            } else {
                beta.push(b);
                basis.push(w.iter().map(|x| x / b).collect());
            }
        }
        let k = alpha.len();
        let y = tridiagonal_top_vector(&alpha, &beta[..k - 1]);
        let mut ritz = vec![0.0; dim];
        for (c, q) in y.iter().zip(&basis) {
            ritz.iter_mut().zip(q).for_each(|(r, x)| *r += c * x);
        }
        let rn = norm2(&ritz);
        ritz.iter_mut().for_each(|x| *x /= rn);

        gram.apply(&ritz, &mut w);
        iterations += 1;
        let rq = dot(&w, &ritz);
        let value = gram.image_norm(&ritz);
        if rq <= 0.0 {
            // zero operator on the explored space; nothing can be larger
            return Run {
                value,
                iterations,
                converged: true,
                residual: 0.0,
            };
        }
        let res = w
            .iter()
            .zip(&ritz)
            .map(|(g, x)| (g - rq * x).powi(2))
            .sum::<f64>()
            .sqrt()
            / rq;
        best_value = best_value.max(value);
        if res <= tol || iterations >= max_iter {
            return Run {
                value: best_value,
                iterations,
                converged: res <= tol,
                residual: res,
            };
        }
        start = ritz;
    }
}

/// Largest singular value of `a` within relative tolerance `tol`.
///
/// Runs [`RESTARTS`] independent Krylov iterations on the Gram operator,
/// each from a seeded random start, and accepts the maximum. The reported
/// value is `‖A x‖` at the accepted unit vector, hence never above the true
/// norm. When `max_iter` is exhausted the best value so far is returned with
/// `converged = false`.
pub fn operator_norm(a: &SparsePattern, tol: f64, max_iter: usize, seed: u64) -> Result<NormResult> {
    if a.rows() == 0 || a.cols() == 0 {
        return Err(invalid("operator_norm of an empty matrix"));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(invalid(format!("tolerance must be positive, got {tol}")));
    }
    if a.nnz() == 0 {
        return Ok(NormResult {
            value: 0.0,
            iterations: 0,
            converged: true,
            residual: 0.0,
        });
    }
    let mut gram = Gram::new(a);
    let mut out: Option<NormResult> = None;
    let mut total = 0;
    for restart in 0..RESTARTS {
        let run = top_eigen_run(&mut gram, seed, restart, tol, max_iter.max(1));
        total += run.iterations;
        let better = out.is_none_or(|o| run.value > o.value);
        if better {
            out = Some(NormResult {
                value: run.value,
                iterations: 0,
                converged: run.converged,
                residual: run.residual,
            });
        }
    }
    let mut out = out.expect("at least one restart");
    out.iterations = total;
    Ok(out)
}
