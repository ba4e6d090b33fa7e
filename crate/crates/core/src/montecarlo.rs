//! Seeded sampling of `ε·A` and Monte Carlo checks.
//!
//! Sample `k` draws its signs from stream `k` of the sign domain, one bit per
//! stored entry in canonical (row-major) order, so estimates depend only on
//! `(inputs, seed, samples)` and never on the thread count.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{operator_norm, SparsePattern};
use crate::patterns::CirculantSpec;
use crate::rademacher::lp_of_coefficients;
use crate::rng::{derive_seed, sign_bits, stream, Domain, GENERATOR_ID};

/// Width of every Monte Carlo inequality check, in standard errors.
pub const SLACK_STDERRS: f64 = 3.0;
/// Allowance below the deterministic row/column floor.
pub const FLOOR_EPS: f64 = 1e-9;
/// Iteration cap handed to [`operator_norm`] per sample.
pub const NORM_MAX_ITER: usize = 2000;

/// One realization `ε_ij ∈ {−1, +1}` per stored entry of a pattern.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignSample {
    pub seed: u64,
    pub counter: u64,
    pub signs: Vec<i8>,
}

impl SignSample {
    pub fn draw(a: &SparsePattern, seed: u64, counter: u64) -> Self {
        let mut bits = sign_bits(seed, counter);
        Self {
            seed,
            counter,
            signs: (0..a.nnz()).map(|_| bits.next_sign() as i8).collect(),
        }
    }

    /// `ε·A`. Panics if the sample was drawn for a different entry count.
    pub fn apply(&self, a: &SparsePattern) -> SparsePattern {
        assert_eq!(self.signs.len(), a.nnz(), "sign sample drawn for another pattern");
        let mut k = 0;
        a.map_weights(|e| {
            k += 1;
            e.weight * f64::from(self.signs[k - 1])
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    pub mean: f64,
    /// Sample standard deviation over `√samples`.
    pub stderr: f64,
    pub samples: usize,
    pub seed: u64,
    pub generator: String,
    pub min: f64,
    pub max: f64,
    /// `max(max_i ‖row_i‖₂, max_j ‖col_j‖₂)`, a lower bound for every realization.
    pub floor: f64,
    pub floor_violations: usize,
    pub unconverged: usize,
}

fn run_in_pool<T: Send>(threads: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(job()),
        Some(0) => Err(invalid("thread count must be positive")),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map(|pool| pool.install(job))
            .map_err(|e| invalid(format!("cannot build thread pool: {e}"))),
    }
}

/// Norms of `ε·A` for samples `0..samples`, where the signs of sample `k`
/// are drawn over the entries of `source` and `A` takes the sign of the
/// source entry at the same position. `A`'s support must lie inside
/// `source`'s.
fn coupled_norms(a: &SparsePattern, source: &SparsePattern, samples: usize, seed: u64, tol: f64) -> Result<Vec<(f64, bool)>> {
    let lookup: Vec<usize> = a
        .entries()
        .iter()
        .map(|e| {
            source
                .entries()
                .binary_search_by(|s| (s.row, s.col).cmp(&(e.row, e.col)))
                .map_err(|_| invalid(format!("entry ({}, {}) is outside the sign source", e.row, e.col)))
        })
        .collect::<Result<_>>()?;
    (0..samples as u64)
        .into_par_iter()
        .map(|k| {
            let draw = SignSample::draw(source, seed, k);
            let mut idx = 0;
            let signed = a.map_weights(|e| {
                idx += 1;
                e.weight * f64::from(draw.signs[lookup[idx - 1]])
            });
            operator_norm(&signed, tol, NORM_MAX_ITER, derive_seed(seed, k)).map(|r| (r.value, r.converged))
        })
        .collect()
}

fn summarize(a: &SparsePattern, norms: &[(f64, bool)], seed: u64) -> NormEstimate {
    let n = norms.len() as f64;
    let mean = norms.iter().map(|x| x.0).sum::<f64>() / n;
    let var = norms.iter().map(|x| (x.0 - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let floor = a.max_row_l2().max(a.max_col_l2());
    NormEstimate {
        mean,
        stderr: (var / n).sqrt(),
        samples: norms.len(),
        seed,
        generator: GENERATOR_ID.into(),
        min: norms.iter().map(|x| x.0).fold(f64::INFINITY, f64::min),
        max: norms.iter().map(|x| x.0).fold(f64::NEG_INFINITY, f64::max),
        floor,
        floor_violations: norms.iter().filter(|x| x.0 < floor - FLOOR_EPS).count(),
        unconverged: norms.iter().filter(|x| !x.1).count(),
    }
}

/// Mean of `‖ε·A‖` over `samples` independent sign realizations.
/// `threads = None` uses the global pool; the result is identical either way.
pub fn estimate_expected_norm(a: &SparsePattern, samples: usize, seed: u64, tol: f64, threads: Option<usize>) -> Result<NormEstimate> {
    if samples < 2 {
        return Err(invalid(format!("need at least 2 samples, got {samples}")));
    }
    let norms = run_in_pool(threads, || coupled_norms(a, a, samples, seed, tol))??;
    Ok(summarize(a, &norms, seed))
}

/// One labelled estimate inside a [`McReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub label: String,
    pub mean: f64,
    pub stderr: f64,
}

/// Outcome of a Monte Carlo check; `mean`/`stderr` describe the tested
/// quantity and `slack` the tolerance it was held to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub quantity: String,
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
    pub seed: u64,
    pub generator: String,
    pub pass: bool,
    pub slack: f64,
    pub components: Vec<Component>,
}

/// Checks `E‖ε·A‖ ≤ E‖ε·B‖` for `|a_ij| ≤ |b_ij|`. Both sides share one
/// realization per sample (signs drawn over `B`'s entries). The tested
/// quantity is `mean_A − mean_B`, held to `3·(stderr_A + stderr_B)`.
pub fn check_contraction(a: &SparsePattern, b: &SparsePattern, samples: usize, seed: u64, tol: f64, threads: Option<usize>) -> Result<McReport> {
    if !a.abs().entrywise_le(&b.abs(), 1.0)? {
        return Err(invalid("contraction check needs |a_ij| <= |b_ij| at every position"));
    }
    if samples < 2 {
        return Err(invalid(format!("need at least 2 samples, got {samples}")));
    }
    let (na, nb) = run_in_pool(threads, || {
        rayon::join(|| coupled_norms(a, b, samples, seed, tol), || coupled_norms(b, b, samples, seed, tol))
    })?;
    let (ea, eb) = (summarize(a, &na?, seed), summarize(b, &nb?, seed));
    let slack = SLACK_STDERRS * (ea.stderr + eb.stderr);
    let diff = ea.mean - eb.mean;
    Ok(McReport {
        quantity: "E|eps.A| - E|eps.B|".into(),
        mean: diff,
        stderr: ea.stderr + eb.stderr,
        samples,
        seed,
        generator: GENERATOR_ID.into(),
        pass: diff <= slack,
        slack,
        components: vec![
            Component {
                label: "A".into(),
                mean: ea.mean,
                stderr: ea.stderr,
            },
            Component {
                label: "B".into(),
                mean: eb.mean,
                stderr: eb.stderr,
            },
        ],
    })
}

/// `L_p` of `Σ a_ij ε_ij s_{i+k} t_{j+k}` (indices mod `n`): exact when at
/// most 20 coefficients are nonzero, Monte Carlo otherwise.
pub fn shifted_lp(spec: &CirculantSpec, s: &[f64], t: &[f64], shift: usize, p: f64, samples: usize, seed: u64) -> Result<(f64, f64, bool)> {
    let n = spec.n();
    let coeffs: Vec<f64> = spec
        .matrix()
        .entries()
        .iter()
        .map(|e| e.weight * s[(e.row + shift) % n] * t[(e.col + shift) % n])
        .filter(|&c| c != 0.0)
        .collect();
    if coeffs.is_empty() {
        return Ok((0.0, 0.0, true));
    }
    lp_of_coefficients(&coeffs, p, samples, seed)
}

/// Compares [`shifted_lp`] across shifts (`None` samples eight of them).
/// Fails when some pair differs by more than `3·(stderr_k + stderr_l)`
/// plus `1e-9` relative rounding allowance.
pub fn check_shift_invariance(
    spec: &CirculantSpec,
    s: &[f64],
    t: &[f64],
    p: f64,
    shifts: Option<&[usize]>,
    samples: usize,
    seed: u64,
) -> Result<McReport> {
    let n = spec.n();
    if s.len() != n || t.len() != n {
        return Err(invalid(format!("s and t must have length {n}")));
    }
    let l2 = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if l2(s) > 1.0 + 1e-12 || l2(t) > 1.0 + 1e-12 {
        return Err(invalid("shift invariance needs ||s||_2, ||t||_2 <= 1"));
    }
    let shifts: Vec<usize> = match shifts {
        Some(list) => list.iter().map(|k| k % n).collect(),
        None => {
            let mut rng = stream(seed, Domain::Shifts, 0);
            let mut v: Vec<usize> = std::iter::once(0).chain((0..7).map(|_| rng.gen_range(0..n))).collect();
            v.sort_unstable();
            v.dedup();
            v
        }
    };
    let values: Vec<(f64, f64, bool)> = shifts
        .par_iter()
        .map(|&k| shifted_lp(spec, s, t, k, p, samples, seed))
        .collect::<Result<_>>()?;
    let mut worst = (0.0f64, 0.0f64, true);
    for i in 0..values.len() {
        for j in i + 1..values.len() {
            let dev = (values[i].0 - values[j].0).abs();
            let slack = SLACK_STDERRS * (values[i].1 + values[j].1) + 1e-9 * values[i].0.abs().max(values[j].0.abs()).max(1.0);
            if dev - slack > worst.0 - worst.1 {
                worst = (dev, slack, dev <= slack);
            }
        }
    }
    let all_exact = values.iter().all(|v| v.2);
    Ok(McReport {
        quantity: format!("max pairwise |L_{p}(shift k) - L_{p}(shift l)|"),
        mean: worst.0,
        stderr: values.iter().map(|v| v.1).fold(0.0, f64::max),
        samples: if all_exact { 0 } else { samples },
        seed,
        generator: GENERATOR_ID.into(),
        pass: worst.2,
        slack: worst.1,
        components: shifts
            .iter()
            .zip(&values)
            .map(|(k, v)| Component {
                label: format!("shift {k}"),
                mean: v.0,
                stderr: v.1,
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{operator_norm_oracle, DenseMatrix};
    use crate::patterns::{hypercube_in_torus, random_pattern, torus};
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest, ProptestConfig};

    const TOL: f64 = 1e-10;

    #[test]
    fn trivial_estimates() {
        let one = SparsePattern::new(1, 1, [(0, 0, -2.5)]).unwrap();
        let e = estimate_expected_norm(&one, 50, 3, TOL, None).unwrap();
        assert_eq!((e.mean, e.stderr), (2.5, 0.0));
        let e = estimate_expected_norm(&SparsePattern::identity(6), 50, 3, TOL, None).unwrap();
        assert!((e.mean - 1.0).abs() < 1e-12 && e.stderr < 1e-12);
        assert!(estimate_expected_norm(&one, 1, 3, TOL, None).is_err());
    }

    #[test]
    fn two_by_two_ones_against_enumeration() {
        let a = SparsePattern::ones(2, 2);
        let mean_exact: f64 = (0u32..16)
            .map(|bits| {
                let sign = |k: u32| if bits >> k & 1 == 1 { 1.0 } else { -1.0 };
                let m = DenseMatrix::from_rows(&[vec![sign(0), sign(1)], vec![sign(2), sign(3)]]);
                operator_norm_oracle(&m).unwrap()
            })
            .sum::<f64>()
            / 16.0;
        assert!((mean_exact - (2.0 + 2f64.sqrt()) / 2.0).abs() < 1e-12);
        let e = estimate_expected_norm(&a, 4000, 11, TOL, None).unwrap();
        assert!((e.mean - mean_exact).abs() <= 3.0 * e.stderr, "{e:?}");
        assert_eq!(e.floor_violations, 0);
    }

    #[test]
    fn reproducible_across_thread_counts() {
        let a = random_pattern(30, 0.2, 5).unwrap();
        let one = estimate_expected_norm(&a, 64, 9, TOL, Some(1)).unwrap();
        let four = estimate_expected_norm(&a, 64, 9, TOL, Some(4)).unwrap();
        assert_eq!(one, four);
        assert_eq!(one.mean.to_bits(), four.mean.to_bits());
        assert_ne!(one, estimate_expected_norm(&a, 64, 10, TOL, Some(4)).unwrap());
    }

    #[test]
    fn negation_is_exact() {
        let a = random_pattern(12, 0.4, 8).unwrap();
        let e1 = estimate_expected_norm(&a, 40, 1, TOL, None).unwrap();
        let e2 = estimate_expected_norm(&a.scaled(-1.0), 40, 1, TOL, None).unwrap();
        assert_eq!(e1.mean.to_bits(), e2.mean.to_bits());
        assert_eq!(e1.stderr.to_bits(), e2.stderr.to_bits());
    }

    #[test]
    fn transpose_agrees_statistically() {
        let a = random_pattern(10, 0.3, 2).unwrap();
        let e1 = estimate_expected_norm(&a, 2000, 4, TOL, None).unwrap();
        let e2 = estimate_expected_norm(&a.transpose(), 2000, 4, TOL, None).unwrap();
        assert!((e1.mean - e2.mean).abs() <= SLACK_STDERRS * (e1.stderr + e2.stderr));
    }

    #[test]
    fn contraction_examples() {
        let b = random_pattern(15, 0.3, 21).unwrap();
        let half = check_contraction(&b.scaled(0.5), &b, 200, 2, TOL, None).unwrap();
        assert!(half.pass);
        assert_eq!(half.components[0].mean, 0.5 * half.components[1].mean);
        let same = check_contraction(&b, &b, 200, 2, TOL, None).unwrap();
        assert!(same.pass && same.mean == 0.0);
        let big = b.scaled(2.0);
        assert!(check_contraction(&big, &b, 200, 2, TOL, None).is_err());
        let d = 3;
        let cube = hypercube_in_torus(4, d).unwrap();
        let tor = torus(4, d).unwrap().adjacency();
        let r = check_contraction(&cube, &tor, 300, 7, TOL, None).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn shift_invariance_examples() {
        let spec = CirculantSpec::padded(4, &[0.3, -1.0, 0.5]).unwrap();
        let s = [0.5; 4];
        let r = check_shift_invariance(&spec, &s, &s, 3.0, Some(&[0, 1, 2, 3]), 0, 1).unwrap();
        assert!(r.pass && r.mean == 0.0 && r.samples == 0);
        let s = [0.1, -0.7, 0.2, 0.4];
        let t = [0.6, 0.0, -0.3, 0.5];
        let r = check_shift_invariance(&spec, &s, &t, 2.5, Some(&[0, 1, 2, 3]), 0, 1).unwrap();
        assert!(r.pass && r.mean <= 1e-12, "{r:?}");
        let spec = CirculantSpec::padded(16, &[1.0, 0.5, -0.25]).unwrap();
        let mut rng = stream(4, Domain::Corpus, 0);
        let mut v = |_| -> Vec<f64> {
            let x: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let n = x.iter().map(|y| y * y).sum::<f64>().sqrt();
            x.into_iter().map(|y| y / n).collect()
        };
        let (s, t) = (v(0), v(1));
        let r = check_shift_invariance(&spec, &s, &t, 3.0, None, 4000, 8).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(check_shift_invariance(&spec, &[1.0; 16], &t, 3.0, None, 100, 8).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn floor_holds_per_realization(n in 1usize..12, density in 0.1f64..1.0, seed in any::<u64>()) {
            let a = random_pattern(n, density, seed).unwrap();
            let e = estimate_expected_norm(&a, 20, seed, TOL, None).unwrap();
            prop_assert_eq!(e.floor_violations, 0);
            prop_assert!(e.min >= e.floor - FLOOR_EPS);
        }

        #[test]
        fn symmetric_patterns_are_transpose_exact(n in 2usize..9, seed in any::<u64>()) {
            let a = random_pattern(n, 0.5, seed).unwrap();
            let sym = a.map_weights(|e| e.weight.abs());
            let sym = SparsePattern::new(n, n, sym.entries().iter().flat_map(|e| [(e.row, e.col), (e.col, e.row)]).collect::<std::collections::BTreeSet<_>>().into_iter().map(|(i, j)| (i, j, 1.0))).unwrap();
            let e1 = estimate_expected_norm(&sym, 10, seed, TOL, None).unwrap();
            let e2 = estimate_expected_norm(&sym.transpose(), 10, seed, TOL, None).unwrap();
            prop_assert_eq!(e1, e2);
        }
    }
}
