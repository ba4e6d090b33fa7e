//! Invariant suites run by `rsnorm verify`. Each check is named after the
//! invariant it certifies; a failing check names the invariant in the report.

use serde::{Deserialize, Serialize};

use rsnorm_core::bounds::{graph_np_bounds, harper_sampled_check, rad_order, GraphBoundsConfig};
use rsnorm_core::decomp::{block_cover, check_cube_identities, dyadic_split, good_sequence, CubeFamily};
use rsnorm_core::linalg::{operator_norm_oracle, ORACLE_MAX_DIM};
use rsnorm_core::montecarlo::{check_contraction, estimate_expected_norm};
use rsnorm_core::patterns::{hypercube_in_torus, torus_as_circulant_bands, BuiltPattern, PatternSpec};
use rsnorm_core::rademacher::{combinatorial_m, exact_lp_radsum, proof_witness, MMode, EXACT_MAX_LEN};
use rsnorm_core::{operator_norm, Error};

use crate::campaign::Settings;
use crate::CliResult;

/// Harper subsets sampled per hypercube.
pub const HARPER_SUBSETS: usize = 200;
/// Contraction check only below this many torus vertices.
pub const CONTRACTION_MAX_VERTICES: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn check(name: &str, pass: bool, detail: impl Into<String>) -> Check {
    Check {
        name: name.into(),
        pass,
        detail: detail.into(),
    }
}

/// Turns a certificate error into a failed check; other errors propagate.
fn certified(name: &str, r: rsnorm_core::Result<String>) -> CliResult<Check> {
    match r {
        Ok(detail) => Ok(check(name, true, detail)),
        Err(Error::Certificate { invariant, detail }) => Ok(check(&invariant, false, detail)),
        Err(e) => Err(e.into()),
    }
}

/// Every check applicable to the pattern, in a fixed order.
pub fn run_checks(pattern: &PatternSpec, built: &BuiltPattern, s: &Settings) -> CliResult<Vec<Check>> {
    let a = &built.matrix;
    let mut out = Vec::new();
    if a.nnz() > 0 && s.samples >= 2 {
        let e = estimate_expected_norm(a, s.samples, s.seed, s.tol, None)?;
        out.push(check(
            "floor",
            e.floor_violations == 0,
            format!("{} of {} realizations below {:.6}, min {:.6}", e.floor_violations, e.samples, e.floor, e.min),
        ));
    }
    if a.rows().max(a.cols()) <= ORACLE_MAX_DIM && a.nnz() > 0 {
        let exact = operator_norm_oracle(&a.to_dense())?;
        let got = operator_norm(a, 1e-12, 10_000, s.seed)?.value;
        let rel = (got - exact).abs() / exact.max(f64::MIN_POSITIVE);
        out.push(check("operator-norm-oracle", rel <= 1e-8, format!("relative error {rel:.3e}")));
    }
    if a.nnz() > 0 && a.nnz() <= EXACT_MAX_LEN {
        let mut worst = f64::INFINITY;
        for p in [1.0, 2.0, 4.0, 8.0] {
            let m = combinatorial_m(a, p, MMode::Exact)?;
            let w = proof_witness(a, &m.subset)?;
            let lp = exact_lp_radsum(&w.coefficients(a), p)?;
            worst = worst.min(lp - 0.5 * m.value);
        }
        out.push(check("half-constant", worst >= -1e-12, format!("min L_p - M/2 = {worst:.3e}")));
    }
    if let Some(spec) = &built.offsets {
        let family = CubeFamily::new(spec)?;
        out.push(certified("cube-identities", check_cube_identities(&family).map(|_| format!("m = {}", family.m())))?);
        out.push(certified(
            "good-sequence",
            good_sequence(spec).and_then(|g| g.certify(&family).map(|_| format!("s = {}, covered edges = {}", g.s(), g.covered_edges))),
        )?);
        match block_cover(spec) {
            Ok(cover) => {
                let c = &cover.certificate;
                for (name, ok) in [
                    ("cover-blocks", c.blocks_ok),
                    ("cover-subgraph", c.subgraph_ok),
                    ("cover-symmetric", c.symmetric_ok),
                    ("cover-entrywise", c.entrywise_ok),
                ] {
                    out.push(check(name, ok, format!("min coverage {}/{}", c.min_coverage, c.n_matrices)));
                }
            }
            Err(e) => out.push(certified("block-cover", Err(e))?),
        }
    }
    if let Some(spec) = &built.circulant {
        if spec.max_abs() > 0.0 {
            let split = dyadic_split(spec)?;
            let exact = split.reconstruct().iter().zip(spec.band()).all(|(r, b)| *r == b / split.scale);
            let windows = split.levels.iter().enumerate().all(|(k, level)| {
                level.iter().filter(|v| **v != 0.0).all(|v| {
                    let x = v.abs();
                    if k == 0 {
                        x <= split.thresholds[split.k0]
                    } else {
                        x > (-(k as f64)).exp() && x <= (-(k as f64) + 1.0).exp()
                    }
                })
            });
            out.push(check("dyadic-reconstruct", exact, format!("{} levels", split.levels.len())));
            out.push(check("dyadic-windows", windows, format!("k0 = {}", split.k0)));
        }
    }
    match pattern {
        PatternSpec::Hypercube { d } if *d <= 16 => {
            let r = harper_sampled_check(*d, HARPER_SUBSETS, s.seed)?;
            out.push(check(
                "harper",
                r.violations == 0,
                format!("{} subsets, {} violations, {} tight", r.checked, r.violations, r.tight),
            ));
        }
        PatternSpec::Torus { m, d } if a.rows() <= CONTRACTION_MAX_VERTICES && s.samples >= 2 => {
            let cube = hypercube_in_torus(*m, *d)?;
            let r = check_contraction(&cube, a, s.samples, s.seed, s.tol, None)?;
            out.push(check(
                "contraction",
                r.pass,
                format!("mean difference {:.6} vs slack {:.6}", r.mean, r.slack),
            ));
        }
        PatternSpec::BandGraph { m, d } => {
            let ok = torus_as_circulant_bands(*m, *d)?.torus_edges_contained()?;
            out.push(check("torus-contained", ok, "every torus edge lies in a band"));
        }
        _ => {}
    }
    if let Some(g) = &built.graph {
        let p = s.p.unwrap_or_else(|| rad_order(g.vertex_count()));
        let b = graph_np_bounds(g, p, &GraphBoundsConfig::default())?;
        out.push(check(
            "graph-np-order",
            b.lower <= b.upper + 1e-12,
            format!("lower {:.6} <= upper {:.6} at p = {p:.4}", b.lower, b.upper),
        ));
    }
    Ok(out)
}
