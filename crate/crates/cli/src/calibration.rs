//! Ratio envelopes: measured `[min, max]` of one quantity over another on a
//! fixed corpus. They stand in for unnamed universal constants. `rsnorm
//! calibrate` writes them to `data/calibration.json`; the acceptance suite
//! recomputes them and fails if an envelope widens by more than 5%.

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use rsnorm_core::bounds::{circulant_bounds, hypercube_np_bounds, seginer_bound};
use rsnorm_core::montecarlo::estimate_expected_norm;
use rsnorm_core::patterns::{hypercube, PatternSpec};
use rsnorm_core::rademacher::{estimate_rad_norm, exact_lp_radsum, hitczenko_lp, RadNormConfig};
use rsnorm_core::rng::{stream, Domain, GENERATOR_ID};

use crate::{CliError, CliResult};

/// Checked-in calibration file.
pub const CALIBRATION_PATH: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data/calibration.json");
/// Allowed relative widening of an envelope before the regression fails.
pub const REGRESSION_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioEnvelope {
    pub name: String,
    pub numerator: String,
    pub denominator: String,
    pub corpus: String,
    pub min: f64,
    pub max: f64,
    pub count: usize,
    /// Instances dropped for a zero or non-finite ratio.
    pub skipped: usize,
}

/// Envelope of `num / den` over `pairs`; zero denominators are skipped and
/// counted. Fails on an empty corpus.
pub fn ratio_envelope(name: &str, numerator: &str, denominator: &str, corpus: &str, pairs: &[(f64, f64)]) -> CliResult<RatioEnvelope> {
    let ratios: Vec<f64> = pairs
        .iter()
        .filter(|(_, d)| *d != 0.0)
        .map(|(n, d)| n / d)
        .filter(|r| r.is_finite())
        .collect();
    if ratios.is_empty() {
        return Err(CliError::Usage(format!("envelope {name}: corpus '{corpus}' produced no usable ratio")));
    }
    Ok(RatioEnvelope {
        name: name.into(),
        numerator: numerator.into(),
        denominator: denominator.into(),
        corpus: corpus.into(),
        min: ratios.iter().copied().fold(f64::INFINITY, f64::min),
        max: ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        count: ratios.len(),
        skipped: pairs.len() - ratios.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationParams {
    pub seed: u64,
    /// Monte Carlo samples for expected norms and Rademacher estimates.
    pub samples: usize,
    pub tol: f64,
}

impl Default for CalibrationParams {
    fn default() -> Self {
        Self {
            seed: 20240611,
            samples: 400,
            tol: 1e-6,
        }
    }
}

impl CalibrationParams {
    fn rad(&self) -> RadNormConfig {
        RadNormConfig {
            seed: self.seed,
            samples: self.samples,
            ..RadNormConfig::default()
        }
    }
}

/// `ln ln`-sandwich corpus: 0-1 circulant graphs and weighted bands.
pub fn circulant_corpus() -> Vec<PatternSpec> {
    let mut out = Vec::new();
    for n in [16usize, 64, 256] {
        let mut sets = vec![vec![1], vec![1, 2], vec![1, 3, 7], vec![1, 2, 4, 8]];
        if n >= 64 {
            sets.push(vec![3, 10, 17, 29, 31]);
        }
        out.extend(sets.into_iter().map(|offsets| PatternSpec::Circulant { n, offsets }));
        out.push(PatternSpec::CirculantBand {
            n,
            band: vec![1.0, -0.5, 0.25, 0.0, 0.8],
        });
        out.push(PatternSpec::CirculantBand {
            n,
            band: (0..8).map(|j| 1.0 / (j as f64 + 1.0)).collect(),
        });
    }
    out
}

/// General-pattern corpus for the Seginer envelope.
pub fn general_corpus() -> Vec<PatternSpec> {
    let mut out = Vec::new();
    for n in [8usize, 16, 32, 64, 128] {
        for density in [0.05, 0.2, 0.5] {
            for seed in [1u64, 2] {
                out.push(PatternSpec::Random { n, density, seed });
            }
        }
    }
    out
}

/// One point of the hypercube window: lower estimate of `N_{ε,p}(Z_2^d)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypercubePoint {
    pub d: usize,
    pub p: f64,
    pub lower: f64,
    pub stderr: f64,
}

impl HypercubePoint {
    pub fn ratio(&self) -> f64 {
        self.lower / self.p.sqrt()
    }

    /// Inside `[√(1/8), 1]` up to `3·stderr/√p`.
    pub fn in_a_priori_window(&self) -> bool {
        let slack = 3.0 * self.stderr / self.p.sqrt();
        let r = self.ratio();
        r >= (1.0f64 / 8.0).sqrt() - slack && r <= 1.0 + slack
    }
}

/// Integer `p` in `2..=d` for `d` in `2..=max_d`.
pub fn hypercube_points(max_d: usize, params: &CalibrationParams) -> CliResult<Vec<HypercubePoint>> {
    let grid: Vec<(usize, usize)> = (2..=max_d).flat_map(|d| (2..=d).map(move |p| (d, p))).collect();
    grid.par_iter()
        .map(|&(d, p)| {
            let a = hypercube(d)?.adjacency();
            let e = estimate_rad_norm(&a, p as f64, &params.rad())?;
            Ok(HypercubePoint {
                d,
                p: p as f64,
                lower: e.lower,
                stderr: e.lower_stderr,
            })
        })
        .collect::<rsnorm_core::Result<_>>()
        .map_err(Into::into)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CirculantPoint {
    pub pattern: String,
    pub mc: f64,
    pub mc_stderr: f64,
    pub lower_shape: f64,
    pub upper_shape: f64,
}

pub fn circulant_points(params: &CalibrationParams) -> CliResult<Vec<CirculantPoint>> {
    circulant_corpus()
        .par_iter()
        .map(|spec| {
            let built = spec.build()?;
            let band = built.circulant.expect("circulant corpus");
            let b = circulant_bounds(&band, &params.rad())?;
            let e = estimate_expected_norm(&built.matrix, params.samples, params.seed, params.tol, None)?;
            Ok(CirculantPoint {
                pattern: spec.to_string(),
                mc: e.mean,
                mc_stderr: e.stderr,
                lower_shape: b.lower,
                upper_shape: b.upper,
            })
        })
        .collect::<rsnorm_core::Result<_>>()
        .map_err(Into::into)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralPoint {
    pub pattern: String,
    pub mc: f64,
    pub mc_stderr: f64,
    pub floor: f64,
    pub seginer: f64,
}

pub fn general_points(params: &CalibrationParams) -> CliResult<Vec<GeneralPoint>> {
    general_corpus()
        .par_iter()
        .map(|spec| {
            let a = spec.build()?.matrix;
            let e = estimate_expected_norm(&a, params.samples, params.seed, params.tol, None)?;
            Ok(GeneralPoint {
                pattern: spec.to_string(),
                mc: e.mean,
                mc_stderr: e.stderr,
                floor: e.floor,
                seginer: seginer_bound(&a),
            })
        })
        .collect::<rsnorm_core::Result<_>>()
        .map_err(Into::into)
}

/// Exact `‖Σc_kε_k‖_p` over the head-plus-tail functional on seeded
/// coefficient vectors of length ≤ 16.
fn hitczenko_pairs(seed: u64) -> CliResult<Vec<(f64, f64)>> {
    let mut pairs = Vec::new();
    for case in 0..48u64 {
        let mut rng = stream(seed, Domain::Corpus, case);
        let len = rng.gen_range(1..=16usize);
        let c: Vec<f64> = match case % 3 {
            0 => (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            1 => vec![1.0; len],
            _ => (0..len).map(|k| 0.6f64.powi(k as i32)).collect(),
        };
        for p in [1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0] {
            pairs.push((exact_lp_radsum(&c, p)?, hitczenko_lp(&c, p)));
        }
    }
    Ok(pairs)
}

type Pairs = Vec<(f64, f64)>;

/// Ratios of the regime shapes just right and just left of `p = d` and
/// `p = d·2^d`, for `d = 2..=12`: `(lower ratios, upper ratios)`.
fn regime_boundary_pairs() -> CliResult<(Pairs, Pairs)> {
    let (mut lower, mut upper) = (Vec::new(), Vec::new());
    for d in 2..=12usize {
        for edge in [d as f64, d as f64 * 2f64.powi(d as i32)] {
            let left = hypercube_np_bounds(d, edge * (1.0 - 1e-12))?;
            let right = hypercube_np_bounds(d, edge * (1.0 + 1e-12))?;
            lower.push((right.lower, left.lower));
            upper.push((right.upper, left.upper));
        }
    }
    Ok((lower, upper))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// Command that regenerates the file.
    pub command: String,
    pub generator: String,
    pub params: CalibrationParams,
    pub envelopes: Vec<RatioEnvelope>,
}

impl Calibration {
    pub fn get(&self, name: &str) -> Option<&RatioEnvelope> {
        self.envelopes.iter().find(|e| e.name == name)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

/// Computes every envelope from scratch.
/// Envelopes together with the per-instance points they summarize.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationRun {
    pub circulant: Vec<CirculantPoint>,
    pub general: Vec<GeneralPoint>,
    pub hypercube: Vec<HypercubePoint>,
    pub calibration: Calibration,
}

pub fn calibrate(params: &CalibrationParams) -> CliResult<Calibration> {
    Ok(calibrate_run(params)?.calibration)
}

pub fn calibrate_run(params: &CalibrationParams) -> CliResult<CalibrationRun> {
    let circ = circulant_points(params)?;
    let general = general_points(params)?;
    let cube = hypercube_points(10, params)?;
    let (bl, bu) = regime_boundary_pairs()?;
    let pairs = |f: &dyn Fn(&CirculantPoint) -> (f64, f64)| circ.iter().map(f).collect::<Vec<_>>();
    let envelopes = vec![
        ratio_envelope(
            "circulant/mc-over-lower",
            "E|eps.A| (MC)",
            "sqrt(sum b^2) + R",
            "circulant_corpus",
            &pairs(&|c| (c.mc, c.lower_shape)),
        )?,
        ratio_envelope(
            "circulant/mc-over-upper",
            "E|eps.A| (MC)",
            "sqrt(lnln) sqrt(sum b^2) + lnln R",
            "circulant_corpus",
            &pairs(&|c| (c.mc, c.upper_shape)),
        )?,
        ratio_envelope(
            "general/mc-over-seginer",
            "E|eps.A| (MC)",
            "(ln(n+1))^(1/4) (row + col)",
            "general_corpus",
            &general.iter().map(|g| (g.mc, g.seginer)).collect::<Vec<_>>(),
        )?,
        ratio_envelope(
            "general/floor-over-mc",
            "max(row, col)",
            "E|eps.A| (MC)",
            "general_corpus",
            &general.iter().map(|g| (g.floor, g.mc)).collect::<Vec<_>>(),
        )?,
        ratio_envelope(
            "hitczenko/exact-over-functional",
            "|sum c eps|_p (exact)",
            "head + sqrt(p) tail",
            "48 seeded vectors, len <= 16, p in {1,1.5,2,3,4,6,8,12}",
            &hitczenko_pairs(params.seed)?,
        )?,
        ratio_envelope(
            "hypercube/lower-over-sqrt-p",
            "N_{eps,p}(Z_2^d) lower estimate",
            "sqrt(p)",
            "d in 2..=10, integer p in 2..=d",
            &cube.iter().map(|c| (c.lower, c.p.sqrt())).collect::<Vec<_>>(),
        )?,
        ratio_envelope(
            "hypercube/boundary-lower",
            "regime lower shape right of boundary",
            "regime lower shape left of boundary",
            "d in 2..=12, p in {d, d 2^d}",
            &bl,
        )?,
        ratio_envelope(
            "hypercube/boundary-upper",
            "regime upper shape right of boundary",
            "regime upper shape left of boundary",
            "d in 2..=12, p in {d, d 2^d}",
            &bu,
        )?,
    ];
    let calibration = Calibration {
        command: format!(
            "rsnorm calibrate --seed {} --samples {} --tol {:e} --out crates/cli/data/calibration.json",
            params.seed, params.samples, params.tol
        ),
        generator: GENERATOR_ID.into(),
        params: params.clone(),
        envelopes,
    };
    Ok(CalibrationRun {
        circulant: circ,
        general,
        hypercube: cube,
        calibration,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionCheck {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

/// Every reference envelope must exist in `current` with
/// `min ≥ (1 − tol)·ref.min` and `max ≤ (1 + tol)·ref.max`.
pub fn regression(current: &Calibration, reference: &Calibration, tol: f64) -> Vec<RegressionCheck> {
    reference
        .envelopes
        .iter()
        .map(|r| match current.get(&r.name) {
            None => RegressionCheck {
                name: r.name.clone(),
                pass: false,
                detail: "missing from current run".into(),
            },
            Some(c) => RegressionCheck {
                name: r.name.clone(),
                pass: c.min >= (1.0 - tol) * r.min && c.max <= (1.0 + tol) * r.max,
                detail: format!("current [{:.6}, {:.6}] vs reference [{:.6}, {:.6}]", c.min, c.max, r.min, r.max),
            },
        })
        .collect()
}
