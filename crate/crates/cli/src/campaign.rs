use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use rsnorm_core::bounds::{
    circulant_bounds, gaussian_hly_bound, graph_np_bounds, hypercube_np_bounds, rad_order, row_col_terms, seginer_bound,
    theorem_lower_rhs, torus_expected_norm_bounds, torus_reduction_factor, GraphBoundsConfig, LowerRhsConfig,
};
use rsnorm_core::decomp::{block_cover, composed_upper_bound};
use rsnorm_core::montecarlo::{estimate_expected_norm, NORM_MAX_ITER};
use rsnorm_core::patterns::{BuiltPattern, PatternSpec};
use rsnorm_core::rademacher::{estimate_rad_norm, RadNormConfig};
use rsnorm_core::rng::GENERATOR_ID;
use rsnorm_core::{operator_norm, Error};

use crate::report::{Format, Record};
use crate::verify::run_checks;
use crate::{CliError, CliResult};

/// `theorem_lower_rhs` runs by default only up to this dimension.
pub const LOWER_RHS_AUTO_MAX_N: usize = 16;

/// Knobs shared by every quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub seed: u64,
    pub samples: usize,
    pub threads: Option<usize>,
    pub tol: f64,
    pub timing: bool,
    /// Moment order for `radnorm` and graph bounds; defaults to `max(1, ln(n+1))`.
    pub p: Option<f64>,
    /// Force `theorem_lower_rhs` above [`LOWER_RHS_AUTO_MAX_N`].
    pub lower_rhs: bool,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            seed: 0,
            samples: 1000,
            threads: None,
            tol: 1e-6,
            timing: false,
            p: None,
            lower_rhs: false,
        }
    }
}

impl Settings {
    pub fn rad_config(&self) -> RadNormConfig {
        RadNormConfig {
            seed: self.seed,
            samples: self.samples,
            ..RadNormConfig::default()
        }
    }

    fn order(&self, n: usize) -> f64 {
        self.p.unwrap_or_else(|| rad_order(n))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Quantity {
    Norm,
    ExpectedNorm,
    RadNorm(Option<f64>),
    Bounds,
    Decompose,
    Verify,
}

impl FromStr for Quantity {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        let s = s.trim();
        let (name, arg) = s.split_once(':').map_or((s, None), |(a, b)| (a, Some(b)));
        let q = match (name, arg) {
            ("norm", None) => Quantity::Norm,
            ("expected-norm", None) => Quantity::ExpectedNorm,
            ("bounds", None) => Quantity::Bounds,
            ("decompose", None) => Quantity::Decompose,
            ("verify", None) => Quantity::Verify,
            ("radnorm", None) => Quantity::RadNorm(None),
            ("radnorm", Some(a)) => {
                let v = a.strip_prefix("p=").unwrap_or(a);
                let p: f64 = v
                    .parse()
                    .map_err(|_| CliError::Usage(format!("bad moment order in quantity '{s}'")))?;
                Quantity::RadNorm(Some(p))
            }
            _ => return Err(CliError::Usage(format!("unknown quantity '{s}'"))),
        };
        Ok(q)
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Quantity::Norm => write!(f, "norm"),
            Quantity::ExpectedNorm => write!(f, "expected-norm"),
            Quantity::RadNorm(None) => write!(f, "radnorm"),
            Quantity::RadNorm(Some(p)) => write!(f, "radnorm:p={p}"),
            Quantity::Bounds => write!(f, "bounds"),
            Quantity::Decompose => write!(f, "decompose"),
            Quantity::Verify => write!(f, "verify"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignItem {
    pub pattern: PatternSpec,
    pub quantities: Vec<Quantity>,
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignConfig {
    pub settings: Settings,
    pub format: Format,
    pub out: Option<PathBuf>,
    pub items: Vec<CampaignItem>,
}

#[derive(Default)]
struct Pending {
    pattern: Option<PatternSpec>,
    quantities: Vec<Quantity>,
    seed: Option<u64>,
    samples: Option<usize>,
    p: Option<f64>,
}

impl Pending {
    fn finish(self) -> CliResult<CampaignItem> {
        let pattern = self.pattern.ok_or_else(|| CliError::Usage("[item] without a pattern".into()))?;
        if self.quantities.is_empty() {
            return Err(CliError::Usage(format!("[item] {pattern} lists no quantity")));
        }
        Ok(CampaignItem {
            pattern,
            quantities: self.quantities,
            seed: self.seed,
            samples: self.samples,
            p: self.p,
        })
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> CliResult<T> {
    value
        .parse()
        .map_err(|_| CliError::Usage(format!("bad value '{value}' for '{key}'")))
}

impl CampaignConfig {
    /// Flat `key = value` text. Keys before the first `[item]` are global
    /// (`seed`, `samples`, `tol`, `threads`, `format`, `out`, `timing`, `p`);
    /// each `[item]` takes `pattern`, `quantity` (comma list) and optional
    /// `seed`, `samples`, `p` overrides. `#` starts a comment.
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut cfg = CampaignConfig {
            settings: Settings::default(),
            format: Format::Json,
            out: None,
            items: Vec::new(),
        };
        let mut current: Option<Pending> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if line == "[item]" {
                if let Some(done) = current.replace(Pending::default()) {
                    cfg.items.push(done.finish()?);
                }
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| CliError::Usage(format!("line {}: expected key = value", lineno + 1)))?;
            match (&mut current, key) {
                (Some(item), "pattern") => item.pattern = Some(value.parse()?),
                (Some(item), "quantity" | "quantities") => {
                    for q in value.split(',').filter(|q| !q.trim().is_empty()) {
                        item.quantities.push(q.parse()?);
                    }
                }
                (Some(item), "seed") => item.seed = Some(parse_value(key, value)?),
                (Some(item), "samples") => item.samples = Some(parse_value(key, value)?),
                (Some(item), "p") => item.p = Some(parse_value(key, value)?),
                (None, "seed") => cfg.settings.seed = parse_value(key, value)?,
                (None, "samples") => cfg.settings.samples = parse_value(key, value)?,
                (None, "tol") => cfg.settings.tol = parse_value(key, value)?,
                (None, "threads") => cfg.settings.threads = Some(parse_value(key, value)?),
                (None, "timing") => cfg.settings.timing = parse_value(key, value)?,
                (None, "p") => cfg.settings.p = Some(parse_value(key, value)?),
                (None, "format") => cfg.format = value.parse().map_err(CliError::Usage)?,
                (None, "out") => cfg.out = Some(PathBuf::from(value)),
                _ => return Err(CliError::Usage(format!("line {}: unknown key '{key}'", lineno + 1))),
            }
        }
        if let Some(done) = current {
            cfg.items.push(done.finish()?);
        }
        if cfg.items.is_empty() {
            return Err(CliError::Usage("campaign has no [item] sections".into()));
        }
        Ok(cfg)
    }
}

fn needs_samples(q: &Quantity) -> bool {
    matches!(q, Quantity::ExpectedNorm | Quantity::Verify)
}

/// Evaluates every item and quantity, concurrently, in a pool of
/// `settings.threads` workers. Records come back in declaration order.
pub fn run_campaign(cfg: &CampaignConfig) -> CliResult<Vec<Record>> {
    let jobs: Vec<(PatternSpec, Quantity, Settings)> = cfg
        .items
        .iter()
        .flat_map(|item| {
            let mut s = cfg.settings.clone();
            s.seed = item.seed.unwrap_or(s.seed);
            s.samples = item.samples.unwrap_or(s.samples);
            s.p = item.p.or(s.p);
            item.quantities.iter().map(move |q| (item.pattern.clone(), q.clone(), s.clone()))
        })
        .collect();
    if let Some((_, q, _)) = jobs.iter().find(|(_, q, s)| needs_samples(q) && s.samples < 2) {
        return Err(CliError::Usage(format!("{q} needs samples >= 2")));
    }
    let work = || jobs.par_iter().map(|(p, q, s)| evaluate(p, q, s)).collect::<CliResult<Vec<_>>>();
    match cfg.settings.threads {
        None => work(),
        Some(0) => Err(CliError::Usage("threads must be positive".into())),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| CliError::Usage(format!("cannot build thread pool: {e}")))?
            .install(work),
    }
}

struct Outcome {
    value: f64,
    stderr: Option<f64>,
    pass: Option<bool>,
    failed: Vec<String>,
    samples: usize,
    detail: serde_json::Value,
}

impl Outcome {
    fn plain(value: f64, detail: serde_json::Value) -> Self {
        Self {
            value,
            stderr: None,
            pass: None,
            failed: Vec::new(),
            samples: 0,
            detail,
        }
    }
}

/// Evaluates one quantity on one pattern.
pub fn evaluate(pattern: &PatternSpec, q: &Quantity, s: &Settings) -> CliResult<Record> {
    let start = Instant::now();
    let built = pattern.build()?;
    let out = match q {
        Quantity::Norm => {
            let r = operator_norm(&built.matrix, s.tol, NORM_MAX_ITER, s.seed)?;
            Outcome::plain(r.value, serde_json::to_value(r)?)
        }
        Quantity::ExpectedNorm => {
            let e = estimate_expected_norm(&built.matrix, s.samples, s.seed, s.tol, None)?;
            let ok = e.floor_violations == 0;
            Outcome {
                value: e.mean,
                stderr: Some(e.stderr),
                pass: Some(ok),
                failed: if ok { vec![] } else { vec!["floor".into()] },
                samples: e.samples,
                detail: serde_json::to_value(e)?,
            }
        }
        Quantity::RadNorm(p) => {
            let p = p.unwrap_or_else(|| s.order(built.matrix.rows().max(built.matrix.cols())));
            let e = estimate_rad_norm(&built.matrix, p, &s.rad_config())?;
            Outcome {
                value: e.lower,
                stderr: Some(e.lower_stderr),
                pass: None,
                failed: vec![],
                samples: if e.exact { 0 } else { s.samples },
                detail: serde_json::to_value(e)?,
            }
        }
        Quantity::Bounds => bounds(pattern, &built, s)?,
        Quantity::Decompose => decompose(pattern, &built)?,
        Quantity::Verify => {
            let checks = run_checks(pattern, &built, s)?;
            let failed: Vec<String> = checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect();
            Outcome {
                value: (checks.len() - failed.len()) as f64,
                stderr: None,
                pass: Some(failed.is_empty()),
                failed,
                samples: s.samples,
                detail: serde_json::to_value(checks)?,
            }
        }
    };
    Ok(Record {
        quantity: q.to_string(),
        pattern: pattern.to_string(),
        value: out.value,
        stderr: out.stderr,
        pass: out.pass,
        failed: out.failed,
        seed: s.seed,
        samples: out.samples,
        generator: GENERATOR_ID.into(),
        runtime_ms: s.timing.then(|| start.elapsed().as_millis() as u64),
        detail: out.detail,
    })
}

fn bounds(pattern: &PatternSpec, built: &BuiltPattern, s: &Settings) -> CliResult<Outcome> {
    let a = &built.matrix;
    let n = a.rows().max(a.cols());
    let p = s.order(n);
    let (max_row_l2, max_col_l2) = row_col_terms(a);
    let mut detail = json!({
        "order": p,
        "row_col": { "max_row_l2": max_row_l2, "max_col_l2": max_col_l2 },
        "seginer": seginer_bound(a),
        "gaussian": gaussian_hly_bound(a).ok(),
    });
    let mut headline: Option<f64> = None;
    let mut failed = Vec::new();
    let mut checked = false;
    if let Some(spec) = &built.circulant {
        let cb = circulant_bounds(spec, &s.rad_config())?;
        headline = Some(cb.lower);
        detail["circulant"] = serde_json::to_value(&cb)?;
        if spec.max_abs() > 0.0 {
            detail["composed"] = serde_json::to_value(composed_upper_bound(spec, &s.rad_config())?)?;
        }
    }
    if let PatternSpec::Hypercube { d } = pattern {
        let h = hypercube_np_bounds(*d, p)?;
        checked = true;
        if h.lower > h.upper + 1e-12 {
            failed.push("hypercube-np-order".into());
        }
        headline = headline.or(Some(h.lower));
        detail["hypercube_np"] = serde_json::to_value(h)?;
    }
    if let PatternSpec::Torus { m, d } = pattern {
        if *d >= 2 {
            let (lo, hi) = torus_expected_norm_bounds(*m, *d)?;
            detail["torus"] = json!({ "factor": torus_reduction_factor(*m)?, "lower": lo, "upper": hi });
        }
    }
    if let Some(g) = &built.graph {
        if p >= 1.0 {
            let gb = graph_np_bounds(g, p, &GraphBoundsConfig::default())?;
            checked = true;
            if gb.lower > gb.upper + 1e-12 {
                failed.push("graph-np-order".into());
            }
            headline = headline.or(Some(gb.lower));
            detail["graph_np"] = serde_json::to_value(gb)?;
        }
    }
    if n <= LOWER_RHS_AUTO_MAX_N || s.lower_rhs {
        let cfg = LowerRhsConfig {
            rad: RadNormConfig {
                seed: s.seed,
                ..LowerRhsConfig::default().rad
            },
            ..LowerRhsConfig::default()
        };
        let b = theorem_lower_rhs(a, &cfg)?;
        headline = headline.or(Some(b.total));
        detail["lower_rhs"] = serde_json::to_value(b)?;
    }
    Ok(Outcome {
        value: headline.unwrap_or(max_row_l2.max(max_col_l2)),
        stderr: detail["circulant"]["rad_norm_stderr"].as_f64(),
        pass: checked.then_some(failed.is_empty()),
        failed,
        samples: 0,
        detail,
    })
}

fn decompose(pattern: &PatternSpec, built: &BuiltPattern) -> CliResult<Outcome> {
    let spec = built
        .offsets
        .as_ref()
        .ok_or_else(|| CliError::Usage(format!("decompose needs a circulant graph pattern with offsets, got {pattern}")))?;
    match block_cover(spec) {
        Ok(cover) => {
            let c = &cover.certificate;
            let failed: Vec<String> = [
                ("cover-blocks", c.blocks_ok),
                ("cover-subgraph", c.subgraph_ok),
                ("cover-symmetric", c.symmetric_ok),
                ("cover-entrywise", c.entrywise_ok),
            ]
            .into_iter()
            .filter(|x| !x.1)
            .map(|x| x.0.to_string())
            .collect();
            Ok(Outcome {
                value: c.min_coverage_ratio,
                stderr: None,
                pass: Some(failed.is_empty()),
                failed,
                samples: 0,
                detail: json!({ "certificate": c, "sequence": cover.sequence }),
            })
        }
        Err(Error::Certificate { invariant, detail }) => Ok(Outcome {
            value: 0.0,
            stderr: None,
            pass: Some(false),
            failed: vec![invariant.clone()],
            samples: 0,
            detail: json!({ "invariant": invariant, "detail": detail }),
        }),
        Err(e) => Err(e.into()),
    }
}
