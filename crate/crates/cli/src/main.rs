use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rsnorm_cli::calibration::{calibrate, CalibrationParams};
use rsnorm_cli::{render, run_campaign, CampaignConfig, CampaignItem, CliError, CliResult, Format, Quantity, Record, Settings};
use rsnorm_core::decomp::block_cover;
use rsnorm_core::patterns::PatternSpec;

/// Operator norms of random sign matrices: estimators, bounds and certificates.
#[derive(Parser)]
#[command(name = "rsnorm", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Root seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Monte Carlo samples.
    #[arg(long, global = true, default_value_t = 1000)]
    samples: usize,
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Relative residual tolerance of the norm iteration.
    #[arg(long, global = true, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Add runtime_ms to records (makes output run-dependent).
    #[arg(long, global = true)]
    timing: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Print a pattern as JSON, or with `--format csv` as `rows cols nnz` followed by `i j w` lines.
    Gen { pattern: PatternSpec },
    /// Operator norm, or with --expected the Monte Carlo mean of ‖ε·A‖.
    Norm {
        pattern: PatternSpec,
        #[arg(long)]
        expected: bool,
    },
    /// Lower estimate of ‖A‖_{ε,p}.
    Radnorm {
        pattern: PatternSpec,
        #[arg(long)]
        p: Option<f64>,
    },
    /// All applicable bound evaluators.
    Bounds {
        pattern: PatternSpec,
        #[arg(long)]
        p: Option<f64>,
        /// Evaluate the row + col + γ lower bound even for large patterns.
        #[arg(long)]
        lower_rhs: bool,
    },
    /// Block cover of a circulant graph with its certificate.
    Decompose {
        pattern: PatternSpec,
        /// Also write B_000.txt, … and certificate.json into this directory.
        #[arg(long)]
        dir: Option<PathBuf>,
    },
    /// Run every invariant check applicable to the pattern.
    Verify {
        pattern: PatternSpec,
        #[arg(long)]
        p: Option<f64>,
    },
    /// Recompute the ratio envelopes and write the calibration file.
    Calibrate,
    /// Run a campaign from a config file or a pattern plus --quantity list.
    Run {
        pattern: Option<PatternSpec>,
        #[arg(long = "quantity", value_delimiter = ',')]
        quantities: Vec<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        p: Option<f64>,
    },
}

fn settings(g: &Global) -> Settings {
    Settings {
        seed: g.seed,
        samples: g.samples,
        threads: g.threads,
        tol: g.tol,
        timing: g.timing,
        ..Settings::default()
    }
}

fn emit(text: &str, out: Option<&PathBuf>) -> CliResult<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn single(g: &Global, pattern: PatternSpec, q: Quantity, s: Settings) -> CampaignConfig {
    CampaignConfig {
        settings: s,
        format: g.format,
        out: g.out.clone(),
        items: vec![CampaignItem {
            pattern,
            quantities: vec![q],
            seed: None,
            samples: None,
            p: None,
        }],
    }
}

/// Records plus the format and destination to write them with.
type Report = (Vec<Record>, Format, Option<PathBuf>);

fn execute(cli: Cli) -> CliResult<Option<Report>> {
    let g = &cli.global;
    let mut s = settings(g);
    let cfg = match cli.command {
        Command::Gen { pattern } => {
            let a = pattern.build()?.matrix;
            let text = match g.format {
                Format::Json => serde_json::to_string(&a)? + "\n",
                Format::Csv => a.to_text(),
            };
            emit(&text, g.out.as_ref())?;
            return Ok(None);
        }
        Command::Norm { pattern, expected } => {
            single(g, pattern, if expected { Quantity::ExpectedNorm } else { Quantity::Norm }, s)
        }
        Command::Radnorm { pattern, p } => single(g, pattern, Quantity::RadNorm(p), s),
        Command::Bounds { pattern, p, lower_rhs } => {
            s.p = p;
            s.lower_rhs = lower_rhs;
            single(g, pattern, Quantity::Bounds, s)
        }
        Command::Decompose { pattern, dir } => {
            if let Some(dir) = &dir {
                let spec = pattern
                    .build()?
                    .offsets
                    .ok_or_else(|| CliError::Usage(format!("decompose needs a circulant graph pattern with offsets, got {pattern}")))?;
                block_cover(&spec)?.write_dir(dir)?;
            }
            single(g, pattern, Quantity::Decompose, s)
        }
        Command::Verify { pattern, p } => {
            s.p = p;
            single(g, pattern, Quantity::Verify, s)
        }
        Command::Calibrate => {
            let params = CalibrationParams {
                seed: g.seed,
                samples: g.samples,
                tol: g.tol,
            };
            let cal = match g.threads {
                Some(t) => rayon::ThreadPoolBuilder::new()
                    .num_threads(t)
                    .build()
                    .map_err(|e| CliError::Usage(e.to_string()))?
                    .install(|| calibrate(&params))?,
                None => calibrate(&params)?,
            };
            let path = g.out.clone().unwrap_or_else(|| PathBuf::from("calibration.json"));
            cal.save(&path)?;
            eprintln!("wrote {} envelopes to {}", cal.envelopes.len(), path.display());
            return Ok(None);
        }
        Command::Run {
            pattern,
            quantities,
            config,
            p,
        } => match (config, pattern) {
            (Some(path), None) if quantities.is_empty() => {
                let mut cfg = CampaignConfig::parse(&std::fs::read_to_string(path)?)?;
                override_globals(&mut cfg, g);
                cfg
            }
            (None, Some(pattern)) if !quantities.is_empty() => {
                s.p = p;
                let quantities = quantities.iter().map(|q| q.parse()).collect::<CliResult<Vec<_>>>()?;
                CampaignConfig {
                    settings: s,
                    format: g.format,
                    out: g.out.clone(),
                    items: vec![CampaignItem {
                        pattern,
                        quantities,
                        seed: None,
                        samples: None,
                        p: None,
                    }],
                }
            }
            _ => return Err(CliError::Usage("run takes either --config FILE or a pattern with --quantity".into())),
        },
    };
    let records = run_campaign(&cfg)?;
    Ok(Some((records, cfg.format, cfg.out)))
}

/// Flags given explicitly on the command line win over the config file.
fn override_globals(cfg: &mut CampaignConfig, g: &Global) {
    let args: Vec<String> = std::env::args().collect();
    let given = |flag: &str| args.iter().any(|a| a == flag || a.starts_with(&format!("{flag}=")));
    if given("--seed") {
        cfg.settings.seed = g.seed;
    }
    if given("--samples") {
        cfg.settings.samples = g.samples;
    }
    if given("--threads") {
        cfg.settings.threads = g.threads;
    }
    if given("--tol") {
        cfg.settings.tol = g.tol;
    }
    if given("--format") {
        cfg.format = g.format;
    }
    if given("--out") {
        cfg.out = g.out.clone();
    }
    cfg.settings.timing |= g.timing;
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some((records, format, out))) => {
            let text = match render(&records, format) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(e.exit_code() as u8);
                }
            };
            if let Err(e) = emit(&text, out.as_ref()) {
                eprintln!("{e}");
                return ExitCode::from(e.exit_code() as u8);
            }
            let failed: Vec<String> = records
                .iter()
                .filter(|r| r.failed())
                .map(|r| format!("{} on {}: {}", r.quantity, r.pattern, r.failed.join(", ")))
                .collect();
            if failed.is_empty() {
                ExitCode::SUCCESS
            } else {
                for f in &failed {
                    eprintln!("failed invariant: {f}");
                }
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
