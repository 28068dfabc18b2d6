use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use bh_stability::asymmetry::{fraenkel, fraenkel2_seeded};
use bh_stability::certificate::{stability_report_with, ReportOptions};
use bh_stability::domain::{generate, r_omega, GridDomain, ShapeSpec};
use bh_stability::experiments::{emit_report, read_csv, run_sweep, SweepConfig, DIMENSION};
use bh_stability::special::ProfileParams;
use bh_stability::spectral::{assemble, lowest_eigenpairs_with, LobpcgOptions};

#[derive(Parser, Debug)]
#[command(name = "bhstab", version, about = "Two-ball Neumann eigenvalue stability experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Rasterise a shape into a domain file.
    Gen {
        /// disk, two_disks, rectangle, ellipse, dumbbell or perturbed_disk
        family: String,
        /// Shape parameters as name=value.
        params: Vec<String>,
        #[arg(long)]
        resolution: f64,
        /// Output file (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Lowest Neumann eigenvalues of a domain file.
    Eig {
        domain: PathBuf,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fraenkel asymmetry A and two-ball asymmetry A2 of a domain file.
    Asym {
        domain: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full stability report of a domain file as JSON.
    Certify {
        domain: PathBuf,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a sweep config and write corpus.csv, report.json and scatter.svg.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config's eigensolver tolerance.
        #[arg(long)]
        tol: Option<f64>,
        /// Replaces the config's resolutions with this single value.
        #[arg(long)]
        resolution: Option<f64>,
    },
    /// Rebuild report.json and scatter.svg (and a normalised corpus.csv)
    /// from an existing corpus.csv.
    Report {
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

fn read_domain(path: &Path) -> Result<GridDomain> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(GridDomain::from_text(&text).with_context(|| format!("parsing {}", path.display()))?)
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn parse_params(items: &[String]) -> Result<BTreeMap<String, f64>> {
    let mut map = BTreeMap::new();
    for item in items {
        let Some((k, v)) = item.split_once('=') else {
            bail!("parameter '{item}' is not of the form name=value");
        };
        let v: f64 = v
            .trim()
            .parse()
            .with_context(|| format!("parameter '{k}' has non-numeric value '{v}'"))?;
        map.insert(k.trim().to_string(), v);
    }
    Ok(map)
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Gen {
            family,
            params,
            resolution,
            out,
        } => {
            let spec = ShapeSpec::from_params(&family, &parse_params(&params)?)?;
            let d = generate(&spec, resolution)?;
            emit(&d.to_text(), out.as_deref())
        }
        Command::Eig {
            domain,
            k,
            tol,
            seed,
            out,
        } => {
            let d = read_domain(&domain)?;
            let opts = LobpcgOptions {
                tol,
                seed,
                ..LobpcgOptions::default()
            };
            let s = lowest_eigenpairs_with(&assemble(&d)?, k, &opts)?;
            let v = json!({
                "h": d.h(),
                "measure": d.measure(),
                "eigenvalues": s.eigenvalues,
                "residuals": s.residuals,
                "iterations": s.iterations,
                "kernel_dimension": s.kernel_dimension(1e-8),
            });
            emit(&(serde_json::to_string_pretty(&v)? + "\n"), out.as_deref())
        }
        Command::Asym { domain, seed, out } => {
            let d = read_domain(&domain)?;
            let a = fraenkel(&d)?;
            let a2 = fraenkel2_seeded(&d, seed)?;
            let v = json!({ "A": a, "A2": a2 });
            emit(&(serde_json::to_string_pretty(&v)? + "\n"), out.as_deref())
        }
        Command::Certify {
            domain,
            tol,
            seed,
            out,
        } => {
            let d = read_domain(&domain)?;
            let opts = LobpcgOptions {
                tol,
                seed,
                ..LobpcgOptions::default()
            };
            let s = lowest_eigenpairs_with(&assemble(&d)?, 3, &opts)?;
            let p = ProfileParams::new(DIMENSION, r_omega(&d, DIMENSION)?)?;
            let report = stability_report_with(
                &d,
                &s,
                &p,
                &ReportOptions {
                    seed: Some(seed),
                    asymmetry: None,
                },
            )?;
            emit(&(serde_json::to_string_pretty(&report)? + "\n"), out.as_deref())
        }
        Command::Sweep {
            config,
            out,
            seed,
            tol,
            resolution,
        } => {
            let mut cfg = SweepConfig::load(&config)?;
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(t) = tol {
                cfg.tol = t;
            }
            if let Some(h) = resolution {
                cfg.resolutions = vec![h];
            }
            cfg.validate()?;
            let rows = run_sweep(&cfg)?;
            let files = emit_report(&rows, cfg.seed, &cfg.output_dir)?;
            let failed = rows.iter().filter(|r| !r.is_ok()).count();
            eprintln!(
                "{} rows ({failed} failed) -> {}",
                rows.len(),
                files.csv.parent().unwrap_or(Path::new(".")).display()
            );
            Ok(())
        }
        Command::Report { csv, out, seed } => {
            let rows = read_csv(&csv)?;
            emit_report(&rows, seed, &out)?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let numerical = e
                .chain()
                .find_map(|c| c.downcast_ref::<bh_stability::Error>())
                .is_some_and(|b| b.is_numerical());
            ExitCode::from(if numerical { 2 } else { 1 })
        }
    }
}
