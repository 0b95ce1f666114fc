use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use trispectra::coeffs::MatrixKind;
use trispectra::lab::{self, Config};

#[derive(Parser)]
#[command(name = "trispectra", version, about = "Three spectra of fourth-order operators with distributional coefficients")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output file; the summary goes next to it as `<out>.summary.json`.
    /// Without it records go to stdout and the summary to stderr.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Regularization matrix, overriding `[problem].kind`.
    #[arg(long, value_parser = parse_kind)]
    kind: Option<MatrixKind>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Verb {
    /// The three spectra as records, with a class-W report.
    Spectra {
        #[command(flatten)]
        common: Common,
        /// Eigenvalues per spectrum.
        #[arg(long)]
        n: Option<usize>,
        /// Secant stopping tolerance (relative step).
        #[arg(long)]
        tol: Option<f64>,
        /// Fill the `ms` field with wall times.
        #[arg(long)]
        timing: bool,
    },
    /// Identity suite at seeded random λ.
    Identities {
        #[command(flatten)]
        common: Common,
        /// Number of λ samples.
        #[arg(long)]
        n: Option<usize>,
        /// Relative tolerance for the identities.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compare the spectra of two problems.
    Uniqueness {
        #[command(flatten)]
        common: Common,
        /// The second problem.
        #[arg(long)]
        other: PathBuf,
        #[arg(long)]
        n: Option<usize>,
        /// Relative distance below which eigenvalues count as equal.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        timing: bool,
    },
    /// Spectra of one problem under several regularization matrices.
    Crossreg {
        #[command(flatten)]
        common: Common,
        /// Kinds to compare, comma separated (default: `[experiment].kinds`).
        #[arg(long, value_delimiter = ',', value_parser = parse_kind)]
        kinds: Vec<MatrixKind>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Rebuild the characteristic functions from their zeros.
    Hadamard {
        #[command(flatten)]
        common: Common,
        /// Zeros per function.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Dump M(λ) on the `[experiment.grid]` λ-grid.
    Weyl {
        #[command(flatten)]
        common: Common,
    },
    /// Tab-separated log-magnitude table of Δ22, Δ32, Δ42 on the λ-grid.
    Plotdata {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Serialize)]
struct HadamardRow<'a> {
    hash: &'a str,
    spectrum: &'a str,
    lambda: [f64; 2],
    direct: [f64; 2],
    reconstructed: [f64; 2],
    rel_error: f64,
}

fn parse_kind(s: &str) -> Result<MatrixKind, String> {
    MatrixKind::parse(s).map_err(|e| e.to_string())
}

fn load(common: &Common) -> Result<Config> {
    let mut cfg = Config::load(&common.config)?;
    if let Some(k) = common.kind {
        cfg.problem.kind = k;
    }
    if let Some(j) = common.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build_global()
            .context("configuring worker threads")?;
    }
    Ok(cfg)
}

fn output(common: &Common) -> Result<Box<dyn Write>> {
    Ok(match &common.out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn summary_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".summary.json");
    PathBuf::from(s)
}

fn write_summary<T: Serialize>(common: &Common, summary: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(summary)?;
    match &common.out {
        Some(p) => {
            let path = summary_path(p);
            std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        }
        None => eprintln!("{text}"),
    }
    Ok(())
}

fn write_lines<T: Serialize>(common: &Common, rows: &[T]) -> Result<()> {
    let mut w = output(common)?;
    for r in rows {
        writeln!(w, "{}", serde_json::to_string(r)?)?;
    }
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.verb {
        Verb::Spectra { common, n, tol, timing } => {
            let mut cfg = load(&common)?;
            if let Some(n) = n {
                cfg.spectra.count = n;
            }
            if let Some(t) = tol {
                cfg.spectra.tol = t;
            }
            cfg.validate()?;
            let run = lab::run_spectra(&cfg, timing)?;
            lab::write_records(output(&common)?, &run.records)?;
            write_summary(&common, &run.summary)?;
        }
        Verb::Identities { common, n, tol, seed } => {
            let mut cfg = load(&common)?;
            if let Some(n) = n {
                cfg.experiment.samples = n;
            }
            if let Some(t) = tol {
                cfg.experiment.identity_tol = t;
            }
            if let Some(s) = seed {
                cfg.experiment.seed = s;
            }
            cfg.validate()?;
            let report = lab::run_identities(&cfg, None)?;
            write_lines(&common, &report.samples)?;
            write_summary(&common, &report)?;
            if !report.pass {
                bail!("identity deviations exceed tolerance");
            }
        }
        Verb::Uniqueness {
            common,
            other,
            n,
            tol,
            timing,
        } => {
            let mut a = load(&common)?;
            let mut b = Config::load(&other)?;
            if let Some(k) = common.kind {
                b.problem.kind = k;
            }
            for c in [&mut a, &mut b] {
                if let Some(n) = n {
                    c.spectra.count = n;
                }
                if let Some(t) = tol {
                    c.experiment.tol = t;
                }
                c.validate()?;
            }
            let (records, report) = lab::run_uniqueness_probe(&a, &b, timing)?;
            lab::write_records(output(&common)?, &records)?;
            write_summary(&common, &report)?;
        }
        Verb::Crossreg { common, kinds, n, tol } => {
            let mut cfg = load(&common)?;
            if let Some(n) = n {
                cfg.spectra.count = n;
            }
            if let Some(t) = tol {
                cfg.experiment.tol = t;
            }
            cfg.validate()?;
            let kinds = if kinds.is_empty() { cfg.experiment.kinds.clone() } else { kinds };
            let (records, report) = lab::run_cross_regularization(&cfg, &kinds)?;
            lab::write_records(output(&common)?, &records)?;
            write_summary(&common, &report)?;
        }
        Verb::Hadamard { common, n } => {
            let cfg = load(&common)?;
            let n = n.unwrap_or(cfg.experiment.n_zeros);
            let probes: Vec<_> = cfg.experiment.probes.iter().map(|p| p.value()).collect();
            let run = lab::run_hadamard(&cfg, n, &probes)?;
            let rows: Vec<HadamardRow> = run
                .entries
                .iter()
                .flat_map(|e| {
                    e.probes.iter().map(|p| HadamardRow {
                        hash: &run.meta.hash,
                        spectrum: &e.spectrum,
                        lambda: p.lambda,
                        direct: p.direct,
                        reconstructed: p.reconstructed,
                        rel_error: p.rel_error,
                    })
                })
                .collect();
            write_lines(&common, &rows)?;
            write_summary(&common, &run)?;
        }
        Verb::Weyl { common } => {
            let cfg = load(&common)?;
            let rows = lab::run_weyl_grid(&cfg, &cfg.experiment.grid.points())?;
            write_lines(&common, &rows)?;
        }
        Verb::Plotdata { common } => {
            let cfg = load(&common)?;
            let rows = lab::run_plotdata(&cfg, &cfg.experiment.grid.points())?;
            let mut w = output(&common)?;
            lab::write_plot_table(&mut w, &rows)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
