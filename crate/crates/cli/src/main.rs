//! `wavebc` command-line front end.
//!
//! Exit codes: 0 ok, 2 config error, 3 numerical failure, 4 IO.
//! `WAVEBC_THREADS` caps the worker pool.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wavebc::config::{ExperimentConfig, ExperimentKind, JtnConfig, ScatterConfig};
use wavebc::reconstruction::SearchSpec;
use wavebc::runner::{run, Manifest};
use wavebc::scattering::{Bump, ProfileKind};
use wavebc::{Error, Result};

#[derive(Parser)]
#[command(name = "wavebc", version, about = "Boundary-control reconstruction and model-end scattering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble a response operator from a grid config.
    Response {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Localized inner products and positivity for a list of slices.
    Jtn {
        #[arg(long)]
        response: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Boundary distance representation from a response operator.
    Reconstruct {
        #[arg(long)]
        response: PathBuf,
        #[arg(long)]
        search: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// S-matrix sweep over a wavenumber grid.
    Scatter {
        #[arg(long)]
        profile: ProfileKind,
        /// `a:b:n`
        #[arg(long)]
        kgrid: String,
        /// Comma-separated cross-section eigenvalues, starting at 0.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        lambdas: Vec<f64>,
        /// Radial potential bump `amp:center:width`.
        #[arg(long)]
        bump: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Invariant suites on a config's grid, or the builtin flat square.
    Validate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Run any stage from a full experiment config.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::UpstreamArtifactMissing(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Error::ConfigInvalid(format!("{}: {}", path.display(), e.message())))
}

fn base(kind: ExperimentKind, out_dir: PathBuf) -> ExperimentConfig {
    ExperimentConfig { kind, out_dir, grid: None, horizon: None, ..ExperimentConfig::flat_square_preset() }
}

fn parse_bump(s: &str) -> Result<Bump> {
    let v: Vec<f64> = s.split(':').map(|p| p.trim().parse::<f64>()).collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::ConfigInvalid(format!("bump `{s}` is not amp:center:width")))?;
    match v.as_slice() {
        &[amp, center, width] => Ok(Bump { amp, center, width }),
        _ => Err(Error::ConfigInvalid(format!("bump `{s}` is not amp:center:width"))),
    }
}

/// Moves the runner's artifact to the requested path.
fn place(from: &Path, to: &Path) -> Result<()> {
    if from != to {
        std::fs::rename(from, to)?;
    }
    Ok(())
}

fn out_parent(out: &Path) -> PathBuf {
    match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn execute(cmd: Command) -> Result<Manifest> {
    match cmd {
        Command::Response { config, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            cfg.kind = ExperimentKind::Response;
            cfg.out_dir = out_parent(&out);
            let m = run(&cfg)?;
            place(&cfg.out_dir.join("response.bin"), &out)?;
            Ok(m)
        }
        Command::Jtn { response, spec, out_dir } => {
            let jtn: JtnConfig = read_toml(&spec)?;
            let cfg = ExperimentConfig { response: Some(response), jtn: Some(jtn), ..base(ExperimentKind::Jtn, out_dir) };
            run(&cfg)
        }
        Command::Reconstruct { response, search, out_dir } => {
            let search: Option<SearchSpec> = search.map(|p| read_toml(&p)).transpose()?;
            let cfg = ExperimentConfig { response: Some(response), search, ..base(ExperimentKind::Reconstruct, out_dir) };
            run(&cfg)
        }
        Command::Scatter { profile, kgrid, lambdas, bump, out } => {
            let scatter = ScatterConfig {
                profile,
                lambdas,
                kgrid,
                e0: None,
                r_match: None,
                potential: bump.as_deref().map(parse_bump).transpose()?,
                index: None,
                coupling: None,
            };
            let cfg = ExperimentConfig { scatter: Some(scatter), ..base(ExperimentKind::Scatter, out_parent(&out)) };
            let m = run(&cfg)?;
            place(&cfg.out_dir.join("smatrix.csv"), &out)?;
            Ok(m)
        }
        Command::Validate { config, out_dir } => {
            let mut cfg = match config {
                Some(p) => ExperimentConfig::load(&p)?,
                None => ExperimentConfig::flat_square_preset(),
            };
            cfg.kind = ExperimentKind::Validate;
            cfg.out_dir = out_dir;
            run(&cfg)
        }
        Command::Run { config } => run(&ExperimentConfig::load(&config)?),
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    if let Some(n) = std::env::var("WAVEBC_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match execute(cli.command) {
        Ok(m) => {
            for s in &m.suites {
                println!("{} {} {:e} (tol {:e})", if s.passed { "PASS" } else { "FAIL" }, s.name, s.value, s.tolerance);
            }
            for (k, v) in &m.metrics {
                println!("{k} = {v}");
            }
            if m.all_passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(3)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
