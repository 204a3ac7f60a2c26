use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use xanes_deconv::io::commands::{cmd_diag, cmd_fit, cmd_generate, cmd_select};
use xanes_deconv::io::config::LadderSection;
use xanes_deconv::io::{write_json, RunConfig};
use xanes_deconv::{Error, PeakConfig, Regime};

/// Bayesian spectral deconvolution of XANES spectra.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Synthesize a dataset from a ground-truth spectrum.
    Generate(Common),
    /// Sample one model with exchange Monte Carlo.
    Fit(Common),
    /// Compute free energies over a grid of peak counts and pick the best.
    Select(Common),
    /// Energy trace and autocorrelation of one replica of a samples file.
    Diag(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, value_parser = parse_regime)]
    model: Option<Regime>,
    /// Below-edge peak count.
    #[arg(long)]
    k1: Option<usize>,
    /// Above-edge peak count.
    #[arg(long)]
    k2: Option<usize>,
    /// Total peak count (conventional regime).
    #[arg(long, conflicts_with_all = ["k1", "k2"])]
    k: Option<usize>,
    /// Geometric ladder as `L,xi,anchor`.
    #[arg(long, value_parser = parse_ladder)]
    ladder: Option<LadderSection>,
    /// Total Monte Carlo steps.
    #[arg(long)]
    mcs: Option<usize>,
    #[arg(long)]
    burnin: Option<usize>,
    /// Input dataset (fit, select).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Samples file (diag).
    #[arg(long)]
    samples: Option<PathBuf>,
    /// 1-based replica to analyse (diag).
    #[arg(long)]
    replica: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
    /// Write failures as JSON to this path.
    #[arg(long)]
    error_json: Option<PathBuf>,
    /// No progress line.
    #[arg(long)]
    quiet: bool,
}

fn parse_regime(s: &str) -> Result<Regime, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_ladder(s: &str) -> Result<LadderSection, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err("expected L,xi,anchor".into());
    }
    Ok(LadderSection {
        replicas: parts[0].parse().map_err(|_| "L must be an integer")?,
        ratio: parts[1].parse().map_err(|_| "xi must be a number")?,
        anchor: parts[2].parse().map_err(|_| "anchor must be a number")?,
    })
}

impl Common {
    fn config(&self, generate: bool) -> Result<RunConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = Some(seed);
        }
        if let Some(dir) = &self.out_dir {
            cfg.paths.out_dir = dir.clone();
        }
        if let Some(regime) = self.model {
            cfg.model.regime = regime;
        }
        if generate {
            cfg.truth.k1 = self.k1.unwrap_or(cfg.truth.k1);
            cfg.truth.k2 = self.k2.unwrap_or(cfg.truth.k2);
        } else if let Some(k) = self.k {
            cfg.model.grid = Some(vec![PeakConfig::single(k)]);
        } else if self.k1.is_some() || self.k2.is_some() {
            cfg.model.grid = Some(vec![PeakConfig::new(self.k1.unwrap_or(0), self.k2.unwrap_or(0))]);
        }
        if let Some(ladder) = self.ladder {
            cfg.ladder = Some(ladder);
        }
        if let Some(m) = self.mcs {
            cfg.sampler.total_mcs = m;
        }
        if let Some(b) = self.burnin {
            cfg.sampler.burn_in = b;
        }
        if let Some(d) = &self.data {
            cfg.paths.data = Some(d.clone());
        }
        if let Some(s) = &self.samples {
            cfg.paths.samples = Some(s.clone());
        }
        if let Some(r) = self.replica {
            cfg.diag.replica = Some(r);
        }
        if let Some(t) = self.threads {
            cfg.sampler.threads = t;
        }
        cfg.output.quiet |= self.quiet;
        Ok(cfg)
    }
}

fn progress_line(quiet: bool) -> impl FnMut(&str, usize, usize) {
    let mut last = usize::MAX;
    move |label, done, total| {
        if quiet {
            return;
        }
        let pct = done * 100 / total.max(1);
        if pct != last || done == total {
            last = pct;
            eprint!("\r{label}: MCS {done}/{total} ({pct}%)");
            if done == total {
                eprintln!();
            }
            let _ = std::io::stderr().flush();
        }
    }
}

fn run(verb: &Verb) -> Result<String, Error> {
    match verb {
        Verb::Generate(c) => {
            let out = cmd_generate(&c.config(true)?)?;
            Ok(format!("wrote {} and {}", out.dataset.display(), out.truth.display()))
        }
        Verb::Fit(c) => {
            let cfg = c.config(false)?;
            let out = cmd_fit(&cfg, &mut progress_line(cfg.output.quiet))?;
            Ok(format!(
                "MAP at rung {} (b = {}): E_N = {:e}; outputs in {}",
                out.map.rung,
                out.map.beta,
                out.map.map.error,
                cfg.paths.out_dir.display()
            ))
        }
        Verb::Select(c) => {
            let cfg = c.config(false)?;
            let res = cmd_select(&cfg, &mut progress_line(cfg.output.quiet))?;
            let chosen = match res.regime {
                Regime::Conventional => format!("K = {}", res.chosen.total()),
                Regime::Proposed => format!("(K1, K2) = ({}, {})", res.chosen.k1, res.chosen.k2),
            };
            Ok(format!(
                "selected {chosen} at rung {} (b = {}), F = {}; outputs in {}",
                res.rung,
                res.beta,
                res.free_energy,
                cfg.paths.out_dir.display()
            ))
        }
        Verb::Diag(c) => {
            let cfg = c.config(false)?;
            let d = cmd_diag(&cfg)?;
            Ok(format!(
                "replica {}: {} samples, integrated autocorrelation time {:.2}",
                d.replica, d.samples, d.integrated_time
            ))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = match &cli.command {
        Verb::Generate(c) | Verb::Fit(c) | Verb::Select(c) | Verb::Diag(c) => c,
    };
    match run(&cli.command) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            if let Some(path) = &common.error_json {
                let report = serde_json::json!({ "kind": e.kind(), "message": e.to_string() });
                if let Err(w) = write_json(path, &report) {
                    eprintln!("error: could not write {}: {w}", path.display());
                }
            }
            ExitCode::FAILURE
        }
    }
}
