//! `cra-isac` command-line simulator.
//!
//! Subcommands: `run`, `sweep`, `roc`, `validate`. Each writes its CSV output
//! and a `metadata.json` (config echo, content hash, wall time) to `--out`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use cra_isac::detector::RocParams;
use cra_isac::harness::sweep::{aggregates_csv, records_csv, roc_csv, run_record};
use cra_isac::harness::validate::{checks_csv, validate_suite};
use cra_isac::harness::{load_config, run_roc, run_sweep, RunMetadata, ScenarioConfig, Scheme, SweepAxis};
use cra_isac::to_db;

#[derive(Parser)]
#[command(name = "cra-isac", version, about = "Secure ISAC beamforming with compound reconfigurable antenna arrays")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario document (JSON); the built-in default scenario if omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

impl Common {
    fn config(&self) -> Result<ScenarioConfig> {
        let mut cfg = match &self.config {
            Some(path) => load_config(path).with_context(|| format!("loading {}", path.display()))?,
            None => ScenarioConfig::default_scenario(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Optimizes one realization and writes its iteration trace.
    Run {
        #[command(flatten)]
        common: Common,
        /// Scheme; the config scheme if omitted.
        #[arg(long)]
        scheme: Option<Scheme>,
    },
    /// Monte Carlo sweep over one axis.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// power, eps_bob, eps_eve, p_pat, p_pol, target_angle or none.
        #[arg(long, default_value = "none")]
        axis: SweepAxis,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        values: Vec<f64>,
        /// Realizations per value.
        #[arg(long, default_value_t = 20)]
        realizations: usize,
        /// Schemes (repeatable or comma-separated); all four if omitted.
        #[arg(long, value_delimiter = ',')]
        scheme: Vec<Scheme>,
    },
    /// ROC curves of the optimized beamformers.
    Roc {
        #[command(flatten)]
        common: Common,
        /// Schemes (repeatable or comma-separated); all four if omitted.
        #[arg(long, value_delimiter = ',')]
        scheme: Vec<Scheme>,
        /// Trials per hypothesis.
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        /// Comma-separated false-alarm rates.
        #[arg(long, value_delimiter = ',', default_value = "0.001,0.01,0.1,0.5")]
        pfa: Vec<f64>,
        /// Symbols per trial.
        #[arg(long, default_value_t = 64)]
        block_len: usize,
    },
    /// Oracle and dense-recomputation checks on tiny instances.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Instances per check.
        #[arg(long, default_value_t = 20)]
        count: usize,
    },
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_metadata(dir: &Path, command: &str, cfg: &ScenarioConfig, start: Instant) -> Result<()> {
    let meta = RunMetadata::new(command, cfg, start.elapsed().as_secs_f64())?;
    write(dir, "metadata.json", &meta.to_json()?)
}

fn schemes_or_all(s: Vec<Scheme>) -> Vec<Scheme> {
    if s.is_empty() {
        Scheme::ALL.to_vec()
    } else {
        s
    }
}

fn execute(command: Command) -> Result<bool> {
    let start = Instant::now();
    match command {
        Command::Run { common, scheme } => {
            let mut cfg = common.config()?;
            if let Some(s) = scheme {
                cfg.scheme = s;
            }
            std::fs::create_dir_all(&common.out)?;
            let (record, out) = run_record(&cfg, 0, SweepAxis::None, 0.0)?;
            println!("scheme {} seed {} status {:?}", cfg.scheme.tag(), cfg.seed, record.status);
            if let Some(out) = &out {
                let m = &out.metrics;
                println!("scnr_db {:.4}", to_db(m.scnr));
                println!("bob_sinr_db {:?}", m.bob_sinr.iter().map(|v| to_db(*v)).collect::<Vec<_>>());
                println!("eve_sinr_db {:?}", m.eve_sinr.iter().map(|v| to_db(*v)).collect::<Vec<_>>());
                println!("power_w {:.6} iterations {} converged {}", m.power, out.trace.iterations(), out.trace.converged);
                let trace = out.trace.to_csv()?;
                print!("{trace}");
                write(&common.out, "trace.csv", &trace)?;
            } else {
                println!("{}", record.message);
            }
            write(&common.out, "records.csv", &records_csv(std::slice::from_ref(&record))?)?;
            write_metadata(&common.out, "run", &cfg, start)?;
            Ok(out.is_some())
        }
        Command::Sweep { common, axis, values, realizations, scheme } => {
            let cfg = common.config()?;
            std::fs::create_dir_all(&common.out)?;
            let out = run_sweep(&cfg, axis, &values, realizations, &schemes_or_all(scheme), common.jobs)?;
            for a in &out.aggregates {
                println!("{} {} {}: {:.3} dB ({}/{} ok)", a.axis, a.value, a.scheme.tag(), a.mean_scnr_db, a.n_ok, a.n_total);
            }
            write(&common.out, "records.csv", &records_csv(&out.records)?)?;
            write(&common.out, "aggregates.csv", &aggregates_csv(&out.aggregates)?)?;
            write_metadata(&common.out, "sweep", &cfg, start)?;
            Ok(true)
        }
        Command::Roc { common, scheme, trials, pfa, block_len } => {
            let cfg = common.config()?;
            std::fs::create_dir_all(&common.out)?;
            let params = RocParams { n_trials: trials, pfa_grid: pfa, block_len };
            let rows = run_roc(&cfg, &schemes_or_all(scheme), &params, common.jobs)?;
            let csv = roc_csv(&rows)?;
            print!("{csv}");
            write(&common.out, "roc.csv", &csv)?;
            write_metadata(&common.out, "roc", &cfg, start)?;
            Ok(true)
        }
        Command::Validate { common, count } => {
            let cfg = common.config()?;
            std::fs::create_dir_all(&common.out)?;
            let checks = validate_suite(count)?;
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            write(&common.out, "validate.csv", &checks_csv(&checks)?)?;
            write_metadata(&common.out, "validate", &cfg, start)?;
            Ok(checks.iter().all(|c| c.passed))
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
