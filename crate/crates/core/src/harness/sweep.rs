//! Monte Carlo sweeps, ROC runs and their CSV tables.

use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::{roc_curve, RocParams, ScatteringModels};
use crate::error::{Error, Result};
use crate::optimizer::{run, RunOutput};
use crate::to_db;

use super::config::{PolarDeg, ScenarioConfig, Scheme};
use super::scenario::{apply_scheme, clutter_model, generate_channels, target_model};

/// Parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// `P_T` in watts.
    Power,
    /// Every user's SINR floor in dB.
    EpsBob,
    /// Every user's eavesdropping ceiling in dB.
    EpsEve,
    /// Pattern count.
    PPat,
    /// Polarization count.
    PPol,
    /// Target azimuth in degrees, at the target region's mid radius unless pinned.
    TargetAngle,
    /// No variation; the single value is ignored.
    None,
}

impl SweepAxis {
    /// Snake-case tag.
    pub fn tag(self) -> &'static str {
        match self {
            SweepAxis::Power => "power",
            SweepAxis::EpsBob => "eps_bob",
            SweepAxis::EpsEve => "eps_eve",
            SweepAxis::PPat => "p_pat",
            SweepAxis::PPol => "p_pol",
            SweepAxis::TargetAngle => "target_angle",
            SweepAxis::None => "none",
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        use SweepAxis::*;
        [Power, EpsBob, EpsEve, PPat, PPol, TargetAngle, None]
            .into_iter()
            .find(|a| a.tag() == s)
            .ok_or_else(|| Error::Config { path: "axis".into(), message: format!("unknown sweep axis `{s}`") })
    }
}

/// Config with `axis` set to `value`.
pub fn apply_axis(cfg: &ScenarioConfig, axis: SweepAxis, value: f64) -> Result<ScenarioConfig> {
    let mut out = cfg.clone();
    let count = |v: f64, name: &str| {
        if v >= 1.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(Error::Config { path: name.into(), message: format!("{v} is not a positive count") })
        }
    };
    match axis {
        SweepAxis::Power => out.p_t_watts = value,
        SweepAxis::EpsBob => out.eps_bob_db = vec![value],
        SweepAxis::EpsEve => out.eps_eve_db = vec![value],
        SweepAxis::PPat => out.dictionary.p_pat = count(value, "dictionary.p_pat")?,
        SweepAxis::PPol => out.dictionary.p_pol = count(value, "dictionary.p_pol")?,
        SweepAxis::TargetAngle => {
            let r = &cfg.geometry.target_region;
            let distance_m = cfg.geometry.target_position.map_or(0.5 * (r.inner_m + r.outer_m), |p| p.distance_m);
            out.geometry.target_position = Some(PolarDeg { angle_deg: value, distance_m });
        }
        SweepAxis::None => {}
    }
    out.validate()?;
    Ok(out)
}

/// Seed of realization `index`: the first word of ChaCha8 stream `index` under `base`.
pub fn realization_seed(base: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(index);
    rng.next_u64()
}

fn optimizer_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

/// Outcome class of one realization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    /// Converged or capped, constraints met.
    Ok,
    /// Finished but the rounded state misses a constraint.
    Flagged,
    /// No feasible point was found.
    Infeasible,
    /// Any other failure.
    Error,
}

/// One attempted realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    /// Hash of the effective config (axis value, scheme and seed applied).
    pub config_hash: String,
    /// Effective seed; with the config it reproduces the row.
    pub seed: u64,
    /// Realization index within the sweep.
    pub realization: usize,
    /// Sweep axis tag.
    pub axis: String,
    /// Axis value.
    pub value: f64,
    /// Scheme.
    pub scheme: Scheme,
    /// Outcome.
    pub status: RunStatus,
    /// Final SCNR in dB (NaN when unavailable).
    pub scnr_db: f64,
    /// Per-user SINR in dB.
    pub bob_sinr_db: Vec<f64>,
    /// Eve SINR per user stream in dB.
    pub eve_sinr_db: Vec<f64>,
    /// Transmit power in watts.
    pub power_w: f64,
    /// Outer iterations.
    pub iterations: usize,
    /// Whether the outer loop met its tolerance.
    pub converged: bool,
    /// Wall time in seconds; kept out of the CSV so tables replay byte for byte.
    pub wall_time_s: f64,
    /// Error text for failed rows.
    pub message: String,
}

/// Effective config of one realization.
pub fn effective_config(cfg: &ScenarioConfig, scheme: Scheme, seed: u64) -> ScenarioConfig {
    ScenarioConfig { scheme, seed, ..cfg.clone() }
}

/// Runs the optimizer on the realization drawn from `cfg.seed` with `cfg.scheme`.
pub fn run_config(cfg: &ScenarioConfig) -> Result<RunOutput> {
    let channels = generate_channels(cfg, cfg.seed)?;
    let dict = apply_scheme(cfg, cfg.scheme)?;
    run(&channels, &dict, &cfg.optimizer_config(), &mut optimizer_rng(cfg.seed))
}

/// Runs one effective config and turns the outcome into a record.
pub fn run_record(cfg: &ScenarioConfig, realization: usize, axis: SweepAxis, value: f64) -> Result<(ResultRecord, Option<RunOutput>)> {
    let start = Instant::now();
    let outcome = run_config(cfg);
    let wall_time_s = start.elapsed().as_secs_f64();
    let mut rec = ResultRecord {
        config_hash: cfg.hash()?,
        seed: cfg.seed,
        realization,
        axis: axis.tag().into(),
        value,
        scheme: cfg.scheme,
        status: RunStatus::Error,
        scnr_db: f64::NAN,
        bob_sinr_db: Vec::new(),
        eve_sinr_db: Vec::new(),
        power_w: f64::NAN,
        iterations: 0,
        converged: false,
        wall_time_s,
        message: String::new(),
    };
    match outcome {
        Ok(out) => {
            rec.status = if out.state.feasible { RunStatus::Ok } else { RunStatus::Flagged };
            rec.scnr_db = to_db(out.metrics.scnr);
            rec.bob_sinr_db = out.metrics.bob_sinr.iter().map(|v| to_db(*v)).collect();
            rec.eve_sinr_db = out.metrics.eve_sinr.iter().map(|v| to_db(*v)).collect();
            rec.power_w = out.metrics.power;
            rec.iterations = out.trace.iterations();
            rec.converged = out.trace.converged;
            Ok((rec, Some(out)))
        }
        Err(e) => {
            rec.status = if matches!(e, Error::Infeasible { .. }) { RunStatus::Infeasible } else { RunStatus::Error };
            rec.message = e.to_string();
            Ok((rec, None))
        }
    }
}

/// Mean over the successful realizations of one `(value, scheme)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    /// Sweep axis tag.
    pub axis: String,
    /// Axis value.
    pub value: f64,
    /// Scheme.
    pub scheme: Scheme,
    /// Realizations with status `ok`.
    pub n_ok: usize,
    /// Realizations attempted.
    pub n_total: usize,
    /// Mean SCNR in dB over `ok` rows.
    pub mean_scnr_db: f64,
}

/// Raw and aggregated sweep results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutput {
    /// One row per attempted realization.
    pub records: Vec<ResultRecord>,
    /// One row per `(value, scheme)`.
    pub aggregates: Vec<AggregateRow>,
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

/// Column order of [`records_csv`].
pub const RECORD_COLUMNS: [&str; 15] = [
    "config_hash",
    "seed",
    "realization",
    "axis",
    "value",
    "scheme",
    "status",
    "scnr_db",
    "min_bob_sinr_db",
    "max_eve_sinr_db",
    "power_w",
    "iterations",
    "converged",
    "bob_sinr_db",
    "eve_sinr_db",
];

/// Raw rows as CSV.
pub fn records_csv(records: &[ResultRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RECORD_COLUMNS)?;
    for r in records {
        let min_bob = r.bob_sinr_db.iter().copied().fold(f64::INFINITY, f64::min);
        let max_eve = r.eve_sinr_db.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        w.write_record([
            r.config_hash.clone(),
            r.seed.to_string(),
            r.realization.to_string(),
            r.axis.clone(),
            r.value.to_string(),
            r.scheme.tag().to_string(),
            format!("{:?}", r.status).to_lowercase(),
            r.scnr_db.to_string(),
            min_bob.to_string(),
            max_eve.to_string(),
            r.power_w.to_string(),
            r.iterations.to_string(),
            r.converged.to_string(),
            join(&r.bob_sinr_db),
            join(&r.eve_sinr_db),
        ])?;
    }
    finish(w)
}

/// Aggregate rows as CSV (`axis,value,scheme,n_ok,n_total,mean_scnr_db`).
pub fn aggregates_csv(rows: &[AggregateRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["axis", "value", "scheme", "n_ok", "n_total", "mean_scnr_db"])?;
    for r in rows {
        w.write_record([
            r.axis.clone(),
            r.value.to_string(),
            r.scheme.tag().to_string(),
            r.n_ok.to_string(),
            r.n_total.to_string(),
            r.mean_scnr_db.to_string(),
        ])?;
    }
    finish(w)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn aggregate(records: &[ResultRecord], axis: SweepAxis, values: &[f64], schemes: &[Scheme]) -> Vec<AggregateRow> {
    let mut rows = Vec::new();
    for &value in values {
        for &scheme in schemes {
            let cell: Vec<&ResultRecord> = records.iter().filter(|r| r.value == value && r.scheme == scheme).collect();
            let ok: Vec<f64> = cell.iter().filter(|r| r.status == RunStatus::Ok).map(|r| r.scnr_db).collect();
            let mean = if ok.is_empty() { f64::NAN } else { ok.iter().sum::<f64>() / ok.len() as f64 };
            rows.push(AggregateRow { axis: axis.tag().into(), value, scheme, n_ok: ok.len(), n_total: cell.len(), mean_scnr_db: mean });
        }
    }
    rows
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(|e| Error::InvalidParameter(e.to_string()))
}

/// Every `(value, realization, scheme)` combination; realization `r` uses
/// channels from [`realization_seed`]`(cfg.seed, r)` for every value and scheme.
///
/// Failures become rows; the sweep never aborts on a single realization.
/// `jobs = 0` uses every core.
pub fn run_sweep(
    cfg: &ScenarioConfig,
    axis: SweepAxis,
    values: &[f64],
    n_realizations: usize,
    schemes: &[Scheme],
    jobs: usize,
) -> Result<SweepOutput> {
    if n_realizations == 0 || values.is_empty() || schemes.is_empty() {
        return Err(Error::InvalidParameter("sweep needs values, schemes and at least one realization".into()));
    }
    let mut tasks = Vec::new();
    for &value in values {
        let base = apply_axis(cfg, axis, value)?;
        for r in 0..n_realizations {
            let seed = realization_seed(cfg.seed, r as u64);
            for &scheme in schemes {
                tasks.push((effective_config(&base, scheme, seed), r, value));
            }
        }
    }
    let records = pool(jobs)?.install(|| {
        tasks
            .par_iter()
            .map(|(c, r, v)| run_record(c, *r, axis, *v).map(|x| x.0))
            .collect::<Result<Vec<_>>>()
    })?;
    let aggregates = aggregate(&records, axis, values, schemes);
    Ok(SweepOutput { records, aggregates })
}

/// One ROC row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocRow {
    /// Scheme.
    pub scheme: Scheme,
    /// Empirical false-alarm rate.
    pub pfa: f64,
    /// Empirical detection rate.
    pub pd: f64,
    /// Detector threshold.
    pub threshold: f64,
    /// Trials per hypothesis.
    pub n_trials: usize,
}

/// ROC of every scheme on the realization drawn from `cfg.seed`; all schemes
/// share the detector random stream.
pub fn run_roc(cfg: &ScenarioConfig, schemes: &[Scheme], params: &RocParams, jobs: usize) -> Result<Vec<RocRow>> {
    let channels = generate_channels(cfg, cfg.seed)?;
    let models = ScatteringModels { target: target_model(cfg)?, clutter: clutter_model(cfg)? };
    pool(jobs)?.install(|| {
        let mut rows = Vec::new();
        for &scheme in schemes {
            let dict = apply_scheme(cfg, scheme)?;
            let out = run(&channels, &dict, &cfg.optimizer_config(), &mut optimizer_rng(cfg.seed))?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(2);
            for p in roc_curve(&out.state, &channels, &dict, &models, params, &mut rng)? {
                rows.push(RocRow { scheme, pfa: p.pfa, pd: p.pd, threshold: p.threshold, n_trials: params.n_trials });
            }
        }
        Ok(rows)
    })
}

/// ROC rows as CSV (`scheme,pfa,pd,threshold,n_trials`).
pub fn roc_csv(rows: &[RocRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["scheme", "pfa", "pd", "threshold", "n_trials"])?;
    for r in rows {
        w.write_record([r.scheme.tag().to_string(), r.pfa.to_string(), r.pd.to_string(), r.threshold.to_string(), r.n_trials.to_string()])?;
    }
    finish(w)
}

/// Run metadata written next to every CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    /// Subcommand.
    pub command: String,
    /// Config echo.
    pub config: ScenarioConfig,
    /// Hash of `config`.
    pub config_hash: String,
    /// Wall time in seconds.
    pub wall_time_s: f64,
    /// Crate version.
    pub version: String,
}

impl RunMetadata {
    /// Metadata for `config`.
    pub fn new(command: &str, config: &ScenarioConfig, wall_time_s: f64) -> Result<Self> {
        Ok(Self {
            command: command.into(),
            config: config.clone(),
            config_hash: config.hash()?,
            wall_time_s,
            version: env!("CARGO_PKG_VERSION").into(),
        })
    }

    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}
