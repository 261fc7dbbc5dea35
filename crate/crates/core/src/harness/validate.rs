//! Oracle checks on tiny instances, run by the `validate` subcommand.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::em_core::{EmDictionary, SelectionMatrix};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, BeamformerState};
use crate::optimizer::run;
use crate::oracle::{dense_recompute, exhaustive_em_search, random_tiny_channels, ExhaustiveResult, TinyScenario};
use crate::{to_db, CMat, CVec};

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    /// Short name.
    pub name: String,
    /// Whether it passed.
    pub passed: bool,
    /// Measured values.
    pub detail: String,
}

/// Checks as CSV (`check,passed,detail`).
pub fn checks_csv(checks: &[Check]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["check", "passed", "detail"])?;
    for c in checks {
        w.write_record([c.name.as_str(), if c.passed { "true" } else { "false" }, c.detail.as_str()])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Tiny instances paired with their exhaustive optimum.
///
/// Seeds are scanned upward from `first_seed`; instances where no selection
/// pair admits a feasible precoder are skipped.
pub fn feasible_tiny_instances(count: usize, first_seed: u64) -> Result<Vec<(u64, TinyScenario, ExhaustiveResult)>> {
    let mut out = Vec::with_capacity(count);
    let mut seed = first_seed;
    while out.len() < count {
        let tiny = TinyScenario::seeded(seed)?;
        match exhaustive_em_search(&tiny) {
            Ok(best) => out.push((seed, tiny, best)),
            Err(Error::Infeasible { .. }) => {}
            Err(e) => return Err(e),
        }
        seed += 1;
        if seed - first_seed > 50 * count as u64 + 100 {
            return Err(Error::InvalidParameter("too few feasible tiny instances".into()));
        }
    }
    Ok(out)
}

/// Result of comparing the optimizer with the exhaustive search.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleComparison {
    /// Instance seed.
    pub seed: u64,
    /// Exhaustive optimum in dB.
    pub exhaustive_db: f64,
    /// Optimizer result in dB (NaN if the run failed).
    pub run_db: f64,
}

impl OracleComparison {
    /// Optimizer within 1 dB of the optimum.
    pub fn within_1db(&self) -> bool {
        self.exhaustive_db - self.run_db <= 1.0
    }

    /// Optimizer above the optimum by more than `1e-6` relative.
    pub fn exceeds(&self) -> bool {
        let (ex, r) = (crate::from_db(self.exhaustive_db), crate::from_db(self.run_db));
        r > ex * (1.0 + 1e-6)
    }
}

/// Runs the optimizer on each instance (optimizer stream seeded by the instance seed).
pub fn compare_with_oracle(instances: &[(u64, TinyScenario, ExhaustiveResult)]) -> Vec<OracleComparison> {
    instances
        .iter()
        .map(|(seed, tiny, best)| {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let run_db = run(&tiny.channels, &tiny.dict, &tiny.config, &mut rng).map_or(f64::NAN, |o| to_db(o.metrics.scnr));
            OracleComparison { seed: *seed, exhaustive_db: to_db(best.best_scnr), run_db }
        })
        .collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Largest relative factored-vs-dense metric mismatch over `count` random tiny states.
pub fn dense_agreement(count: usize) -> Result<f64> {
    use rand::Rng;
    let mut worst = 0.0f64;
    for seed in 0..count as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let set = random_tiny_channels(&mut rng, 8, 2, 1, 1);
        let dict = EmDictionary::parametric(8, 2, 2, 3.0, true)?;
        let sel = |rng: &mut ChaCha8Rng| {
            let v: Vec<f64> = (0..8).map(|_| rng.gen_range(0.01..1.0)).collect();
            SelectionMatrix::from_solver_vector(4, 2, &v)
        };
        let state = BeamformerState {
            sel_tx: sel(&mut rng)?,
            sel_rx: sel(&mut rng)?,
            digital_precoder: CMat::from_fn(2, 2, |_, _| crate::channel::complex_normal(&mut rng)),
            digital_combiner: CVec::from_fn(2, |_, _| crate::channel::complex_normal(&mut rng)),
            gamma: 0.0,
            feasible: true,
        };
        let fast = evaluate(&set, &dict, &state)?;
        let dense = dense_recompute(&set, &dict, &state)?;
        worst = worst.max(rel(fast.scnr, dense.scnr));
        for (a, b) in fast.bob_sinr.iter().zip(&dense.bob_sinr).chain(fast.eve_sinr.iter().zip(&dense.eve_sinr)) {
            worst = worst.max(rel(*a, *b));
        }
    }
    Ok(worst)
}

/// Dense-agreement and oracle-equivalence checks on `count` instances each.
pub fn validate_suite(count: usize) -> Result<Vec<Check>> {
    let worst = dense_agreement(count)?;
    let mut checks = vec![Check {
        name: "factored vs dense metrics".into(),
        passed: worst <= 1e-10,
        detail: format!("max relative error {worst:.3e} over {count} instances"),
    }];
    let instances = feasible_tiny_instances(count, 0)?;
    let cmp = compare_with_oracle(&instances);
    let within = cmp.iter().filter(|c| c.within_1db()).count();
    let exceed = cmp.iter().filter(|c| c.exceeds()).count();
    checks.push(Check {
        name: "optimizer within 1 dB of exhaustive".into(),
        passed: within * 10 >= 6 * cmp.len(),
        detail: format!("{within}/{} instances", cmp.len()),
    });
    checks.push(Check {
        name: "optimizer never exceeds exhaustive".into(),
        passed: exceed == 0,
        detail: format!("{exceed} violations"),
    });
    Ok(checks)
}
