//! Alternating optimization of `S_F → S_W → F_BB → w_BB → γ`.
//!
//! Selections stay relaxed during the outer loop and are driven toward binary
//! by a growing penalty; rounding happens once at the end, after which the
//! digital beamformers are refined under the fixed EM state.

pub mod combiner;
pub mod forms;
pub mod subproblems;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::conic::{solve, ConicProgram, SolveStatus};
use crate::em_core::{assemble_em_beamformer, round_selection, EmBeamformer, EmDictionary, SelectionMatrix};
use crate::error::{Error, Result};
use crate::metrics::{bob_sinr, eve_sinr, evaluate, transmit_power, BeamformerState, Metrics};
use crate::{to_db, CMat, Cx, RMat};

use combiner::{update_gamma, update_wbb};
use forms::unlift_precoder;
use subproblems::{build_fbb_feasibility, build_fbb_subproblem, build_sf_subproblem, build_sw_subproblem, radar_only_precoder};

/// Geometric penalty weight schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenaltySchedule {
    /// Weight at the first outer iteration.
    pub start: f64,
    /// Multiplicative growth per outer iteration.
    pub growth: f64,
    /// Upper bound on the weight.
    pub cap: f64,
}

impl Default for PenaltySchedule {
    fn default() -> Self {
        Self { start: 1e-3, growth: 1.5, cap: 1e2 }
    }
}

impl PenaltySchedule {
    /// Weight at zero-based outer iteration `t`.
    pub fn weight(&self, t: usize) -> f64 {
        (self.start * self.growth.powi(t.min(4096) as i32)).min(self.cap)
    }
}

/// Outer-loop and solver knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgorithmConfig {
    /// Outer iteration cap.
    pub max_outer_iters: usize,
    /// Stop once the relative SCNR change falls below this.
    pub scnr_rel_tol: f64,
    /// Binary-promoting weight for `S_F`.
    pub penalty_tx: PenaltySchedule,
    /// Binary-promoting weight for `S_W`.
    pub penalty_rx: PenaltySchedule,
    /// Conic solver gap tolerance.
    pub subproblem_tol: f64,
    /// Interior-point iteration cap per conic solve.
    pub solver_max_iter: u32,
    /// Lower clamp of `γ`.
    pub gamma_floor: f64,
    /// Relative SCNR tolerance of the final digital refinement.
    pub refine_tol: f64,
    /// Iteration cap of the final digital refinement.
    pub refine_max_iters: usize,
    /// Round cap of the max-slack feasibility phase.
    pub feasibility_rounds: usize,
    /// Starting selections.
    pub init: InitScheme,
    /// Extra random one-hot starts; the best final state is kept.
    pub restarts: usize,
}

/// How the outer loop picks its starting selections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// Independent uniform one-hot column per antenna.
    RandomOneHot,
    /// Every entry `1/P`.
    Uniform,
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        Self {
            max_outer_iters: 50,
            scnr_rel_tol: 1e-3,
            penalty_tx: PenaltySchedule::default(),
            penalty_rx: PenaltySchedule::default(),
            subproblem_tol: 1e-7,
            solver_max_iter: 200,
            gamma_floor: 0.0,
            refine_tol: 1e-6,
            refine_max_iters: 200,
            feasibility_rounds: 20,
            init: InitScheme::Uniform,
            restarts: 4,
        }
    }
}

impl AlgorithmConfig {
    /// Checks positivity and growth ≥ 1.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if self.max_outer_iters == 0 || self.refine_max_iters == 0 || self.feasibility_rounds == 0 || self.solver_max_iter == 0 {
            return bad("iteration caps must be positive");
        }
        for (name, v) in [("scnr_rel_tol", self.scnr_rel_tol), ("subproblem_tol", self.subproblem_tol), ("refine_tol", self.refine_tol)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be positive"));
            }
        }
        for p in [self.penalty_tx, self.penalty_rx] {
            if !(p.start >= 0.0 && p.cap >= p.start && p.growth >= 1.0 && p.cap.is_finite()) {
                return bad("penalty schedule needs start ≥ 0, growth ≥ 1, finite cap ≥ start");
            }
        }
        if !(self.gamma_floor >= 0.0) {
            return bad("gamma_floor must be ≥ 0");
        }
        Ok(())
    }
}

/// Problem data that is not part of the channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// Transmit power budget `P_T` in watts.
    pub power_budget: f64,
    /// Per-user SINR floors (linear).
    pub eps_bob: Vec<f64>,
    /// Per-user eavesdropping SINR ceilings (linear).
    pub eps_eve: Vec<f64>,
    /// Algorithm knobs.
    pub algorithm: AlgorithmConfig,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { power_budget: 60.0, eps_bob: Vec::new(), eps_eve: Vec::new(), algorithm: AlgorithmConfig::default() }
    }
}

impl OptimizerConfig {
    /// Checks sizes against `channels`; infinite thresholds are allowed and make the problem infeasible.
    pub fn validate(&self, channels: &ChannelSet) -> Result<()> {
        let k = channels.num_users();
        if self.eps_bob.len() != k || self.eps_eve.len() != k {
            return Err(Error::Dimension(format!("thresholds for {k} users required")));
        }
        if !(self.power_budget > 0.0 && self.power_budget.is_finite()) {
            return Err(Error::InvalidParameter("power budget must be positive".into()));
        }
        if self.eps_bob.iter().chain(&self.eps_eve).any(|e| e.is_nan() || *e < 0.0) {
            return Err(Error::InvalidParameter("SINR thresholds must be ≥ 0".into()));
        }
        self.algorithm.validate()
    }

    fn finite_thresholds(&self) -> bool {
        self.eps_bob.iter().all(|e| e.is_finite()) && self.eps_eve.iter().all(|e| e.is_finite())
    }
}

/// Outcome of one block update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepStatus {
    /// The solver point was taken.
    Accepted,
    /// The solver point failed a safeguard; the block kept its value.
    Rejected,
    /// The solver reported infeasibility or stalled.
    SolverFailed,
}

impl StepStatus {
    fn code(self) -> char {
        match self {
            StepStatus::Accepted => 'A',
            StepStatus::Rejected => 'R',
            StepStatus::SolverFailed => 'F',
        }
    }
}

/// One outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// One-based outer iteration.
    pub iteration: usize,
    /// SCNR (linear).
    pub scnr: f64,
    /// SCNR in dB.
    pub scnr_db: f64,
    /// Per-user SINR (linear).
    pub bob_sinr: Vec<f64>,
    /// Eavesdropping SINR per user stream (linear).
    pub eve_sinr: Vec<f64>,
    /// Transmit power in watts.
    pub power: f64,
    /// `max |s(1 − s)|` over both selections.
    pub binariness: f64,
    /// Statuses of the `S_F`, `S_W` and `F_BB` updates.
    pub statuses: [StepStatus; 3],
}

/// Per-iteration history of a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    /// Records in iteration order.
    pub records: Vec<IterationRecord>,
    /// Whether the relative SCNR change dropped below tolerance.
    pub converged: bool,
}

#[derive(Serialize)]
struct TraceRow {
    iteration: usize,
    scnr_db: f64,
    min_sinr_db: f64,
    max_eve_sinr_db: f64,
    power_w: f64,
    binariness: f64,
    statuses: String,
}

impl IterationTrace {
    /// Number of outer iterations performed.
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    /// SCNR trace in dB.
    pub fn scnr_db(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.scnr_db).collect()
    }

    /// CSV with header `iteration,scnr_db,min_sinr_db,max_eve_sinr_db,power_w,binariness,statuses`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            w.serialize(TraceRow {
                iteration: r.iteration,
                scnr_db: r.scnr_db,
                min_sinr_db: to_db(r.bob_sinr.iter().copied().fold(f64::INFINITY, f64::min)),
                max_eve_sinr_db: to_db(r.eve_sinr.iter().copied().fold(0.0, f64::max)),
                power_w: r.power,
                binariness: r.binariness,
                statuses: r.statuses.iter().map(|s| s.code()).collect(),
            })?;
        }
        if self.records.is_empty() {
            w.write_record(["iteration", "scnr_db", "min_sinr_db", "max_eve_sinr_db", "power_w", "binariness", "statuses"])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }
}

/// Final state of a run with its history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    /// Rounded, refined state.
    pub state: BeamformerState,
    /// Outer-loop history.
    pub trace: IterationTrace,
    /// Metrics of `state`.
    pub metrics: Metrics,
}

const SAFETY_REL: f64 = 1e-4;
const POWER_REL: f64 = 1e-9;
const ASCENT_TOL: f64 = 1e-8;

/// Whether user SINR floors, Eve ceilings and the power budget hold at `state`.
pub fn constraints_hold(channels: &ChannelSet, em_tx: &EmBeamformer, state: &BeamformerState, config: &OptimizerConfig) -> bool {
    let users = (0..channels.num_users()).all(|k| {
        bob_sinr(k, channels, em_tx, state) >= config.eps_bob[k] * (1.0 - SAFETY_REL)
            && eve_sinr(k, channels, em_tx, state) <= config.eps_eve[k] * (1.0 + SAFETY_REL)
    });
    users && transmit_power(state) <= config.power_budget * (1.0 + POWER_REL)
}

fn solve_program(program: &ConicProgram, config: &OptimizerConfig) -> Result<Option<crate::RVec>> {
    let sol = solve(program, config.algorithm.subproblem_tol, config.algorithm.solver_max_iter)?;
    Ok((sol.status == SolveStatus::Optimal).then_some(sol.x))
}

fn ems(dict: &EmDictionary, state: &BeamformerState) -> Result<(EmBeamformer, EmBeamformer)> {
    Ok((assemble_em_beamformer(dict, &state.sel_tx)?, assemble_em_beamformer(dict, &state.sel_rx)?))
}

#[derive(Clone, Copy)]
enum Side {
    Tx,
    Rx,
}

fn selection_step(
    state: &mut BeamformerState,
    channels: &ChannelSet,
    dict: &EmDictionary,
    config: &OptimizerConfig,
    side: Side,
    penalty: f64,
) -> Result<StepStatus> {
    let (p, n) = (dict.num_modes(), channels.n);
    if p == 1 {
        return Ok(StepStatus::Accepted);
    }
    let (program, s0) = match side {
        Side::Tx => (build_sf_subproblem(state, channels, dict, config, penalty)?, state.sel_tx.to_vec()),
        Side::Rx => (build_sw_subproblem(state, channels, dict, config, penalty)?, state.sel_rx.to_vec()),
    };
    let Some(x) = solve_program(&program, config)? else {
        return Ok(StepStatus::SolverFailed);
    };
    let sel = SelectionMatrix::from_solver_vector(p, n, x.as_slice())?;
    if program.objective(&sel.to_vec()) > program.objective(&s0) + ASCENT_TOL {
        return Ok(StepStatus::Rejected);
    }
    let mut candidate = state.clone();
    match side {
        Side::Tx => candidate.sel_tx = sel,
        Side::Rx => candidate.sel_rx = sel,
    }
    let (em_tx, _) = ems(dict, &candidate)?;
    if !constraints_hold(channels, &em_tx, &candidate, config) {
        return Ok(StepStatus::Rejected);
    }
    *state = candidate;
    Ok(StepStatus::Accepted)
}

fn precoder_step(state: &mut BeamformerState, channels: &ChannelSet, dict: &EmDictionary, config: &OptimizerConfig) -> Result<StepStatus> {
    let program = build_fbb_subproblem(state, channels, dict, config)?;
    let Some(x) = solve_program(&program, config)? else {
        return Ok(StepStatus::SolverFailed);
    };
    let x0 = forms::lift_precoder(&state.digital_precoder);
    if program.objective(&x) > program.objective(&x0) + ASCENT_TOL {
        return Ok(StepStatus::Rejected);
    }
    let mut f = unlift_precoder(&x, channels.n);
    let power = f.norm_squared();
    if power > config.power_budget {
        f *= Cx::new((config.power_budget / power).sqrt(), 0.0);
    }
    let candidate = BeamformerState { digital_precoder: f, ..state.clone() };
    let (em_tx, _) = ems(dict, &candidate)?;
    if !constraints_hold(channels, &em_tx, &candidate, config) {
        return Ok(StepStatus::Rejected);
    }
    *state = candidate;
    Ok(StepStatus::Accepted)
}

fn refresh_combiner_and_gamma(state: &mut BeamformerState, channels: &ChannelSet, dict: &EmDictionary, config: &OptimizerConfig) -> Result<f64> {
    let (em_tx, em_rx) = ems(dict, state)?;
    state.digital_combiner = update_wbb(channels, &em_tx, &em_rx, &state.digital_precoder)?;
    state.gamma = update_gamma(channels, &em_tx, &em_rx, &state.digital_precoder, &state.digital_combiner, config.algorithm.gamma_floor);
    Ok(state.gamma)
}

/// Max-slack precoder for fixed `em_tx`; fails when no precoder meets every user constraint.
pub fn feasibility_phase(channels: &ChannelSet, em_tx: &EmBeamformer, config: &OptimizerConfig) -> Result<CMat> {
    config.validate(channels)?;
    let (n, k) = (channels.n, channels.num_users());
    let infeasible = || Error::Infeasible { stage: "feasibility phase".into(), iteration: 0 };
    let mut f = radar_only_precoder(n, k, config.power_budget);
    if k == 0 {
        return Ok(f);
    }
    if !config.finite_thresholds() {
        return Err(infeasible());
    }
    let mut slack: Option<f64> = None;
    let mut best: Option<CMat> = None;
    for _ in 0..config.algorithm.feasibility_rounds {
        let program = build_fbb_feasibility(channels, em_tx, config, &f)?;
        let Some(x) = solve_program(&program, config)? else { break };
        let t = x[x.len() - 1];
        let mut cand = unlift_precoder(&x.rows(0, 2 * n * n).into_owned(), n);
        let power = cand.norm_squared();
        if power > config.power_budget {
            cand *= Cx::new((config.power_budget / power).sqrt(), 0.0);
        }
        let converged = slack.is_some_and(|s| (t - s).abs() <= 1e-6 * s.abs().max(1.0));
        f = cand;
        slack = Some(t);
        if t > 0.0 {
            let probe = BeamformerState {
                sel_tx: SelectionMatrix::one_hot(1, &vec![0; n])?,
                sel_rx: SelectionMatrix::one_hot(1, &vec![0; n])?,
                digital_precoder: f.clone(),
                digital_combiner: crate::CVec::zeros(n),
                gamma: 0.0,
                feasible: false,
            };
            if constraints_hold(channels, em_tx, &probe, config) {
                best = Some(f.clone());
            }
        }
        if converged {
            break;
        }
    }
    best.ok_or_else(infeasible)
}

/// Initial state for given selections: feasibility-phase precoder, optimal combiner, exact `γ`.
pub fn initialize_with_selections(
    channels: &ChannelSet,
    dict: &EmDictionary,
    config: &OptimizerConfig,
    sel_tx: SelectionMatrix,
    sel_rx: SelectionMatrix,
) -> Result<BeamformerState> {
    config.validate(channels)?;
    channels.validate()?;
    let em_tx = assemble_em_beamformer(dict, &sel_tx)?;
    let f = feasibility_phase(channels, &em_tx, config)?;
    let mut state = BeamformerState {
        sel_tx,
        sel_rx,
        digital_precoder: f,
        digital_combiner: crate::CVec::zeros(channels.n),
        gamma: 0.0,
        feasible: true,
    };
    refresh_combiner_and_gamma(&mut state, channels, dict, config)?;
    Ok(state)
}

const INIT_DRAWS: usize = 64;

/// Starting selections per [`InitScheme`] followed by [`initialize_with_selections`].
///
/// An infeasible uniform start falls back to random draws. Random draws whose target response vanishes or whose feasibility phase
/// fails are redrawn a bounded number of times.
pub fn initialize<R: Rng + ?Sized>(channels: &ChannelSet, dict: &EmDictionary, config: &OptimizerConfig, rng: &mut R) -> Result<BeamformerState> {
    let (p, n) = (dict.num_modes(), channels.n);
    if config.algorithm.init == InitScheme::Uniform {
        let sel = SelectionMatrix::relaxed(RMat::from_element(p, n, 1.0 / p as f64))?;
        match initialize_with_selections(channels, dict, config, sel.clone(), sel) {
            Err(Error::Infeasible { .. }) if p > 1 => {}
            other => return other,
        }
    }
    random_initialize(channels, dict, config, rng)
}

/// Random one-hot selections, redrawn while the target response vanishes or
/// the feasibility phase fails.
pub fn random_initialize<R: Rng + ?Sized>(
    channels: &ChannelSet,
    dict: &EmDictionary,
    config: &OptimizerConfig,
    rng: &mut R,
) -> Result<BeamformerState> {
    let (p, n) = (dict.num_modes(), channels.n);
    let draw = |rng: &mut R| SelectionMatrix::one_hot(p, &(0..n).map(|_| rng.gen_range(0..p)).collect::<Vec<_>>());
    let mut last = Err(Error::Infeasible { stage: "feasibility phase".into(), iteration: 0 });
    for _ in 0..INIT_DRAWS {
        let (sel_tx, sel_rx) = (draw(rng)?, draw(rng)?);
        let em_tx = assemble_em_beamformer(dict, &sel_tx)?;
        let em_rx = assemble_em_beamformer(dict, &sel_rx)?;
        if p > 1 && channels.target.radar_matrix(&em_rx, &em_tx).norm() == 0.0 {
            continue;
        }
        last = initialize_with_selections(channels, dict, config, sel_tx, sel_rx);
        match &last {
            Err(Error::Infeasible { .. }) if p > 1 => continue,
            _ => return last,
        }
    }
    last
}

/// Alternates `F_BB → w_BB → γ` under fixed selections until the SCNR settles.
///
/// `state` must satisfy every constraint on entry. Returns the iteration count.
pub fn bb_refine(state: &mut BeamformerState, channels: &ChannelSet, dict: &EmDictionary, config: &OptimizerConfig) -> Result<usize> {
    let mut prev = refresh_combiner_and_gamma(state, channels, dict, config)?;
    for it in 1..=config.algorithm.refine_max_iters {
        precoder_step(state, channels, dict, config)?;
        let scnr = refresh_combiner_and_gamma(state, channels, dict, config)?;
        if (scnr - prev).abs() <= config.algorithm.refine_tol * prev.abs().max(f64::MIN_POSITIVE) {
            return Ok(it);
        }
        prev = scnr;
    }
    Ok(config.algorithm.refine_max_iters)
}

fn record(iteration: usize, state: &BeamformerState, channels: &ChannelSet, dict: &EmDictionary, statuses: [StepStatus; 3]) -> Result<IterationRecord> {
    let m = evaluate(channels, dict, state)?;
    Ok(IterationRecord {
        iteration,
        scnr: m.scnr,
        scnr_db: to_db(m.scnr),
        bob_sinr: m.bob_sinr,
        eve_sinr: m.eve_sinr,
        power: m.power,
        binariness: state.sel_tx.binariness_gap().max(state.sel_rx.binariness_gap()),
        statuses,
    })
}

/// Full alternating optimization followed by rounding and digital refinement.
///
/// After rounding, the digital stage restarts from the feasibility-phase
/// precoder under the rounded selections, so the final state is the same
/// function of the selections that the exhaustive oracle evaluates. With
/// `restarts > 0` and more than one mode, extra random one-hot starts are run
/// and the best feasible outcome is kept; the first start wins ties.
pub fn run<R: Rng + ?Sized>(channels: &ChannelSet, dict: &EmDictionary, config: &OptimizerConfig, rng: &mut R) -> Result<RunOutput> {
    let start = initialize(channels, dict, config, rng)?;
    let mut best = run_from(start, channels, dict, config)?;
    if dict.num_modes() > 1 {
        for _ in 0..config.algorithm.restarts {
            let start = match random_initialize(channels, dict, config, rng) {
                Ok(s) => s,
                Err(Error::Infeasible { .. }) => continue,
                Err(e) => return Err(e),
            };
            let out = run_from(start, channels, dict, config)?;
            let key = |o: &RunOutput| (o.state.feasible, o.metrics.scnr);
            if key(&out) > key(&best) {
                best = out;
            }
        }
    }
    Ok(best)
}

/// Outer loop from a given feasible starting state, then [`finalize`].
pub fn run_from(mut state: BeamformerState, channels: &ChannelSet, dict: &EmDictionary, config: &OptimizerConfig) -> Result<RunOutput> {
    let alg = &config.algorithm;
    let mut trace = IterationTrace::default();
    let mut prev = state.gamma;
    for t in 0..alg.max_outer_iters {
        let sf = selection_step(&mut state, channels, dict, config, Side::Tx, alg.penalty_tx.weight(t))?;
        let sw = selection_step(&mut state, channels, dict, config, Side::Rx, alg.penalty_rx.weight(t))?;
        let fb = precoder_step(&mut state, channels, dict, config)?;
        let scnr = refresh_combiner_and_gamma(&mut state, channels, dict, config)?;
        trace.records.push(record(t + 1, &state, channels, dict, [sf, sw, fb])?);
        if (scnr - prev).abs() < alg.scnr_rel_tol * prev.abs().max(f64::MIN_POSITIVE) {
            trace.converged = true;
            break;
        }
        prev = scnr;
    }
    let state = finalize(&state, channels, dict, config)?;
    let metrics = evaluate(channels, dict, &state)?;
    Ok(RunOutput { state, trace, metrics })
}

/// Rounds the selections and refines the digital beamformers; the result is flagged when infeasible.
pub fn finalize(state: &BeamformerState, channels: &ChannelSet, dict: &EmDictionary, config: &OptimizerConfig) -> Result<BeamformerState> {
    let sel_tx = round_selection(&state.sel_tx);
    let sel_rx = round_selection(&state.sel_rx);
    match initialize_with_selections(channels, dict, config, sel_tx.clone(), sel_rx.clone()) {
        Ok(mut out) => {
            bb_refine(&mut out, channels, dict, config)?;
            let (em_tx, _) = ems(dict, &out)?;
            out.feasible = constraints_hold(channels, &em_tx, &out, config);
            Ok(out)
        }
        Err(Error::Infeasible { .. }) => {
            let mut out = BeamformerState { sel_tx, sel_rx, feasible: false, ..state.clone() };
            refresh_combiner_and_gamma(&mut out, channels, dict, config)?;
            Ok(out)
        }
        Err(e) => Err(e),
    }
}
