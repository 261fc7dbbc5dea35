//! Convex surrogate programs for the `S_F`, `S_W` and `F_BB` updates.
//!
//! All objectives are the FP form `num − γ·den` with the target term replaced
//! by its tangent minorant at the warm start, negated for minimization and
//! scaled by `1/num⁽ᵗ⁾` so penalty weights are dimensionless. User SINR floors
//! become second-order cones after rotating the desired-stream phase to the
//! real axis; Eve ceilings become convex quadratics after linearizing the
//! interference terms from below.

use crate::channel::ChannelSet;
use crate::conic::{ConicProgram, Constraint, QuadraticKernel};
use crate::em_core::{assemble_em_beamformer, EmBeamformer, EmDictionary};
use crate::error::{Error, Result};
use crate::metrics::BeamformerState;
use crate::{CMat, Cx, RMat, RVec};

use super::forms::{
    lift_precoder, precoder_forms, radar_precoder_forms, radar_rx_forms, radar_tx_forms, sel_index, user_rows,
    user_selection_forms, LinearForm,
};
use super::OptimizerConfig;

/// `g(x) = constant + linearᵀx`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineFunction {
    /// Constant term.
    pub constant: f64,
    /// Gradient.
    pub linear: RVec,
}

impl AffineFunction {
    /// Value at `x`.
    pub fn eval(&self, x: &RVec) -> f64 {
        self.constant + self.linear.dot(x)
    }
}

/// Tangent minorant `x0ᵀKx0 + 2Re{x0ᵀK(x − x0)}` of `x ↦ xᵀKx` for Hermitian PSD `K` and real `x`.
pub fn mm_linearize_quadratic(kernel: &CMat, x0: &RVec) -> AffineFunction {
    let k_re = kernel.map(|v| v.re);
    let k_sym = (&k_re + k_re.transpose()) * 0.5;
    let grad = &k_sym * x0 * 2.0;
    let value = x0.dot(&(&k_sym * x0));
    AffineFunction { constant: value - grad.dot(x0), linear: grad }
}

/// Tangent minorant of `Σ_j |form_j(x)|²` at `x0`.
pub fn mm_linearize_forms(forms: &[LinearForm], x0: &RVec) -> AffineFunction {
    let mut linear = RVec::zeros(x0.len());
    let mut value = 0.0;
    for f in forms {
        let z = f.eval(x0);
        linear += f.real_inner(z) * 2.0;
        value += z.norm_sqr();
    }
    AffineFunction { constant: -value, linear }
}

fn check_gamma(state: &BeamformerState) -> Result<()> {
    if !(state.gamma >= 0.0) {
        return Err(Error::InvalidParameter(format!("γ = {} must be ≥ 0", state.gamma)));
    }
    Ok(())
}

fn check_config(channels: &ChannelSet, config: &OptimizerConfig) -> Result<()> {
    let k = channels.num_users();
    if config.eps_bob.len() != k || config.eps_eve.len() != k {
        return Err(Error::Dimension(format!("thresholds for {k} users required")));
    }
    if config.eps_bob.iter().chain(&config.eps_eve).any(|e| !(e.is_finite() && *e >= 0.0)) {
        return Err(Error::InvalidParameter("SINR thresholds must be finite and ≥ 0".into()));
    }
    Ok(())
}

/// Adds `−κ[2Re Σ conj(r⁰)r(x) − num⁰ − γ(Σ_c |r_c(x)|² + noise)]` and returns `κ`.
fn add_radar_objective(
    prog: &mut ConicProgram,
    target: &[LinearForm],
    clutter: &[LinearForm],
    x0: &RVec,
    gamma: f64,
    noise: f64,
) -> f64 {
    let tangent = mm_linearize_forms(target, x0);
    let num0 = -tangent.constant;
    let den0: f64 = clutter.iter().map(|f| f.eval(x0).norm_sqr()).sum::<f64>() + noise;
    let kappa = if num0 > 0.0 {
        1.0 / num0
    } else if den0 > 0.0 {
        1.0 / den0
    } else {
        1.0
    };
    prog.linear -= &tangent.linear * kappa;
    prog.constant += kappa * num0 + kappa * gamma * noise;
    if gamma > 0.0 && !clutter.is_empty() {
        prog.quad += LinearForm::kernel(clutter) * (kappa * gamma);
    }
    kappa
}

/// `Re{e^{−jφ}c_k}/σ − slack ≥ √ε ∥[c_j/σ]_{j≠k}, 1∥`, with `φ = arg c_k(x0)`.
fn bob_soc(forms: &[LinearForm], k: usize, x0: &RVec, eps: f64, sigma: f64, slack: Option<usize>) -> Constraint {
    let dim = x0.len();
    let phi = {
        let z = forms[k].eval(x0);
        if z.norm() > 0.0 {
            z.arg()
        } else {
            0.0
        }
    };
    let mut c = forms[k].real_part_rotated(phi) / sigma;
    if let Some(t) = slack {
        c[t] = -1.0;
    }
    let others: Vec<LinearForm> = forms.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, f)| f.clone()).collect();
    let root = eps.sqrt();
    let rows = LinearForm::rows(&others, root / sigma);
    let mut a = RMat::zeros(rows.nrows() + 1, dim);
    a.view_mut((0, 0), (rows.nrows(), dim)).copy_from(&rows);
    let mut b = RVec::zeros(rows.nrows() + 1);
    b[rows.nrows()] = root;
    Constraint::SecondOrderCone { a, b, c, d: 0.0 }
}

/// `|e_k(x)|² ≤ ε(Σ_{j≠k} minorant(|e_j|²) + σ²)`, scaled by `1/σ²`.
fn eve_quadratic(forms: &[LinearForm], k: usize, x0: &RVec, eps: f64, sigma2: f64) -> Constraint {
    let others: Vec<LinearForm> = forms.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, f)| f.clone()).collect();
    let tangent = mm_linearize_forms(&others, x0);
    let q = QuadraticKernel::Factor(LinearForm::rows(std::slice::from_ref(&forms[k]), 1.0 / sigma2.sqrt()));
    Constraint::Quadratic {
        q,
        a: -&tangent.linear * (eps / sigma2),
        b: -eps * tangent.constant / sigma2 - eps,
    }
}

fn selection_constraints(prog: &mut ConicProgram, p: usize, n: usize) {
    for i in 0..n {
        let mut a = RVec::zeros(p * n);
        for mode in 0..p {
            a[sel_index(mode, i, p)] = 1.0;
        }
        prog.push(Constraint::LinearEq { a, b: 1.0 });
    }
    prog.push(Constraint::Box { lower: RVec::zeros(p * n), upper: RVec::from_element(p * n, 1.0) });
}

fn add_penalty(prog: &mut ConicProgram, s0: &RVec, weight: f64) {
    prog.linear -= s0.map(|v| 2.0 * v - 1.0) * weight;
}

fn beamformers(state: &BeamformerState, dict: &EmDictionary) -> Result<(EmBeamformer, EmBeamformer)> {
    Ok((assemble_em_beamformer(dict, &state.sel_tx)?, assemble_em_beamformer(dict, &state.sel_rx)?))
}

/// Surrogate over `vec(S_F)`; the warm start is `state.sel_tx`.
pub fn build_sf_subproblem(
    state: &BeamformerState,
    channels: &ChannelSet,
    dict: &EmDictionary,
    config: &OptimizerConfig,
    penalty: f64,
) -> Result<ConicProgram> {
    check_gamma(state)?;
    check_config(channels, config)?;
    let (_, em_rx) = beamformers(state, dict)?;
    let (p, n) = (dict.num_modes(), channels.n);
    let s0 = state.sel_tx.to_vec();
    let (f, w) = (&state.digital_precoder, &state.digital_combiner);
    let mut prog = ConicProgram::new(p * n);
    let target = radar_tx_forms(&channels.target, &em_rx, w, f, dict);
    let clutter: Vec<LinearForm> = channels.clutters.iter().flat_map(|c| radar_tx_forms(c, &em_rx, w, f, dict)).collect();
    add_radar_objective(&mut prog, &target, &clutter, &s0, state.gamma, channels.noise.sigma2_radar * w.norm_squared());
    add_penalty(&mut prog, &s0, penalty);

    let sigma = channels.noise.sigma2_bob.sqrt();
    for k in 0..channels.num_users() {
        let resp = channels.bobs[k].mode_response(channels.bob_polarizations[k], dict);
        let forms = user_selection_forms(&resp, f);
        prog.push(bob_soc(&forms, k, &s0, config.eps_bob[k], sigma, None));
    }
    let eve_forms = user_selection_forms(&channels.eve.mode_response(channels.eve_polarization, dict), f);
    for k in 0..channels.num_users() {
        prog.push(eve_quadratic(&eve_forms, k, &s0, config.eps_eve[k], channels.noise.sigma2_eve));
    }
    selection_constraints(&mut prog, p, n);
    Ok(prog)
}

/// Surrogate over `vec(S_W)`; the receive side only affects the radar.
pub fn build_sw_subproblem(
    state: &BeamformerState,
    channels: &ChannelSet,
    dict: &EmDictionary,
    config: &OptimizerConfig,
    penalty: f64,
) -> Result<ConicProgram> {
    check_gamma(state)?;
    check_config(channels, config)?;
    let (em_tx, _) = beamformers(state, dict)?;
    let (p, n) = (dict.num_modes(), channels.n);
    let s0 = state.sel_rx.to_vec();
    let (f, w) = (&state.digital_precoder, &state.digital_combiner);
    let mut prog = ConicProgram::new(p * n);
    let target = radar_rx_forms(&channels.target, &em_tx, w, f, dict);
    let clutter: Vec<LinearForm> = channels.clutters.iter().flat_map(|c| radar_rx_forms(c, &em_tx, w, f, dict)).collect();
    add_radar_objective(&mut prog, &target, &clutter, &s0, state.gamma, channels.noise.sigma2_radar * w.norm_squared());
    add_penalty(&mut prog, &s0, penalty);
    selection_constraints(&mut prog, p, n);
    Ok(prog)
}

fn pad(forms: Vec<LinearForm>, dim: usize) -> Vec<LinearForm> {
    forms
        .into_iter()
        .map(|f| {
            let mut re = RVec::zeros(dim);
            let mut im = RVec::zeros(dim);
            re.rows_mut(0, f.re.len()).copy_from(&f.re);
            im.rows_mut(0, f.im.len()).copy_from(&f.im);
            LinearForm { re, im }
        })
        .collect()
}

fn add_fbb_constraints(
    prog: &mut ConicProgram,
    channels: &ChannelSet,
    em_tx: &EmBeamformer,
    config: &OptimizerConfig,
    x0: &RVec,
    slack: Option<usize>,
) {
    let n = channels.n;
    let dim = x0.len();
    let (bob_rows, eve_row) = user_rows(channels, em_tx);
    let sigma = channels.noise.sigma2_bob.sqrt();
    for (k, row) in bob_rows.iter().enumerate() {
        let forms = pad(precoder_forms(row, n), dim);
        prog.push(bob_soc(&forms, k, x0, config.eps_bob[k], sigma, slack));
    }
    let eve_forms = pad(precoder_forms(&eve_row, n), dim);
    for k in 0..bob_rows.len() {
        prog.push(eve_quadratic(&eve_forms, k, x0, config.eps_eve[k], channels.noise.sigma2_eve));
    }
    let mut a = RMat::zeros(2 * n * n, dim);
    a.view_mut((0, 0), (2 * n * n, 2 * n * n)).fill_with_identity();
    prog.push(Constraint::SecondOrderCone {
        a: a / config.power_budget.sqrt(),
        b: RVec::zeros(2 * n * n),
        c: RVec::zeros(dim),
        d: 1.0,
    });
}

/// Surrogate over the real lift of `vec(F_BB)`; the warm start is `state.digital_precoder`.
pub fn build_fbb_subproblem(
    state: &BeamformerState,
    channels: &ChannelSet,
    dict: &EmDictionary,
    config: &OptimizerConfig,
) -> Result<ConicProgram> {
    check_gamma(state)?;
    check_config(channels, config)?;
    let (em_tx, em_rx) = beamformers(state, dict)?;
    let n = channels.n;
    if state.digital_precoder.shape() != (n, n) || state.digital_combiner.len() != n {
        return Err(Error::Dimension("precoder must be N × N and combiner length N".into()));
    }
    let x0 = lift_precoder(&state.digital_precoder);
    let w = &state.digital_combiner;
    let mut prog = ConicProgram::new(2 * n * n);
    let target = radar_precoder_forms(&channels.target, &em_rx, &em_tx, w);
    let clutter: Vec<LinearForm> = channels.clutters.iter().flat_map(|c| radar_precoder_forms(c, &em_rx, &em_tx, w)).collect();
    add_radar_objective(&mut prog, &target, &clutter, &x0, state.gamma, channels.noise.sigma2_radar * w.norm_squared());
    add_fbb_constraints(&mut prog, channels, &em_tx, config, &x0, None);
    Ok(prog)
}

/// Upper bound on the feasibility slack, which keeps the program bounded.
const SLACK_CAP: f64 = 1e6;

/// Max-slack program over `[lift(F_BB); t]`: maximize `t` subject to the user
/// cones tightened by `t`, the Eve quadratics and the power budget, all
/// expanded at `precoder0`.
pub fn build_fbb_feasibility(
    channels: &ChannelSet,
    em_tx: &EmBeamformer,
    config: &OptimizerConfig,
    precoder0: &CMat,
) -> Result<ConicProgram> {
    check_config(channels, config)?;
    let n = channels.n;
    let dim = 2 * n * n + 1;
    let mut x0 = RVec::zeros(dim);
    x0.rows_mut(0, 2 * n * n).copy_from(&lift_precoder(precoder0));
    let mut prog = ConicProgram::new(dim);
    prog.linear[dim - 1] = -1.0;
    add_fbb_constraints(&mut prog, channels, em_tx, config, &x0, Some(dim - 1));
    let mut upper = RVec::from_element(dim, f64::INFINITY);
    upper[dim - 1] = SLACK_CAP;
    prog.push(Constraint::Box { lower: RVec::from_element(dim, f64::NEG_INFINITY), upper });
    Ok(prog)
}

/// Precoder with the user columns zeroed and the radar columns set to `√(P_T/N) I`.
pub fn radar_only_precoder(n: usize, k: usize, power: f64) -> CMat {
    let s = (power / n as f64).sqrt();
    CMat::from_fn(n, n, |i, j| if i == j && j >= k { Cx::new(s, 0.0) } else { Cx::new(0.0, 0.0) })
}
