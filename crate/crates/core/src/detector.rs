//! Monte Carlo energy detector and empirical ROC curves.
//!
//! Each trial draws fresh target and clutter scattering matrices, transmits a
//! block of `CN(0, I)` symbols through the fixed beamformers and averages
//! `|y|²` over the block. Thresholds are empirical quantiles of the H0
//! statistic.

use nalgebra::RowDVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{complex_normal, sample_scattering_matrix, ChannelSet, CompoundChannel, ScatteringModel};
use crate::em_core::{assemble_em_beamformer, EmBeamformer, EmDictionary};
use crate::error::{Error, Result};
use crate::metrics::BeamformerState;
use crate::{CMat, CVec, Cx};

/// One operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Empirical false-alarm rate.
    pub pfa: f64,
    /// Empirical detection rate.
    pub pd: f64,
    /// Threshold on the block-averaged `|y|²`.
    pub threshold: f64,
}

/// Monte Carlo settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RocParams {
    /// Trials per hypothesis.
    pub n_trials: usize,
    /// Requested false-alarm rates.
    pub pfa_grid: Vec<f64>,
    /// Symbols per trial.
    pub block_len: usize,
}

impl Default for RocParams {
    fn default() -> Self {
        Self { n_trials: 100_000, pfa_grid: vec![1e-3, 1e-2, 1e-1, 0.5], block_len: 64 }
    }
}

impl RocParams {
    fn validate(&self) -> Result<()> {
        if self.block_len == 0 || self.pfa_grid.is_empty() {
            return Err(Error::InvalidParameter("block_len and pfa_grid must be non-empty".into()));
        }
        if self.pfa_grid.iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
            return Err(Error::InvalidParameter("pfa values must lie in (0, 1)".into()));
        }
        let min = self.pfa_grid.iter().copied().fold(1.0, f64::min);
        let needed = (10.0 / min).ceil() as usize;
        if self.n_trials < needed {
            return Err(Error::InsufficientTrials { needed, given: self.n_trials });
        }
        Ok(())
    }
}

/// Scattering statistics used to redraw `Φ` every trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatteringModels {
    /// Target model.
    pub target: ScatteringModel,
    /// Clutter model.
    pub clutter: ScatteringModel,
}

/// `ρ[q][q'] = (wᴴ u_q)(v_{q'}ᵀ F)` so that `wᴴ X F = Σ Φ[q][q'] ρ[q][q']`.
struct Projections([[RowDVector<Cx>; 2]; 2]);

impl Projections {
    fn new(ch: &CompoundChannel, em_rx: &EmBeamformer, em_tx: &EmBeamformer, w: &CVec, f: &CMat) -> Self {
        let p = &ch.paths()[0];
        let n = ch.n();
        let idx = p.angle_index;
        let rx: [Cx; 2] = std::array::from_fn(|q| (0..n).map(|i| w[i].conj() * em_rx.angle_gain(i, idx)[q] * p.spatial(i)).sum());
        let tx: [RowDVector<Cx>; 2] = std::array::from_fn(|q| {
            let v = RowDVector::from_fn(n, |_, i| p.spatial(i).conj() * em_tx.angle_gain(i, idx)[q]);
            v * f
        });
        Self(std::array::from_fn(|q| std::array::from_fn(|qq| &tx[qq] * rx[q])))
    }

    fn response<R: Rng + ?Sized>(&self, rng: &mut R, model: &ScatteringModel, out: &mut RowDVector<Cx>) {
        let phi = sample_scattering_matrix(rng, model).entries;
        for q in 0..2 {
            for qq in 0..2 {
                for (o, v) in out.iter_mut().zip(self.0[q][qq].iter()) {
                    *o += phi[q][qq] * v;
                }
            }
        }
    }
}

const CHUNK: usize = 4096;

fn simulate(
    target: Option<&Projections>,
    clutter: &[Projections],
    models: &ScatteringModels,
    noise_std: f64,
    params: &RocParams,
    seed: u64,
    n: usize,
) -> Vec<f64> {
    let chunks = params.n_trials.div_ceil(CHUNK);
    let mut out: Vec<f64> = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let len = CHUNK.min(params.n_trials - c * CHUNK);
            let mut stats = Vec::with_capacity(len);
            let mut r = RowDVector::<Cx>::zeros(n);
            for _ in 0..len {
                r.fill(Cx::new(0.0, 0.0));
                if let Some(t) = target {
                    t.response(&mut rng, &models.target, &mut r);
                }
                for cl in clutter {
                    cl.response(&mut rng, &models.clutter, &mut r);
                }
                let mut energy = 0.0;
                for _ in 0..params.block_len {
                    let mut y = complex_normal(&mut rng) * noise_std;
                    for v in r.iter() {
                        y += v * complex_normal(&mut rng);
                    }
                    energy += y.norm_sqr();
                }
                stats.push(energy / params.block_len as f64);
            }
            stats
        })
        .collect();
    out.shrink_to_fit();
    out
}

/// Empirical ROC of the energy detector for a fixed state.
///
/// H0 and H1 use independent seeds drawn from `rng`; per-chunk streams make
/// the result independent of the thread count.
pub fn roc_curve<R: Rng + ?Sized>(
    state: &BeamformerState,
    channels: &ChannelSet,
    dict: &EmDictionary,
    models: &ScatteringModels,
    params: &RocParams,
    rng: &mut R,
) -> Result<Vec<RocPoint>> {
    params.validate()?;
    let em_tx = assemble_em_beamformer(dict, &state.sel_tx)?;
    let em_rx = assemble_em_beamformer(dict, &state.sel_rx)?;
    let (w, f) = (&state.digital_combiner, &state.digital_precoder);
    let n = channels.n;
    let target = Projections::new(&channels.target, &em_rx, &em_tx, w, f);
    let clutter: Vec<Projections> = channels.clutters.iter().map(|c| Projections::new(c, &em_rx, &em_tx, w, f)).collect();
    let noise_std = (channels.noise.sigma2_radar * w.norm_squared()).sqrt();
    let (seed0, seed1): (u64, u64) = (rng.gen(), rng.gen());
    let mut h0 = simulate(None, &clutter, models, noise_std, params, seed0, n);
    let h1 = simulate(Some(&target), &clutter, models, noise_std, params, seed1, n);
    h0.sort_by(f64::total_cmp);
    let total = h0.len() as f64;
    let mut grid = params.pfa_grid.clone();
    grid.sort_by(f64::total_cmp);
    Ok(grid
        .iter()
        .map(|&pfa| {
            let idx = (((1.0 - pfa) * total).floor() as usize).min(h0.len() - 1);
            let threshold = h0[idx];
            let exceed = |v: &f64| *v > threshold;
            RocPoint {
                pfa: (h0.len() - h0.partition_point(|v| *v <= threshold)) as f64 / total,
                pd: h1.iter().filter(|v| exceed(v)).count() as f64 / h1.len() as f64,
                threshold,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ScatteringMatrix;
    use crate::oracle::random_tiny_channels;
    use crate::optimizer::combiner::update_wbb;
    use crate::em_core::SelectionMatrix;
    use rand_distr::{Distribution, Gamma};

    fn models() -> ScatteringModels {
        let t = ScatteringModel::target(Cx::new(0.5, 0.0)).unwrap();
        ScatteringModels { target: t.clone(), clutter: t }
    }

    fn setup(seed: u64, clutter: usize) -> (ChannelSet, EmDictionary, BeamformerState) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let set = random_tiny_channels(&mut rng, 8, 2, 0, clutter);
        let dict = EmDictionary::parametric(8, 1, 2, 3.0, true).unwrap();
        let sel = SelectionMatrix::one_hot(2, &[1, 1]).unwrap();
        let f = CMat::identity(2, 2) * Cx::new(2.0, 0.0);
        let em = assemble_em_beamformer(&dict, &sel).unwrap();
        let w = update_wbb(&set, &em, &em, &f).unwrap();
        let st = BeamformerState { sel_tx: sel.clone(), sel_rx: sel, digital_precoder: f, digital_combiner: w, gamma: 0.0, feasible: true };
        (set, dict, st)
    }

    fn params(n: usize) -> RocParams {
        RocParams { n_trials: n, pfa_grid: vec![0.01, 0.1, 0.3], block_len: 16 }
    }

    #[test]
    fn rejects_too_few_trials() {
        let (set, dict, st) = setup(1, 0);
        let err = roc_curve(&st, &set, &dict, &models(), &params(500), &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(err, Err(Error::InsufficientTrials { needed: 1000, given: 500 })));
    }

    #[test]
    fn zero_target_gives_diagonal() {
        let (mut set, dict, st) = setup(2, 1);
        set.target = CompoundChannel::target(8, 2, set.target.paths()[0].clone(), ScatteringMatrix::identity()).unwrap();
        let zero = ScatteringModel::target(Cx::new(0.0, 0.0)).unwrap().scaled(0.0).unwrap();
        let m = ScatteringModels { target: zero, clutter: models().clutter };
        let n = 20_000;
        let roc = roc_curve(&st, &set, &dict, &m, &params(n), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        for p in roc {
            let sigma = (p.pfa * (1.0 - p.pfa) / n as f64).sqrt();
            assert!((p.pd - p.pfa).abs() <= 3.0 * sigma * std::f64::consts::SQRT_2 + 1e-12, "{p:?}");
        }
    }

    #[test]
    fn noiseless_limit_detects_everything() {
        let (mut set, dict, st) = setup(3, 0);
        set.noise.sigma2_radar = 0.0;
        let roc = roc_curve(&st, &set, &dict, &models(), &params(2000), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert!(roc.iter().all(|p| p.pd == 1.0), "{roc:?}");
    }

    #[test]
    fn curve_is_monotone_and_deterministic() {
        let (set, dict, st) = setup(4, 1);
        let a = roc_curve(&st, &set, &dict, &models(), &params(5000), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = roc_curve(&st, &set, &dict, &models(), &params(5000), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
        for pair in a.windows(2) {
            assert!(pair[1].pfa >= pair[0].pfa && pair[1].pd >= pair[0].pd);
        }
    }

    /// Reference: conditional on `Φ`, the block average is `(∥r∥² + σ²∥w∥²)·Gamma(B, 1)/B`;
    /// `∥r∥²` is recomputed through `radar_matrix` on a channel rebuilt with the drawn `Φ`.
    #[test]
    fn matches_high_trial_reference() {
        let (set, dict, st) = setup(5, 1);
        let m = models();
        let p = RocParams { n_trials: 100_000, pfa_grid: vec![0.1], block_len: 16 };
        let roc = roc_curve(&st, &set, &dict, &m, &p, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();

        let em_tx = assemble_em_beamformer(&dict, &st.sel_tx).unwrap();
        let em_rx = assemble_em_beamformer(&dict, &st.sel_rx).unwrap();
        let b = p.block_len as f64;
        let gamma = Gamma::new(b, 1.0 / b).unwrap();
        let noise = set.noise.sigma2_radar * st.digital_combiner.norm_squared();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let trials = 1_000_000;
        let draw = |with_target: bool, rng: &mut ChaCha8Rng| {
            let mut s = set.clone();
            let tp = s.target.paths()[0].clone();
            let phi_t = if with_target { sample_scattering_matrix(rng, &m.target) } else { ScatteringMatrix::from_vec4([Cx::new(0.0, 0.0); 4]) };
            s.target = CompoundChannel::target(8, 2, tp, phi_t).unwrap();
            let cp = s.clutters[0].paths()[0].clone();
            s.clutters[0] = CompoundChannel::clutter(8, 2, cp, sample_scattering_matrix(rng, &m.clutter)).unwrap();
            let x_t = s.target.radar_matrix(&em_rx, &em_tx);
            let x_c = s.clutters[0].radar_matrix(&em_rx, &em_tx);
            let r = st.digital_combiner.adjoint() * (x_t + x_c) * &st.digital_precoder;
            (r.norm_squared() + noise) * gamma.sample(rng)
        };
        let mut h0: Vec<f64> = (0..trials).map(|_| draw(false, &mut rng)).collect();
        h0.sort_by(f64::total_cmp);
        let thr = h0[(0.9 * trials as f64) as usize];
        let pd_ref = (0..trials).filter(|_| draw(true, &mut rng) > thr).count() as f64 / trials as f64;
        assert!((roc[0].pd - pd_ref).abs() <= 0.02, "{} vs {pd_ref}", roc[0].pd);
    }
}
