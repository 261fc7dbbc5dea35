//! Brute-force references for tests: exhaustive EM-mode enumeration and
//! dense-matrix metric recomputation on tiny instances.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{
    complex_normal, sample_scattering_matrix, AngleGrid, ChannelSet, CompoundChannel, PropagationPath, RotationMatrix,
    ScatteringModel, DENSE_LIMIT,
};
use crate::em_core::{EmDictionary, PolarizationState, SelectionMatrix};
use crate::error::{Error, Result};
use crate::metrics::{BeamformerState, NoiseModel};
use crate::optimizer::{bb_refine, initialize_with_selections, OptimizerConfig};
use crate::{CMat, Cx, RMat};

/// Largest number of `(S_F, S_W)` pairs the exhaustive search will enumerate.
pub const ENUMERATION_BUDGET: u64 = 10_000;

/// Instance small enough for exhaustive search and dense recomputation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TinyScenario {
    /// Channel realization.
    pub channels: ChannelSet,
    /// Mode dictionary.
    pub dict: EmDictionary,
    /// Thresholds, budget and algorithm knobs.
    pub config: OptimizerConfig,
}

impl TinyScenario {
    /// Checks `N ≤ 2, M ≤ 8, P ≤ 4, K ≤ 1, C ≤ 1, L ≤ 2` and the enumeration budget.
    pub fn new(channels: ChannelSet, dict: EmDictionary, config: OptimizerConfig) -> Result<Self> {
        channels.validate()?;
        config.validate(&channels)?;
        let max_paths = channels.bobs.iter().map(|b| b.paths().len()).max().unwrap_or(0);
        let small = channels.n <= 2
            && channels.m <= 8
            && dict.num_modes() <= 4
            && channels.num_users() <= 1
            && channels.clutters.len() <= 1
            && max_paths <= 2;
        if !small {
            return Err(Error::InvalidParameter("tiny scenario needs N ≤ 2, M ≤ 8, P ≤ 4, K ≤ 1, C ≤ 1, L ≤ 2".into()));
        }
        if dict.m() != channels.m {
            return Err(Error::Dimension("dictionary grid differs from channel grid".into()));
        }
        let pairs = enumeration_size(dict.num_modes(), channels.n);
        if pairs > ENUMERATION_BUDGET {
            return Err(Error::Budget(pairs));
        }
        Ok(Self { channels, dict, config })
    }

    /// Seeded instance with `N = 2, M = 8, K = 1, C = 1`, `P = 3` polarization-only
    /// modes and thresholds loose enough that most selection pairs are feasible.
    pub fn seeded(seed: u64) -> Result<Self> {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let channels = random_tiny_channels(&mut rng, 8, 2, 1, 1);
        let dict = EmDictionary::parametric(8, 1, 3, 4.0, true)?;
        let config = OptimizerConfig { power_budget: 4.0, eps_bob: vec![0.5], eps_eve: vec![2.0], ..OptimizerConfig::default() };
        Self::new(channels, dict, config)
    }
}

fn enumeration_size(p: usize, n: usize) -> u64 {
    (p as u64).checked_pow(2 * n as u32).unwrap_or(u64::MAX)
}

/// Random tiny channels: `m`-point grid, `n` antennas, `k` two-path Bobs, one
/// target (also Eve's path) and `c` clutters, all with `CN(0, 1)` amplitudes.
pub fn random_tiny_channels<R: Rng + ?Sized>(rng: &mut R, m: usize, n: usize, k: usize, c: usize) -> ChannelSet {
    let grid = AngleGrid::new(m).expect("m ≥ 1");
    let model = ScatteringModel::target(Cx::new(0.5, 0.0)).expect("template is PSD");
    let path = |rng: &mut R| {
        let angle = rng.gen_range(0.0..std::f64::consts::PI);
        PropagationPath::new(angle, complex_normal(rng), grid, n).expect("angle in range")
    };
    let bobs = (0..k)
        .map(|_| {
            let paths = vec![path(rng), path(rng)];
            let scattering = vec![sample_scattering_matrix(rng, &model), sample_scattering_matrix(rng, &model)];
            CompoundChannel::bob(m, n, paths, scattering, RotationMatrix::identity()).expect("consistent sizes")
        })
        .collect();
    let tp = path(rng);
    let target = CompoundChannel::target(m, n, tp.clone(), sample_scattering_matrix(rng, &model)).expect("consistent sizes");
    let eve = CompoundChannel::eve(m, n, tp, RotationMatrix::identity()).expect("consistent sizes");
    let clutters = (0..c)
        .map(|_| {
            let p = path(rng);
            CompoundChannel::clutter(m, n, p, sample_scattering_matrix(rng, &model)).expect("consistent sizes")
        })
        .collect();
    ChannelSet {
        m,
        n,
        bobs,
        bob_polarizations: vec![PolarizationState::SLANT_45; k],
        eve,
        eve_polarization: PolarizationState::SLANT_45,
        target,
        clutters,
        noise: NoiseModel { sigma2_bob: 0.3, sigma2_eve: 0.2, sigma2_radar: 0.1 },
    }
}

/// Best selection pair found by enumeration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExhaustiveResult {
    /// Largest refined SCNR (linear).
    pub best_scnr: f64,
    /// Refined state of the best pair.
    pub state: BeamformerState,
    /// Number of pairs whose initialization was feasible.
    pub feasible_pairs: usize,
}

fn decode(mut index: u64, p: usize, n: usize) -> (Vec<usize>, Vec<usize>) {
    let mut digits = Vec::with_capacity(2 * n);
    for _ in 0..2 * n {
        digits.push((index % p as u64) as usize);
        index /= p as u64;
    }
    let rx = digits.split_off(n);
    (digits, rx)
}

/// Enumerates every binary `(S_F, S_W)` pair, refines the digital beamformers
/// for each with the production routine, and returns the best; ties go to the
/// lowest enumeration index.
pub fn exhaustive_em_search(tiny: &TinyScenario) -> Result<ExhaustiveResult> {
    let (p, n) = (tiny.dict.num_modes(), tiny.channels.n);
    let pairs = enumeration_size(p, n);
    if pairs > ENUMERATION_BUDGET {
        return Err(Error::Budget(pairs));
    }
    let evaluated: Vec<Option<(f64, BeamformerState)>> = (0..pairs)
        .into_par_iter()
        .map(|idx| {
            let (tx, rx) = decode(idx, p, n);
            let sel_tx = SelectionMatrix::one_hot(p, &tx)?;
            let sel_rx = SelectionMatrix::one_hot(p, &rx)?;
            match initialize_with_selections(&tiny.channels, &tiny.dict, &tiny.config, sel_tx, sel_rx) {
                Ok(mut state) => {
                    bb_refine(&mut state, &tiny.channels, &tiny.dict, &tiny.config)?;
                    Ok(Some((state.gamma, state)))
                }
                Err(Error::Infeasible { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let feasible_pairs = evaluated.iter().filter(|e| e.is_some()).count();
    let mut best: Option<(f64, BeamformerState)> = None;
    for (scnr, state) in evaluated.into_iter().flatten() {
        if best.as_ref().map_or(true, |(b, _)| scnr > *b) {
            best = Some((scnr, state));
        }
    }
    let (best_scnr, state) = best.ok_or(Error::Infeasible { stage: "exhaustive search".into(), iteration: 0 })?;
    Ok(ExhaustiveResult { best_scnr, state, feasible_pairs })
}

/// Metrics recomputed from dense matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMetrics {
    /// Radar SCNR.
    pub scnr: f64,
    /// Per-user SINR.
    pub bob_sinr: Vec<f64>,
    /// Eve SINR per user stream.
    pub eve_sinr: Vec<f64>,
}

fn dense_em(dict: &EmDictionary, sel: &SelectionMatrix) -> CMat {
    // F_EM = (I_N ⊗ D) blkdiag(s_1..s_N), built literally
    let n = sel.num_antennas();
    let p = dict.num_modes();
    let i_n = RMat::identity(n, n);
    let big = i_n.kronecker(dict.full_dict());
    let mut blk = RMat::zeros(p * n, n);
    for i in 0..n {
        blk.view_mut((i * p, i), (p, 1)).copy_from(&sel.entries().column(i));
    }
    (big * blk).map(|v| Cx::new(v, 0.0))
}

fn dense_sinr(row: &CMat, precoder: &CMat, k: usize, sigma2: f64) -> f64 {
    let c = row * precoder;
    let total: f64 = c.iter().map(|v| v.norm_sqr()).sum();
    let s = c[k].norm_sqr();
    s / (total - s + sigma2)
}

/// Recomputes every metric through dense compound channels; requires `2MN ≤ 256`.
pub fn dense_recompute(channels: &ChannelSet, dict: &EmDictionary, state: &BeamformerState) -> Result<DenseMetrics> {
    let two_mn = 2 * channels.m * channels.n;
    if two_mn > DENSE_LIMIT {
        return Err(Error::TooLarge(two_mn, DENSE_LIMIT));
    }
    let f_em = dense_em(dict, &state.sel_tx);
    let w_em = dense_em(dict, &state.sel_rx);
    let user_row = |ch: &CompoundChannel, pol: PolarizationState| -> Result<CMat> {
        let l = ch.paths().len();
        let p = pol.as_array();
        let sum = CMat::from_fn(1, 2 * l, |_, j| Cx::new(p[j % 2], 0.0));
        Ok(sum * ch.dense()? * &f_em)
    };
    let f = &state.digital_precoder;
    let k = channels.num_users();
    let mut bob_sinr = Vec::with_capacity(k);
    for i in 0..k {
        let row = user_row(&channels.bobs[i], channels.bob_polarizations[i])?;
        bob_sinr.push(dense_sinr(&row, f, i, channels.noise.sigma2_bob));
    }
    let eve_row = user_row(&channels.eve, channels.eve_polarization)?;
    let eve_sinr = (0..k).map(|i| dense_sinr(&eve_row, f, i, channels.noise.sigma2_eve)).collect();
    let w = &state.digital_combiner;
    let response = |ch: &CompoundChannel| -> Result<f64> {
        Ok((w.adjoint() * w_em.transpose() * ch.dense()? * &f_em * f).norm_squared())
    };
    let num = response(&channels.target)?;
    let mut den = channels.noise.sigma2_radar * w.norm_squared();
    for c in &channels.clutters {
        den += response(c)?;
    }
    Ok(DenseMetrics { scnr: if den > 0.0 { num / den } else { 0.0 }, bob_sinr, eve_sinr })
}
