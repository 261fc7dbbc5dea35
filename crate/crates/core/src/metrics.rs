//! Communication SINRs, eavesdropping SINRs, radar SCNR and transmit power.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::em_core::{assemble_em_beamformer, EmBeamformer, EmDictionary, SelectionMatrix};
use crate::error::{Error, Result};
use crate::{dbm_to_watts, CMat, CVec};

/// Receiver noise powers in watts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Noise at each Bob.
    pub sigma2_bob: f64,
    /// Noise at Eve.
    pub sigma2_eve: f64,
    /// Noise per radar receive antenna.
    pub sigma2_radar: f64,
}

impl NoiseModel {
    /// From dBm values.
    pub fn from_dbm(bob: f64, eve: f64, radar: f64) -> Self {
        Self { sigma2_bob: dbm_to_watts(bob), sigma2_eve: dbm_to_watts(eve), sigma2_radar: dbm_to_watts(radar) }
    }

    /// All powers must be positive and finite.
    pub fn validate(&self) -> Result<()> {
        for v in [self.sigma2_bob, self.sigma2_eve, self.sigma2_radar] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter("noise powers must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Joint decision variables plus the FP auxiliary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamformerState {
    /// Transmit mode selection `S_F`.
    pub sel_tx: SelectionMatrix,
    /// Receive mode selection `S_W`.
    pub sel_rx: SelectionMatrix,
    /// `N × N` digital precoder; the first `K` columns serve the users.
    pub digital_precoder: CMat,
    /// Radar combiner `w_BB`.
    pub digital_combiner: CVec,
    /// FP auxiliary `γ ≥ 0`.
    pub gamma: f64,
    /// Whether the state satisfies every constraint.
    pub feasible: bool,
}

/// `|h·f_k|² / (Σ_{j≠k} |h·f_j|² + σ²)` for the effective row `h`.
pub fn stream_sinr(row: &CVec, precoder: &CMat, k: usize, sigma2: f64) -> f64 {
    let c = row.transpose() * precoder;
    let signal = c[k].norm_sqr();
    let interference: f64 = c.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, v)| v.norm_sqr()).sum();
    signal / (interference + sigma2)
}

/// SINR of user `k` (zero-based).
pub fn bob_sinr(k: usize, channels: &ChannelSet, em_tx: &EmBeamformer, state: &BeamformerState) -> f64 {
    let row = channels.bobs[k].effective_row(channels.bob_polarizations[k], em_tx);
    stream_sinr(&row, &state.digital_precoder, k, channels.noise.sigma2_bob)
}

/// SINR at Eve when decoding user `k`'s stream.
pub fn eve_sinr(k: usize, channels: &ChannelSet, em_tx: &EmBeamformer, state: &BeamformerState) -> f64 {
    let row = channels.eve.effective_row(channels.eve_polarization, em_tx);
    stream_sinr(&row, &state.digital_precoder, k, channels.noise.sigma2_eve)
}

/// Numerator and denominator of the radar SCNR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadarTerms {
    /// `wᴴ B₁ w` with `B₁ = X_t X_tᴴ`.
    pub numerator: f64,
    /// `wᴴ B₂ w` with `B₂ = Σ_c X_c X_cᴴ + σ_r² I`.
    pub denominator: f64,
}

impl RadarTerms {
    /// `numerator / denominator`.
    pub fn ratio(&self) -> f64 {
        self.numerator / self.denominator
    }
}

/// Numerator and denominator for an explicit `(F_BB, w_BB)` pair.
pub fn radar_terms_for(
    channels: &ChannelSet,
    em_tx: &EmBeamformer,
    em_rx: &EmBeamformer,
    precoder: &CMat,
    combiner: &CVec,
) -> RadarTerms {
    let response = |x: CMat| (combiner.adjoint() * x * precoder).norm_squared();
    let numerator = response(channels.target.radar_matrix(em_rx, em_tx));
    let clutter: f64 = channels.clutters.iter().map(|c| response(c.radar_matrix(em_rx, em_tx))).sum();
    RadarTerms { numerator, denominator: clutter + channels.noise.sigma2_radar * combiner.norm_squared() }
}

/// Radar SCNR terms of a state.
pub fn radar_terms(channels: &ChannelSet, em_tx: &EmBeamformer, em_rx: &EmBeamformer, state: &BeamformerState) -> RadarTerms {
    radar_terms_for(channels, em_tx, em_rx, &state.digital_precoder, &state.digital_combiner)
}

/// Radar output SCNR; a zero combiner is an error.
pub fn radar_scnr(channels: &ChannelSet, em_tx: &EmBeamformer, em_rx: &EmBeamformer, state: &BeamformerState) -> Result<f64> {
    if state.digital_combiner.norm_squared() == 0.0 {
        return Err(Error::InvalidParameter("zero radar combiner".into()));
    }
    Ok(radar_terms(channels, em_tx, em_rx, state).ratio())
}

/// `∥F_BB∥_F²`.
pub fn transmit_power(state: &BeamformerState) -> f64 {
    state.digital_precoder.norm_squared()
}

/// All reported metrics of one state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Radar SCNR (linear).
    pub scnr: f64,
    /// Per-user SINR (linear).
    pub bob_sinr: Vec<f64>,
    /// Eve SINR per user stream (linear).
    pub eve_sinr: Vec<f64>,
    /// Transmit power in watts.
    pub power: f64,
}

/// Evaluates every metric of `state`.
pub fn evaluate(channels: &ChannelSet, dict: &EmDictionary, state: &BeamformerState) -> Result<Metrics> {
    let em_tx = assemble_em_beamformer(dict, &state.sel_tx)?;
    let em_rx = assemble_em_beamformer(dict, &state.sel_rx)?;
    let k = channels.num_users();
    Ok(Metrics {
        scnr: radar_scnr(channels, &em_tx, &em_rx, state)?,
        bob_sinr: (0..k).map(|i| bob_sinr(i, channels, &em_tx, state)).collect(),
        eve_sinr: (0..k).map(|i| eve_sinr(i, channels, &em_tx, state)).collect(),
        power: transmit_power(state),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{complex_normal, AngleGrid, CompoundChannel, PropagationPath, ScatteringMatrix};
    use crate::oracle::random_tiny_channels;
    use crate::Cx;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> Cx {
        Cx::new(re, 0.0)
    }

    #[test]
    fn single_stream_scalar_sinr() {
        let row = CVec::from_element(1, Cx::from_polar(1.0, 0.7));
        let f = CMat::from_element(1, 1, c(1.0));
        assert!((stream_sinr(&row, &f, 0, 0.1) - 10.0).abs() < 1e-12);
        assert_eq!(stream_sinr(&row, &CMat::zeros(1, 1), 0, 0.1), 0.0);
    }

    #[test]
    fn orthogonal_eve_sees_nothing() {
        let row = CVec::from_vec(vec![c(1.0), c(0.0)]);
        let f = CMat::from_row_slice(2, 2, &[c(0.0), c(0.0), c(1.0), c(2.0)]);
        assert_eq!(stream_sinr(&row, &f, 0, 1e-3), 0.0);
    }

    #[test]
    fn power_is_frobenius_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = CMat::from_fn(8, 8, |_, _| complex_normal(&mut rng));
        let manual: f64 = f.iter().map(|v| v.re * v.re + v.im * v.im).sum();
        let st = |f: CMat| BeamformerState {
            sel_tx: SelectionMatrix::one_hot(1, &[0; 8]).unwrap(),
            sel_rx: SelectionMatrix::one_hot(1, &[0; 8]).unwrap(),
            digital_precoder: f,
            digital_combiner: CVec::from_element(8, c(1.0)),
            gamma: 0.0,
            feasible: true,
        };
        assert!((transmit_power(&st(f)) - manual).abs() < 1e-12 * manual);
        assert_eq!(transmit_power(&st(CMat::identity(8, 8))), 8.0);
        assert_eq!(transmit_power(&st(CMat::zeros(8, 8))), 0.0);
    }

    fn random_state(rng: &mut ChaCha8Rng, p: usize, n: usize) -> BeamformerState {
        let pick = |rng: &mut ChaCha8Rng| (0..n).map(|_| rng.gen_range(0..p)).collect::<Vec<_>>();
        BeamformerState {
            sel_tx: SelectionMatrix::one_hot(p, &pick(rng)).unwrap(),
            sel_rx: SelectionMatrix::one_hot(p, &pick(rng)).unwrap(),
            digital_precoder: CMat::from_fn(n, n, |_, _| complex_normal(rng)),
            digital_combiner: CVec::from_fn(n, |_, _| complex_normal(rng)),
            gamma: 0.0,
            feasible: true,
        }
    }

    #[test]
    fn symbol_level_monte_carlo_sinr() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let dict = EmDictionary::parametric(8, 2, 2, 4.0, true).unwrap();
        let set = random_tiny_channels(&mut rng, 8, 3, 2, 1);
        let st = random_state(&mut rng, 4, 3);
        let em = assemble_em_beamformer(&dict, &st.sel_tx).unwrap();
        let draws = 100_000;
        for (label, row, sigma2, analytic) in [
            ("bob", set.bobs[1].effective_row(set.bob_polarizations[1], &em), set.noise.sigma2_bob, bob_sinr(1, &set, &em, &st)),
            ("eve", set.eve.effective_row(set.eve_polarization, &em), set.noise.sigma2_eve, eve_sinr(1, &set, &em, &st)),
        ] {
            let gains = row.transpose() * &st.digital_precoder;
            let (mut sig, mut other) = (0.0, 0.0);
            for _ in 0..draws {
                let s: Vec<Cx> = (0..3).map(|_| complex_normal(&mut rng)).collect();
                let noise = complex_normal(&mut rng) * sigma2.sqrt();
                sig += (gains[1] * s[1]).norm_sqr();
                other += (gains[0] * s[0] + gains[2] * s[2] + noise).norm_sqr();
            }
            let empirical = sig / other;
            assert!((empirical - analytic).abs() / analytic < 0.02, "{label}: {empirical} vs {analytic}");
        }
    }

    #[test]
    fn scnr_matched_combiner_without_clutter() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let dict = EmDictionary::parametric(8, 2, 2, 4.0, true).unwrap();
        let set = random_tiny_channels(&mut rng, 8, 3, 1, 0);
        let mut st = random_state(&mut rng, 4, 3);
        // rank-one precoder so the target response has a single direction
        let u = CVec::from_fn(3, |_, _| complex_normal(&mut rng));
        st.digital_precoder = &u * u.adjoint();
        let em_tx = assemble_em_beamformer(&dict, &st.sel_tx).unwrap();
        let em_rx = assemble_em_beamformer(&dict, &st.sel_rx).unwrap();
        let x = set.target.radar_matrix(&em_rx, &em_tx) * &st.digital_precoder;
        let svd = x.clone().svd(true, false);
        let (i, smax) = svd.singular_values.iter().enumerate().fold((0, 0.0), |b, (i, &s)| if s > b.1 { (i, s) } else { b });
        st.digital_combiner = svd.u.unwrap().column(i).into_owned();
        let scnr = radar_scnr(&set, &em_tx, &em_rx, &st).unwrap();
        let want = x.norm_squared() / set.noise.sigma2_radar;
        assert!((scnr - want).abs() < 1e-10 * want);
        assert!((scnr - smax * smax / set.noise.sigma2_radar).abs() < 1e-10 * want);

        let base = scnr;
        st.digital_precoder *= c(2f64.sqrt());
        let doubled = radar_scnr(&set, &em_tx, &em_rx, &st).unwrap();
        assert!((doubled - 2.0 * base).abs() < 1e-10 * base);
    }

    #[test]
    fn invariances() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let dict = EmDictionary::parametric(8, 2, 2, 4.0, true).unwrap();
        let set = random_tiny_channels(&mut rng, 8, 3, 2, 1);
        let st = random_state(&mut rng, 4, 3);
        let em_tx = assemble_em_beamformer(&dict, &st.sel_tx).unwrap();
        let em_rx = assemble_em_beamformer(&dict, &st.sel_rx).unwrap();
        let base = evaluate(&set, &dict, &st).unwrap();

        let mut rot = st.clone();
        let ph = Cx::from_polar(1.0, 1.3);
        for v in rot.digital_precoder.column_mut(1).iter_mut() {
            *v *= ph;
        }
        let r = evaluate(&set, &dict, &rot).unwrap();
        assert!((r.scnr - base.scnr).abs() < 1e-12 * base.scnr);
        for k in 0..2 {
            assert!((r.bob_sinr[k] - base.bob_sinr[k]).abs() < 1e-12 * base.bob_sinr[k]);
            assert!((r.eve_sinr[k] - base.eve_sinr[k]).abs() < 1e-12 * base.eve_sinr[k]);
        }

        let mut scaled = st.clone();
        scaled.digital_combiner *= Cx::new(-3.0, 0.4);
        let s = radar_scnr(&set, &em_tx, &em_rx, &scaled).unwrap();
        assert!((s - base.scnr).abs() < 1e-12 * base.scnr);

        let mut noisier = set.clone();
        noisier.noise.sigma2_bob *= 2.0;
        assert!(bob_sinr(0, &noisier, &em_tx, &st) <= bob_sinr(0, &set, &em_tx, &st));

        let mut zero = st.clone();
        zero.digital_combiner.fill(c(0.0));
        assert!(radar_scnr(&set, &em_tx, &em_rx, &zero).is_err());
    }

    #[test]
    fn identity_scattering_target_response() {
        // M=1, N=1, identity scattering: X = |α|² gᵀg, hand-computable
        let grid = AngleGrid::new(1).unwrap();
        let p = PropagationPath::new(0.0, c(0.5), grid, 1).unwrap();
        let target = CompoundChannel::target(1, 1, p, ScatteringMatrix::identity()).unwrap();
        let dict = EmDictionary::parametric(1, 1, 1, 4.0, true).unwrap();
        let em = assemble_em_beamformer(&dict, &SelectionMatrix::one_hot(1, &[0]).unwrap()).unwrap();
        let x = target.radar_matrix(&em, &em);
        assert!((x[(0, 0)] - c(0.25)).norm() < 1e-15);
    }
}
