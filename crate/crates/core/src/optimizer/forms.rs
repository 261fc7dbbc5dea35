//! Complex linear forms of real decision vectors, and the reductions of every
//! channel quantity into selection space (`vec S`, length `PN`) or precoder
//! space (re/im interleave of `vec F_BB`, length `2N²`).

use crate::channel::{ChannelSet, CompoundChannel};
use crate::em_core::{EmBeamformer, EmDictionary};
use crate::{CMat, CVec, Cx, RMat, RVec};

/// `x ↦ re·x + j im·x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearForm {
    /// Coefficients of the real part.
    pub re: RVec,
    /// Coefficients of the imaginary part.
    pub im: RVec,
}

impl LinearForm {
    /// Zero form over `dim` variables.
    pub fn zeros(dim: usize) -> Self {
        Self { re: RVec::zeros(dim), im: RVec::zeros(dim) }
    }

    /// From complex coefficients `c`, value `Σ c_i x_i`.
    pub fn from_complex(c: &[Cx]) -> Self {
        Self {
            re: RVec::from_iterator(c.len(), c.iter().map(|v| v.re)),
            im: RVec::from_iterator(c.len(), c.iter().map(|v| v.im)),
        }
    }

    /// Value at `x`.
    pub fn eval(&self, x: &RVec) -> Cx {
        Cx::new(self.re.dot(x), self.im.dot(x))
    }

    /// Coefficients of `x ↦ Re{e^{−jφ} (re·x + j im·x)}`.
    pub fn real_part_rotated(&self, phi: f64) -> RVec {
        let (s, c) = phi.sin_cos();
        &self.re * c + &self.im * s
    }

    /// Coefficients of `x ↦ Re{conj(z) · form(x)}`.
    pub fn real_inner(&self, z: Cx) -> RVec {
        &self.re * z.re + &self.im * z.im
    }

    /// `F` rows `[reᵀ; imᵀ]` so that `|form(x)|² = ∥F x∥²`.
    pub fn rows(forms: &[LinearForm], scale: f64) -> RMat {
        let dim = forms.first().map_or(0, |f| f.re.len());
        let mut out = RMat::zeros(2 * forms.len(), dim);
        for (i, f) in forms.iter().enumerate() {
            out.row_mut(2 * i).copy_from(&(f.re.transpose() * scale));
            out.row_mut(2 * i + 1).copy_from(&(f.im.transpose() * scale));
        }
        out
    }

    /// `Σ (re reᵀ + im imᵀ)`, the real kernel of `Σ |form(x)|²`.
    pub fn kernel(forms: &[LinearForm]) -> RMat {
        let f = Self::rows(forms, 1.0);
        f.transpose() * f
    }
}

/// Index of `S[p, n]` in `vec S`.
pub fn sel_index(p: usize, n: usize, num_modes: usize) -> usize {
    n * num_modes + p
}

/// Index of `Re F[i, j]` in the precoder lift; `Im` is the next entry.
pub fn lift_index(i: usize, j: usize, n: usize) -> usize {
    2 * (j * n + i)
}

/// Real lift of `vec F_BB`.
pub fn lift_precoder(f: &CMat) -> RVec {
    let n = f.nrows();
    let mut x = RVec::zeros(2 * n * f.ncols());
    for j in 0..f.ncols() {
        for i in 0..n {
            let b = lift_index(i, j, n);
            x[b] = f[(i, j)].re;
            x[b + 1] = f[(i, j)].im;
        }
    }
    x
}

/// Inverse of [`lift_precoder`] for a square `N × N` precoder.
pub fn unlift_precoder(x: &RVec, n: usize) -> CMat {
    CMat::from_fn(n, n, |i, j| {
        let b = lift_index(i, j, n);
        Cx::new(x[b], x[b + 1])
    })
}

/// Precoder-space form of `g · F[:, j]`.
pub fn precoder_form(g: &CVec, j: usize, n: usize) -> LinearForm {
    let mut f = LinearForm::zeros(2 * n * n);
    for i in 0..n {
        let b = lift_index(i, j, n);
        f.re[b] = g[i].re;
        f.re[b + 1] = -g[i].im;
        f.im[b] = g[i].im;
        f.im[b + 1] = g[i].re;
    }
    f
}

/// Forms `g · F[:, j]` for every column `j`.
pub fn precoder_forms(g: &CVec, n: usize) -> Vec<LinearForm> {
    (0..n).map(|j| precoder_form(g, j, n)).collect()
}

/// Selection-space forms of the user samples `h(S) · f_j` for every stream `j`,
/// given the mode response `R` (`h[n] = Σ_p R[n, p] S[p, n]`).
pub fn user_selection_forms(response: &CMat, precoder: &CMat) -> Vec<LinearForm> {
    let (n, p) = response.shape();
    (0..precoder.ncols())
        .map(|j| {
            let mut c = vec![Cx::new(0.0, 0.0); n * p];
            for i in 0..n {
                for mode in 0..p {
                    c[sel_index(mode, i, p)] = precoder[(i, j)] * response[(i, mode)];
                }
            }
            LinearForm::from_complex(&c)
        })
        .collect()
}

fn gain_vec(g: [f64; 2]) -> nalgebra::Vector2<Cx> {
    nalgebra::Vector2::new(Cx::new(g[0], 0.0), Cx::new(g[1], 0.0))
}

/// Selection-space forms over `S_F` of the radar output `r_j = (wᴴ Wᵀ M F F_BB)_j`.
pub fn radar_tx_forms(
    ch: &CompoundChannel,
    em_rx: &EmBeamformer,
    combiner: &CVec,
    precoder: &CMat,
    dict: &EmDictionary,
) -> Vec<LinearForm> {
    let n = ch.n();
    let p = dict.num_modes();
    let path = &ch.paths()[0];
    let phi = ch.scattering()[0].matrix();
    let idx = path.angle_index;
    // ξᵀ = Σ_n conj(w_n) α a_n gW_nᵀ, then ξᵀ Φ
    let mut xi = nalgebra::RowVector2::<Cx>::zeros();
    for i in 0..n {
        xi += gain_vec(em_rx.angle_gain(i, idx)).transpose() * (combiner[i].conj() * path.spatial(i));
    }
    let xi_phi = xi * phi;
    let mode_coef: Vec<Cx> = (0..p).map(|mode| (xi_phi * gain_vec(dict.angle_gain(mode, idx)))[0]).collect();
    (0..precoder.ncols())
        .map(|j| {
            let mut c = vec![Cx::new(0.0, 0.0); n * p];
            for i in 0..n {
                let s = path.spatial(i).conj() * precoder[(i, j)];
                for mode in 0..p {
                    c[sel_index(mode, i, p)] = s * mode_coef[mode];
                }
            }
            LinearForm::from_complex(&c)
        })
        .collect()
}

/// Selection-space forms over `S_W` of the radar output `r_j`.
pub fn radar_rx_forms(
    ch: &CompoundChannel,
    em_tx: &EmBeamformer,
    combiner: &CVec,
    precoder: &CMat,
    dict: &EmDictionary,
) -> Vec<LinearForm> {
    let n = ch.n();
    let p = dict.num_modes();
    let path = &ch.paths()[0];
    let phi = ch.scattering()[0].matrix();
    let idx = path.angle_index;
    // u_i = conj(α a_i) gF_i, ζ_j = Φ Σ_i u_i F[i, j]
    let u: Vec<nalgebra::Vector2<Cx>> = (0..n).map(|i| gain_vec(em_tx.angle_gain(i, idx)) * path.spatial(i).conj()).collect();
    let modes: Vec<nalgebra::RowVector2<Cx>> = (0..p).map(|mode| gain_vec(dict.angle_gain(mode, idx)).transpose()).collect();
    (0..precoder.ncols())
        .map(|j| {
            let zeta = phi * u.iter().enumerate().fold(nalgebra::Vector2::<Cx>::zeros(), |acc, (i, ui)| acc + ui * precoder[(i, j)]);
            let mut c = vec![Cx::new(0.0, 0.0); n * p];
            for i in 0..n {
                let s = combiner[i].conj() * path.spatial(i);
                for mode in 0..p {
                    c[sel_index(mode, i, p)] = s * (modes[mode] * zeta)[0];
                }
            }
            LinearForm::from_complex(&c)
        })
        .collect()
}

/// Precoder-space forms of the radar output `r_j = g̃ F[:, j]`, `g̃ = wᴴ Wᵀ M F`.
pub fn radar_precoder_forms(ch: &CompoundChannel, em_rx: &EmBeamformer, em_tx: &EmBeamformer, combiner: &CVec) -> Vec<LinearForm> {
    let g = (combiner.adjoint() * ch.radar_matrix(em_rx, em_tx)).transpose();
    precoder_forms(&g, ch.n())
}

/// Effective rows of every Bob and of Eve under `em_tx`.
pub fn user_rows(channels: &ChannelSet, em_tx: &EmBeamformer) -> (Vec<CVec>, CVec) {
    let bobs = channels
        .bobs
        .iter()
        .zip(&channels.bob_polarizations)
        .map(|(ch, pol)| ch.effective_row(*pol, em_tx))
        .collect();
    (bobs, channels.eve.effective_row(channels.eve_polarization, em_tx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::complex_normal;
    use crate::em_core::{assemble_em_beamformer, SelectionMatrix};
    use crate::oracle::random_tiny_channels;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_precoder(rng: &mut ChaCha8Rng, n: usize) -> CMat {
        CMat::from_fn(n, n, |_, _| complex_normal(rng))
    }

    #[test]
    fn lift_round_trip_and_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = random_precoder(&mut rng, 3);
        let x = lift_precoder(&f);
        assert_eq!(unlift_precoder(&x, 3), f);
        let g = CVec::from_fn(3, |_, _| complex_normal(&mut rng));
        let direct = g.transpose() * &f;
        for (j, form) in precoder_forms(&g, 3).iter().enumerate() {
            assert!((form.eval(&x) - direct[j]).norm() < 1e-13);
        }
    }

    #[test]
    fn selection_forms_reproduce_exact_quantities() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let dict = EmDictionary::parametric(8, 2, 2, 4.0, true).unwrap();
        let set = random_tiny_channels(&mut rng, 8, 3, 1, 1);
        let f = random_precoder(&mut rng, 3);
        let w = CVec::from_fn(3, |_, _| complex_normal(&mut rng));
        let stx = SelectionMatrix::one_hot(4, &[0, 3, 1]).unwrap();
        let srx = SelectionMatrix::one_hot(4, &[2, 2, 1]).unwrap();
        let em_tx = assemble_em_beamformer(&dict, &stx).unwrap();
        let em_rx = assemble_em_beamformer(&dict, &srx).unwrap();
        let r_exact = w.adjoint() * set.target.radar_matrix(&em_rx, &em_tx) * &f;

        let tx = radar_tx_forms(&set.target, &em_rx, &w, &f, &dict);
        let rx = radar_rx_forms(&set.target, &em_tx, &w, &f, &dict);
        let pf = radar_precoder_forms(&set.target, &em_rx, &em_tx, &w);
        let xf = lift_precoder(&f);
        for j in 0..3 {
            let scale = r_exact.norm();
            assert!((tx[j].eval(&stx.to_vec()) - r_exact[j]).norm() < 1e-12 * scale);
            assert!((rx[j].eval(&srx.to_vec()) - r_exact[j]).norm() < 1e-12 * scale);
            assert!((pf[j].eval(&xf) - r_exact[j]).norm() < 1e-12 * scale);
        }

        let resp = set.bobs[0].mode_response(set.bob_polarizations[0], &dict);
        let row = set.bobs[0].effective_row(set.bob_polarizations[0], &em_tx);
        let c = row.transpose() * &f;
        for (j, form) in user_selection_forms(&resp, &f).iter().enumerate() {
            assert!((form.eval(&stx.to_vec()) - c[j]).norm() < 1e-12 * c.norm());
        }

        // kernel identity: Σ|form|² = xᵀ K x
        let k = LinearForm::kernel(&tx);
        let s = stx.to_vec();
        let direct: f64 = tx.iter().map(|t| t.eval(&s).norm_sqr()).sum();
        assert!((s.dot(&(&k * &s)) - direct).abs() < 1e-12 * direct);
    }
}
