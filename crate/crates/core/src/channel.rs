//! Compound channels in factored form.
//!
//! Every link is a product of a virtual angular index map `H̄_A` (which grid
//! angle each path leaves at), a spatial map `H̄_S` (path amplitude times ULA
//! steering), per-path depolarization `Φ`, and for user links a polarization
//! rotation `Q`:
//!
//! - Bob:            `M_k = Q̄ Φ̄ H̄_Sᴴ H̄_Aᴴ`              (2L × 2MN)
//! - Eve:            `M_e = Q H̄_Sᴴ H̄_Aᴴ`                 (2 × 2MN)
//! - target/clutter: `M = H̄_A H̄_S Φ H̄_Sᴴ H̄_Aᴴ`          (2MN × 2MN)
//!
//! Rows/columns of the `2MN` side are ordered `(n·M + m)·2 + q`: antenna `n`,
//! grid angle `m`, polarization `q`. The dense matrices exist only for tests;
//! all production code applies the factors directly.

use nalgebra::{Matrix2, Matrix4, Vector4};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::em_core::{EmBeamformer, EmDictionary, PolarizationState};
use crate::error::{Error, Result};
use crate::metrics::NoiseModel;
use crate::{CMat, CVec, Cx};

use std::f64::consts::PI;

/// Largest `2MN` for which dense materialization is allowed.
pub const DENSE_LIMIT: usize = 256;

/// Uniform grid of `M` angles `mπ/M` on `[0, π)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AngleGrid {
    m: usize,
}

impl AngleGrid {
    /// Grid with `m ≥ 1` samples.
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter("angle grid needs M ≥ 1".into()));
        }
        Ok(Self { m })
    }

    /// Number of samples.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Grid spacing `π/M`.
    pub fn spacing(&self) -> f64 {
        PI / self.m as f64
    }

    /// Angle of sample `i`.
    pub fn angle(&self, i: usize) -> f64 {
        i as f64 * self.spacing()
    }

    /// All sample angles.
    pub fn samples(&self) -> Vec<f64> {
        (0..self.m).map(|i| self.angle(i)).collect()
    }
}

/// Nearest grid index to `theta`; exact midpoints go to the lower index.
pub fn quantize_angle(theta: f64, grid: AngleGrid) -> Result<usize> {
    if !(0.0..PI).contains(&theta) {
        return Err(Error::InvalidParameter(format!("angle {theta} outside [0, π)")));
    }
    let t = theta / grid.spacing();
    let lower = t.floor();
    let idx = if t - lower > 0.5 { lower as usize + 1 } else { lower as usize };
    Ok(idx.min(grid.m() - 1))
}

/// Half-wavelength ULA response, entry `n` = `exp(jπ n cos θ)`.
pub fn steering_vector(theta: f64, n: usize) -> CVec {
    let phase = PI * theta.cos();
    CVec::from_fn(n, |i, _| Cx::from_polar(1.0, phase * i as f64))
}

/// `10^(−C0/10) · (r/D0)^(−κ)`.
pub fn path_loss(r: f64, kappa: f64, c0_db: f64, d0: f64) -> Result<f64> {
    if !(r > 0.0) || !(d0 > 0.0) {
        return Err(Error::InvalidParameter(format!("path loss needs r > 0 and D0 > 0 (r = {r}, D0 = {d0})")));
    }
    Ok(10f64.powf(-c0_db / 10.0) * (r / d0).powf(-kappa))
}

/// Path-loss law parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathLossModel {
    /// Attenuation exponent κ.
    pub kappa: f64,
    /// Reference loss C0 in dB.
    pub c0_db: f64,
    /// Reference distance D0 in meters.
    pub d0_m: f64,
}

impl Default for PathLossModel {
    fn default() -> Self {
        Self { kappa: 2.5, c0_db: 30.0, d0_m: 1.0 }
    }
}

impl PathLossModel {
    /// Field amplitude at distance `r`: the square root of the power loss.
    pub fn amplitude(&self, r: f64) -> Result<f64> {
        Ok(path_loss(r, self.kappa, self.c0_db, self.d0_m)?.sqrt())
    }
}

/// One propagation path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationPath {
    /// Departure angle in radians.
    pub angle: f64,
    /// Nearest grid index of `angle`.
    pub angle_index: usize,
    /// Complex amplitude including path loss.
    pub amplitude: Cx,
    /// ULA steering vector at `angle`.
    pub steering: Vec<Cx>,
}

impl PropagationPath {
    /// Builds the path, quantizing the angle and computing the steering vector.
    pub fn new(angle: f64, amplitude: Cx, grid: AngleGrid, n: usize) -> Result<Self> {
        Ok(Self {
            angle,
            angle_index: quantize_angle(angle, grid)?,
            amplitude,
            steering: steering_vector(angle, n).iter().copied().collect(),
        })
    }

    /// `α · a[n]`, the spatial coefficient of antenna `n`.
    pub fn spatial(&self, n: usize) -> Cx {
        self.amplitude * self.steering[n]
    }
}

/// 2×2 depolarization matrix `[[HH, HV], [VH, VV]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatteringMatrix {
    /// Row = received polarization, column = transmitted polarization.
    pub entries: [[Cx; 2]; 2],
}

impl ScatteringMatrix {
    /// Identity (no depolarization).
    pub fn identity() -> Self {
        let (o, z) = (Cx::new(1.0, 0.0), Cx::new(0.0, 0.0));
        Self { entries: [[o, z], [z, o]] }
    }

    /// From the 4-vector `[HH, HV, VH, VV]`.
    pub fn from_vec4(v: [Cx; 4]) -> Self {
        Self { entries: [[v[0], v[1]], [v[2], v[3]]] }
    }

    /// `[HH, HV, VH, VV]`.
    pub fn to_vec4(&self) -> [Cx; 4] {
        [self.entries[0][0], self.entries[0][1], self.entries[1][0], self.entries[1][1]]
    }

    /// As a nalgebra matrix.
    pub fn matrix(&self) -> Matrix2<Cx> {
        Matrix2::new(self.entries[0][0], self.entries[0][1], self.entries[1][0], self.entries[1][1])
    }
}

/// 2×2 orthonormal polarization rotation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationMatrix {
    /// Row-major entries.
    pub entries: [[f64; 2]; 2],
}

impl RotationMatrix {
    /// No rotation.
    pub fn identity() -> Self {
        Self { entries: [[1.0, 0.0], [0.0, 1.0]] }
    }

    /// Planar rotation by `angle` radians.
    pub fn from_angle(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self { entries: [[c, -s], [s, c]] }
    }

    /// Checks `QᵀQ = I` within 1e-12.
    pub fn validate(&self) -> Result<()> {
        let q = self.matrix();
        if (q.transpose() * q - Matrix2::identity()).amax() > 1e-12 {
            return Err(Error::InvalidParameter("rotation matrix is not orthonormal".into()));
        }
        Ok(())
    }

    /// As a nalgebra matrix.
    pub fn matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.entries[0][0], self.entries[0][1], self.entries[1][0], self.entries[1][1])
    }
}

/// Zero-mean circular complex Gaussian model for `[HH, HV, VH, VV]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScatteringModelDoc", into = "ScatteringModelDoc")]
pub struct ScatteringModel {
    covariance: Matrix4<Cx>,
    epsilon: Cx,
    factor: Matrix4<Cx>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScatteringModelDoc {
    covariance: [[Cx; 4]; 4],
    epsilon: Cx,
}

impl From<ScatteringModel> for ScatteringModelDoc {
    fn from(m: ScatteringModel) -> Self {
        let mut covariance = [[Cx::new(0.0, 0.0); 4]; 4];
        for (i, row) in covariance.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = m.covariance[(i, j)];
            }
        }
        Self { covariance, epsilon: m.epsilon }
    }
}

impl TryFrom<ScatteringModelDoc> for ScatteringModel {
    type Error = Error;
    fn try_from(doc: ScatteringModelDoc) -> Result<Self> {
        ScatteringModel::new(Matrix4::from_fn(|i, j| doc.covariance[i][j]), doc.epsilon)
    }
}

/// Minimum eigenvalue tolerated by the PSD check.
pub const PSD_TOL: f64 = -1e-10;

impl ScatteringModel {
    /// Validates Hermitian symmetry and PSD-ness and caches a square-root factor.
    pub fn new(covariance: Matrix4<Cx>, epsilon: Cx) -> Result<Self> {
        if covariance.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::NotPsd("non-finite entry".into()));
        }
        if (covariance - covariance.adjoint()).camax() > 1e-12 {
            return Err(Error::NotPsd("not Hermitian".into()));
        }
        let eig = covariance.symmetric_eigen();
        let min = eig.eigenvalues.min();
        if min < PSD_TOL {
            return Err(Error::NotPsd(format!("minimum eigenvalue {min}")));
        }
        let mut factor = eig.eigenvectors;
        for (j, lam) in eig.eigenvalues.iter().enumerate() {
            let s = lam.max(0.0).sqrt();
            factor.column_mut(j).scale_mut(s);
        }
        Ok(Self { covariance, epsilon, factor })
    }

    /// Target/Eve template `Σ_t(ε)` with diagonal (0.1, 0.3, 0.1, 1).
    pub fn target(epsilon: Cx) -> Result<Self> {
        let e = epsilon;
        let r = |v: f64| Cx::new(v, 0.0);
        let upper = [
            [r(0.1), e * 0.06, e * 0.05, e * 0.04],
            [r(0.0), r(0.3), e * 0.03, e * 0.03],
            [r(0.0), r(0.0), r(0.1), e * 0.03],
            [r(0.0), r(0.0), r(0.0), r(1.0)],
        ];
        let cov = Matrix4::from_fn(|i, j| if i <= j { upper[i][j] } else { upper[j][i].conj() });
        Self::new(cov, epsilon)
    }

    /// Diagonal cross-polar model `diag(1, x, x, 1)` with `x` the linear XPD ratio.
    pub fn cross_polar(xpd_ratio: f64) -> Result<Self> {
        let d = Vector4::new(1.0, xpd_ratio, xpd_ratio, 1.0).map(|v| Cx::new(v, 0.0));
        Self::new(Matrix4::from_diagonal(&d), Cx::new(0.0, 0.0))
    }

    /// Model with every covariance entry multiplied by `scale ≥ 0`.
    pub fn scaled(&self, scale: f64) -> Result<Self> {
        if !(scale >= 0.0) {
            return Err(Error::InvalidParameter("covariance scale must be ≥ 0".into()));
        }
        Self::new(self.covariance * Cx::new(scale, 0.0), self.epsilon)
    }

    /// 4×4 covariance of `[HH, HV, VH, VV]`.
    pub fn covariance(&self) -> &Matrix4<Cx> {
        &self.covariance
    }

    /// Off-diagonal template parameter.
    pub fn epsilon(&self) -> Cx {
        self.epsilon
    }
}

/// Draws one `CN(0, 1)` scalar.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Cx {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Cx::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Draws `Φ` with `vec4(Φ) ~ CN(0, Σ)` via the cached eigen factor.
pub fn sample_scattering_matrix<R: Rng + ?Sized>(rng: &mut R, model: &ScatteringModel) -> ScatteringMatrix {
    let z = Vector4::from_fn(|_, _| complex_normal(rng));
    let x = model.factor * z;
    ScatteringMatrix::from_vec4([x[0], x[1], x[2], x[3]])
}

/// Which link a compound channel describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    /// Legitimate user.
    Bob,
    /// Eavesdropper (co-located with the target).
    Eve,
    /// Radar target round trip.
    Target,
    /// Clutter round trip.
    Clutter,
}

/// Factored compound channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompoundChannel {
    kind: ChannelKind,
    m: usize,
    n: usize,
    paths: Vec<PropagationPath>,
    scattering: Vec<ScatteringMatrix>,
    rotation: RotationMatrix,
}

impl CompoundChannel {
    fn build(
        kind: ChannelKind,
        m: usize,
        n: usize,
        paths: Vec<PropagationPath>,
        scattering: Vec<ScatteringMatrix>,
        rotation: RotationMatrix,
    ) -> Result<Self> {
        let ch = Self { kind, m, n, paths, scattering, rotation };
        ch.validate()?;
        Ok(ch)
    }

    /// Bob channel `Q̄ Φ̄ H̄_Sᴴ H̄_Aᴴ` with one scattering matrix per path.
    pub fn bob(m: usize, n: usize, paths: Vec<PropagationPath>, scattering: Vec<ScatteringMatrix>, rotation: RotationMatrix) -> Result<Self> {
        Self::build(ChannelKind::Bob, m, n, paths, scattering, rotation)
    }

    /// Eve channel `Q H̄_Sᴴ H̄_Aᴴ` over the single path to the target location.
    pub fn eve(m: usize, n: usize, path: PropagationPath, rotation: RotationMatrix) -> Result<Self> {
        Self::build(ChannelKind::Eve, m, n, vec![path], vec![ScatteringMatrix::identity()], rotation)
    }

    /// Target round trip `H̄_A H̄_S Φ H̄_Sᴴ H̄_Aᴴ`.
    pub fn target(m: usize, n: usize, path: PropagationPath, scattering: ScatteringMatrix) -> Result<Self> {
        Self::build(ChannelKind::Target, m, n, vec![path], vec![scattering], RotationMatrix::identity())
    }

    /// Clutter round trip, same structure as the target.
    pub fn clutter(m: usize, n: usize, path: PropagationPath, scattering: ScatteringMatrix) -> Result<Self> {
        Self::build(ChannelKind::Clutter, m, n, vec![path], vec![scattering], RotationMatrix::identity())
    }

    /// Checks factor dimensions against `(M, N, L)`.
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 || self.paths.is_empty() {
            return Err(Error::Dimension("compound channel needs M, N, L ≥ 1".into()));
        }
        if self.scattering.len() != self.paths.len() {
            return Err(Error::Dimension(format!(
                "{} scattering blocks for {} paths",
                self.scattering.len(),
                self.paths.len()
            )));
        }
        if !matches!(self.kind, ChannelKind::Bob) && self.paths.len() != 1 {
            return Err(Error::Dimension("eve/target/clutter channels have exactly one path".into()));
        }
        for p in &self.paths {
            if p.angle_index >= self.m || p.steering.len() != self.n {
                return Err(Error::Dimension("path factor inconsistent with (M, N)".into()));
            }
        }
        self.rotation.validate()
    }

    /// Link type.
    pub fn kind(&self) -> ChannelKind {
        self.kind
    }

    /// Number of grid angles.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of antennas.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Propagation paths.
    pub fn paths(&self) -> &[PropagationPath] {
        &self.paths
    }

    /// Per-path scattering blocks.
    pub fn scattering(&self) -> &[ScatteringMatrix] {
        &self.scattering
    }

    /// Polarization rotation.
    pub fn rotation(&self) -> &RotationMatrix {
        &self.rotation
    }

    /// Logical dense dimensions (rows, cols).
    pub fn dims(&self) -> (usize, usize) {
        let cols = 2 * self.m * self.n;
        match self.kind {
            ChannelKind::Bob | ChannelKind::Eve => (2 * self.paths.len(), cols),
            ChannelKind::Target | ChannelKind::Clutter => (cols, cols),
        }
    }

    fn is_round_trip(&self) -> bool {
        matches!(self.kind, ChannelKind::Target | ChannelKind::Clutter)
    }

    /// Per-path 2×2 block `Q Φ_l` applied after the spatial combination.
    fn path_block(&self, l: usize) -> Matrix2<Cx> {
        if self.is_round_trip() {
            self.scattering[l].matrix()
        } else {
            self.rotation.matrix().map(|v| Cx::new(v, 0.0)) * self.scattering[l].matrix()
        }
    }

    /// `z_l = Σ_n conj(α_l a_l[n]) x[(n, idx_l, ·)]`, i.e. `H̄_Sᴴ H̄_Aᴴ x` per path.
    fn gather(&self, x: &CVec, l: usize) -> [Cx; 2] {
        let p = &self.paths[l];
        let mut z = [Cx::new(0.0, 0.0); 2];
        for n in 0..self.n {
            let c = p.spatial(n).conj();
            let base = (n * self.m + p.angle_index) * 2;
            z[0] += c * x[base];
            z[1] += c * x[base + 1];
        }
        z
    }

    /// Factored `M x`.
    pub fn apply(&self, x: &CVec) -> Result<CVec> {
        let (rows, cols) = self.dims();
        if x.len() != cols {
            return Err(Error::Dimension(format!("apply: expected length {cols}, got {}", x.len())));
        }
        let mut out = CVec::zeros(rows);
        for l in 0..self.paths.len() {
            let z = self.gather(x, l);
            let u = self.path_block(l) * nalgebra::Vector2::new(z[0], z[1]);
            if self.is_round_trip() {
                let p = &self.paths[l];
                for n in 0..self.n {
                    let s = p.spatial(n);
                    let base = (n * self.m + p.angle_index) * 2;
                    out[base] += s * u[0];
                    out[base + 1] += s * u[1];
                }
            } else {
                out[2 * l] = u[0];
                out[2 * l + 1] = u[1];
            }
        }
        Ok(out)
    }

    /// Factored `Mᴴ y`.
    pub fn apply_adjoint(&self, y: &CVec) -> Result<CVec> {
        let (rows, cols) = self.dims();
        if y.len() != rows {
            return Err(Error::Dimension(format!("adjoint: expected length {rows}, got {}", y.len())));
        }
        let mut out = CVec::zeros(cols);
        for l in 0..self.paths.len() {
            let v = if self.is_round_trip() {
                let z = self.gather(y, l);
                self.path_block(l).adjoint() * nalgebra::Vector2::new(z[0], z[1])
            } else {
                self.path_block(l).adjoint() * nalgebra::Vector2::new(y[2 * l], y[2 * l + 1])
            };
            let p = &self.paths[l];
            for n in 0..self.n {
                let s = p.spatial(n);
                let base = (n * self.m + p.angle_index) * 2;
                out[base] += s * v[0];
                out[base + 1] += s * v[1];
            }
        }
        Ok(out)
    }

    /// Per-path receive weights `w_lᵀ = pᵀ Q Φ_l` for a user link.
    pub fn path_weights(&self, pol: PolarizationState) -> Vec<[Cx; 2]> {
        let p = nalgebra::RowVector2::new(Cx::new(pol.h_gain, 0.0), Cx::new(pol.v_gain, 0.0));
        (0..self.paths.len())
            .map(|l| {
                let w = p * self.path_block(l);
                [w[0], w[1]]
            })
            .collect()
    }

    /// Effective user row `h[n] = Σ_l conj(α_l a_l[n]) pᵀ Q Φ_l g_{n,l}`, so the
    /// received sample for stream `f` is `h · f`.
    pub fn effective_row(&self, pol: PolarizationState, em: &EmBeamformer) -> CVec {
        let weights = self.path_weights(pol);
        CVec::from_fn(self.n, |n, _| {
            let mut acc = Cx::new(0.0, 0.0);
            for (l, p) in self.paths.iter().enumerate() {
                let g = em.angle_gain(n, p.angle_index);
                acc += p.spatial(n).conj() * (weights[l][0] * g[0] + weights[l][1] * g[1]);
            }
            acc
        })
    }

    /// `N × P` mode response `R[n, p]`, with `h[n] = Σ_p R[n, p] s[p, n]`.
    pub fn mode_response(&self, pol: PolarizationState, dict: &EmDictionary) -> CMat {
        let weights = self.path_weights(pol);
        CMat::from_fn(self.n, dict.num_modes(), |n, mode| {
            let mut acc = Cx::new(0.0, 0.0);
            for (l, p) in self.paths.iter().enumerate() {
                let g = dict.angle_gain(mode, p.angle_index);
                acc += p.spatial(n).conj() * (weights[l][0] * g[0] + weights[l][1] * g[1]);
            }
            acc
        })
    }

    /// `W_EMᵀ M F_EM` (N × N) for a round-trip channel.
    pub fn radar_matrix(&self, em_rx: &EmBeamformer, em_tx: &EmBeamformer) -> CMat {
        debug_assert!(self.is_round_trip());
        let p = &self.paths[0];
        let phi = self.scattering[0].matrix();
        let idx = p.angle_index;
        let left: Vec<nalgebra::RowVector2<Cx>> = (0..self.n)
            .map(|n| {
                let g = em_rx.angle_gain(n, idx);
                nalgebra::RowVector2::new(Cx::new(g[0], 0.0), Cx::new(g[1], 0.0)) * phi * p.spatial(n)
            })
            .collect();
        CMat::from_fn(self.n, self.n, |n, i| {
            let g = em_tx.angle_gain(i, idx);
            p.spatial(i).conj() * (left[n][0] * g[0] + left[n][1] * g[1])
        })
    }

    /// Dense materialization by literal factor products; test scale only.
    pub fn dense(&self) -> Result<CMat> {
        let two_mn = 2 * self.m * self.n;
        if two_mn > DENSE_LIMIT {
            return Err(Error::TooLarge(two_mn, DENSE_LIMIT));
        }
        let (m, n, l) = (self.m, self.n, self.paths.len());
        let one = Cx::new(1.0, 0.0);
        let i2 = CMat::identity(2, 2);
        // H_A: M × L one-hot columns; H̄_A = (I_N ⊗ H_A) ⊗ I_2.
        let mut h_a = CMat::zeros(m, l);
        for (j, p) in self.paths.iter().enumerate() {
            h_a[(p.angle_index, j)] = one;
        }
        let h_a_bar = CMat::identity(n, n).kronecker(&h_a).kronecker(&i2);
        // H_S: N × L; H̄_S = diag(vec(H_Sᵀ)) (1_N ⊗ I_L) ⊗ I_2.
        let h_s = CMat::from_fn(n, l, |i, j| self.paths[j].spatial(i));
        let vec_hs_t = CVec::from_column_slice(h_s.transpose().as_slice());
        let ones_n = CMat::from_element(n, 1, one);
        let h_s_bar = (CMat::from_diagonal(&vec_hs_t) * ones_n.kronecker(&CMat::identity(l, l))).kronecker(&i2);
        let mut phi_bar = CMat::zeros(2 * l, 2 * l);
        for (j, s) in self.scattering.iter().enumerate() {
            phi_bar.view_mut((2 * j, 2 * j), (2, 2)).copy_from(&s.matrix());
        }
        let q = CMat::from_fn(2, 2, |i, j| Cx::new(self.rotation.entries[i][j], 0.0));
        let q_bar = CMat::identity(l, l).kronecker(&q);
        let inner = h_s_bar.adjoint() * h_a_bar.adjoint();
        Ok(match self.kind {
            ChannelKind::Bob => q_bar * phi_bar * inner,
            ChannelKind::Eve => q_bar * inner,
            ChannelKind::Target | ChannelKind::Clutter => &h_a_bar * &h_s_bar * phi_bar * inner,
        })
    }
}

/// Polar position relative to the base station.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    /// Azimuth in radians, in `[0, π)`.
    pub angle: f64,
    /// Distance in meters.
    pub distance: f64,
}

/// Statistical description of the multipath Bob links.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BobChannelModel {
    /// Path-loss law.
    pub path_loss: PathLossModel,
    /// Per-path depolarization statistics.
    pub scattering: ScatteringModel,
    /// Polarization rotation.
    pub rotation: RotationMatrix,
    /// Extra power loss of each scatter path, in dB.
    pub scatter_loss_db: f64,
    /// Scatter path length as a multiple of the direct distance, drawn uniformly in this range.
    pub scatter_length_factor: (f64, f64),
    /// Angular sector `[lo, hi]` in radians for scatter paths.
    pub sector: (f64, f64),
}

/// Bob link with `L` paths: the first leaves at the true geometric angle, the
/// rest at uniform angles in the sector. Every path has a uniform random phase.
pub fn generate_bob_channel<R: Rng + ?Sized>(
    rng: &mut R,
    position: Position,
    l: usize,
    grid: AngleGrid,
    n: usize,
    model: &BobChannelModel,
) -> Result<CompoundChannel> {
    if l == 0 {
        return Err(Error::InvalidParameter("L must be ≥ 1".into()));
    }
    let mut paths = Vec::with_capacity(l);
    let mut scattering = Vec::with_capacity(l);
    for i in 0..l {
        let (angle, dist, extra) = if i == 0 {
            (position.angle, position.distance, 1.0)
        } else {
            let angle = rng.gen_range(model.sector.0..model.sector.1);
            let factor = rng.gen_range(model.scatter_length_factor.0..=model.scatter_length_factor.1);
            (angle, position.distance * factor, 10f64.powf(-model.scatter_loss_db / 20.0))
        };
        let phase = rng.gen_range(0.0..2.0 * PI);
        let amplitude = Cx::from_polar(model.path_loss.amplitude(dist)? * extra, phase);
        paths.push(PropagationPath::new(angle, amplitude, grid, n)?);
        scattering.push(sample_scattering_matrix(rng, &model.scattering));
    }
    CompoundChannel::bob(grid.m(), n, paths, scattering, model.rotation)
}

/// Everything needed to evaluate one scenario realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSet {
    /// Grid size `M`.
    pub m: usize,
    /// Antennas `N`.
    pub n: usize,
    /// Bob links, one per user.
    pub bobs: Vec<CompoundChannel>,
    /// Receive polarization of each Bob.
    pub bob_polarizations: Vec<PolarizationState>,
    /// Eve link.
    pub eve: CompoundChannel,
    /// Eve receive polarization.
    pub eve_polarization: PolarizationState,
    /// Target round trip.
    pub target: CompoundChannel,
    /// Clutter round trips.
    pub clutters: Vec<CompoundChannel>,
    /// Noise powers.
    pub noise: NoiseModel,
}

impl ChannelSet {
    /// Number of users `K`.
    pub fn num_users(&self) -> usize {
        self.bobs.len()
    }

    /// Checks every factor and the cross-channel consistency.
    pub fn validate(&self) -> Result<()> {
        if self.bobs.len() != self.bob_polarizations.len() {
            return Err(Error::Dimension("one polarization per Bob required".into()));
        }
        if self.bobs.len() >= self.n {
            return Err(Error::Dimension("need K < N so at least one radar stream exists".into()));
        }
        let all = self.bobs.iter().chain(self.clutters.iter()).chain([&self.eve, &self.target]);
        for ch in all {
            ch.validate()?;
            if ch.m != self.m || ch.n != self.n {
                return Err(Error::Dimension("channel (M, N) differs from the set".into()));
            }
        }
        self.noise.validate()
    }

    /// JSON snapshot (complex numbers as `[re, im]`).
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Loads and validates a JSON snapshot.
    pub fn from_json(s: &str) -> Result<Self> {
        let set: Self = serde_json::from_str(s)?;
        set.validate()?;
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::em_core::{assemble_em_beamformer, SelectionMatrix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Cx {
        Cx::new(re, im)
    }

    #[test]
    fn quantization() {
        let g8 = AngleGrid::new(8).unwrap();
        assert_eq!(quantize_angle(0.0, g8).unwrap(), 0);
        assert_eq!(quantize_angle(PI / 2.0, AngleGrid::new(180).unwrap()).unwrap(), 90);
        let brute = (0..8)
            .min_by(|&a, &b| (g8.angle(a) - 0.4).abs().partial_cmp(&(g8.angle(b) - 0.4).abs()).unwrap())
            .unwrap();
        assert_eq!(quantize_angle(0.4, g8).unwrap(), brute);
        assert_eq!(quantize_angle(PI / 16.0, g8).unwrap(), 0);
        assert_eq!(quantize_angle(3.1, g8).unwrap(), 7);
        assert!(quantize_angle(PI, g8).is_err());
        assert!(quantize_angle(-0.1, g8).is_err());
    }

    #[test]
    fn steering_cases() {
        let a = steering_vector(PI / 2.0, 5);
        for v in a.iter() {
            assert!((v - c(1.0, 0.0)).norm() < 1e-15);
        }
        let b = steering_vector(0.0, 2);
        assert!((b[1] - c(-1.0, 0.0)).norm() < 1e-15);
        let t = PI / 3.0;
        let s = steering_vector(t, 4);
        for n in 0..4 {
            let ph = PI * n as f64 * t.cos();
            assert!((s[n] - c(ph.cos(), ph.sin())).norm() < 1e-15);
        }
    }

    #[test]
    fn path_loss_values() {
        assert_eq!(path_loss(1.0, 2.5, 0.0, 1.0).unwrap(), 1.0);
        assert!((path_loss(1.0, 2.5, 30.0, 1.0).unwrap() - 1e-3).abs() < 1e-18);
        let v = path_loss(30.0, 2.5, 30.0, 1.0).unwrap();
        assert!((v - 2.0286e-7).abs() / 2.0286e-7 < 1e-4);
        assert!(path_loss(0.0, 2.5, 30.0, 1.0).is_err());
        assert!(path_loss(1.0, 2.5, 30.0, 0.0).is_err());
    }

    #[test]
    fn zero_covariance_gives_zero_draws() {
        let model = ScatteringModel::new(Matrix4::zeros(), c(0.0, 0.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            assert!(sample_scattering_matrix(&mut rng, &model).to_vec4().iter().all(|v| v.norm() == 0.0));
        }
    }

    fn sample_cov(model: &ScatteringModel, draws: usize, seed: u64) -> Matrix4<Cx> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut acc = Matrix4::<Cx>::zeros();
        for _ in 0..draws {
            let v = Vector4::from(sample_scattering_matrix(&mut rng, model).to_vec4());
            acc += v * v.adjoint();
        }
        acc / Cx::new(draws as f64, 0.0)
    }

    #[test]
    fn target_model_diagonal_variances() {
        let model = ScatteringModel::target(c(0.0, 0.0)).unwrap();
        let cov = sample_cov(&model, 100_000, 11);
        for (i, want) in [0.1, 0.3, 0.1, 1.0].iter().enumerate() {
            assert!((cov[(i, i)].re - want).abs() / want < 0.05, "entry {i}: {}", cov[(i, i)].re);
        }
    }

    #[test]
    fn target_model_full_covariance() {
        let model = ScatteringModel::target(c(0.5, 0.0)).unwrap();
        let cov = sample_cov(&model, 100_000, 12);
        let err = (cov - model.covariance()).norm() / model.covariance().norm();
        assert!(err < 0.05, "relative Frobenius error {err}");
    }

    #[test]
    fn psd_and_hermitian_checks() {
        let mut bad = Matrix4::<Cx>::identity();
        bad[(0, 0)] = c(-1e-3, 0.0);
        assert!(matches!(ScatteringModel::new(bad, c(0.0, 0.0)), Err(Error::NotPsd(_))));
        let mut asym = Matrix4::<Cx>::identity();
        asym[(0, 1)] = c(0.1, 0.0);
        assert!(ScatteringModel::new(asym, c(0.0, 0.0)).is_err());
        // |ε| large enough breaks positive semidefiniteness of the template
        assert!(ScatteringModel::target(c(10.0, 0.0)).is_err());
    }

    fn unit_path(angle_index: usize, m: usize, n: usize, amplitude: Cx) -> PropagationPath {
        let grid = AngleGrid::new(m).unwrap();
        PropagationPath::new(grid.angle(angle_index), amplitude, grid, n).unwrap()
    }

    #[test]
    fn trivial_bob_channel_is_scaled_identity() {
        let p = unit_path(0, 1, 1, c(0.5, 0.0));
        let ch = CompoundChannel::bob(1, 1, vec![p], vec![ScatteringMatrix::identity()], RotationMatrix::identity()).unwrap();
        let d = ch.dense().unwrap();
        assert!((d - CMat::identity(2, 2) * c(0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn eve_dense_is_hs_ha_adjoint() {
        let (m, n) = (4, 3);
        let p = unit_path(2, m, n, c(0.3, -0.2));
        let ch = CompoundChannel::eve(m, n, p.clone(), RotationMatrix::identity()).unwrap();
        let d = ch.dense().unwrap();
        // independently: row q picks conj(α a[n]) at column (n·M + idx)·2 + q
        let mut want = CMat::zeros(2, 2 * m * n);
        for i in 0..n {
            for q in 0..2 {
                want[(q, (i * m + 2) * 2 + q)] = p.spatial(i).conj();
            }
        }
        assert!((d - want).norm() < 1e-15);
    }

    fn random_channel<R: Rng>(rng: &mut R, kind: ChannelKind, m: usize, n: usize, l: usize) -> CompoundChannel {
        let grid = AngleGrid::new(m).unwrap();
        let model = ScatteringModel::target(c(0.5, 0.2)).unwrap();
        let path = |rng: &mut R| {
            let amp = complex_normal(rng);
            PropagationPath::new(rng.gen_range(0.0..PI), amp, grid, n).unwrap()
        };
        match kind {
            ChannelKind::Bob => {
                let paths = (0..l).map(|_| path(rng)).collect();
                let scat = (0..l).map(|_| sample_scattering_matrix(rng, &model)).collect();
                CompoundChannel::bob(m, n, paths, scat, RotationMatrix::from_angle(rng.gen_range(0.0..PI))).unwrap()
            }
            ChannelKind::Eve => CompoundChannel::eve(m, n, path(rng), RotationMatrix::from_angle(0.3)).unwrap(),
            ChannelKind::Target => {
                let p = path(rng);
                CompoundChannel::target(m, n, p, sample_scattering_matrix(rng, &model)).unwrap()
            }
            ChannelKind::Clutter => {
                let p = path(rng);
                CompoundChannel::clutter(m, n, p, sample_scattering_matrix(rng, &model)).unwrap()
            }
        }
    }

    fn random_cvec<R: Rng>(rng: &mut R, len: usize) -> CVec {
        CVec::from_fn(len, |_, _| complex_normal(rng))
    }

    #[test]
    fn factored_apply_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for kind in [ChannelKind::Bob, ChannelKind::Eve, ChannelKind::Target, ChannelKind::Clutter] {
            for _ in 0..10 {
                let ch = random_channel(&mut rng, kind, 8, 3, 2);
                let d = ch.dense().unwrap();
                assert_eq!(d.shape(), ch.dims());
                let x = random_cvec(&mut rng, ch.dims().1);
                let y = random_cvec(&mut rng, ch.dims().0);
                let fx = ch.apply(&x).unwrap();
                let dx = &d * &x;
                assert!((&fx - &dx).norm() <= 1e-12 * dx.norm().max(1e-300));
                let fy = ch.apply_adjoint(&y).unwrap();
                let dy = d.adjoint() * &y;
                assert!((&fy - &dy).norm() <= 1e-12 * dy.norm().max(1e-300));
            }
        }
    }

    #[test]
    fn radar_matrix_matches_dense_triple_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let dict = EmDictionary::parametric(8, 2, 3, 4.0, true).unwrap();
        for _ in 0..10 {
            let ch = random_channel(&mut rng, ChannelKind::Target, 8, 3, 1);
            let stx = SelectionMatrix::one_hot(6, &[0, 3, 5]).unwrap();
            let srx = SelectionMatrix::one_hot(6, &[4, 1, 2]).unwrap();
            let ftx = assemble_em_beamformer(&dict, &stx).unwrap();
            let wrx = assemble_em_beamformer(&dict, &srx).unwrap();
            let to_c = |r: crate::RMat| r.map(|v| Cx::new(v, 0.0));
            let dense = to_c(wrx.dense()).transpose() * ch.dense().unwrap() * to_c(ftx.dense());
            let fact = ch.radar_matrix(&wrx, &ftx);
            assert!((&fact - &dense).norm() <= 1e-12 * dense.norm());
        }
    }

    #[test]
    fn effective_row_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let dict = EmDictionary::parametric(8, 2, 3, 4.0, true).unwrap();
        let sel = SelectionMatrix::one_hot(6, &[2, 3, 1]).unwrap();
        let em = assemble_em_beamformer(&dict, &sel).unwrap();
        let ch = random_channel(&mut rng, ChannelKind::Bob, 8, 3, 2);
        let pol = PolarizationState::SLANT_45;
        let pbar = CMat::from_fn(1, 4, |_, j| Cx::new(pol.as_array()[j % 2], 0.0));
        let dense = pbar * ch.dense().unwrap() * em.dense().map(|v| Cx::new(v, 0.0));
        let row = ch.effective_row(pol, &em);
        for n in 0..3 {
            assert!((row[n] - dense[(0, n)]).norm() < 1e-12 * dense.norm());
        }
        let r = ch.mode_response(pol, &dict);
        for n in 0..3 {
            let via_modes: Cx = (0..6).map(|p| r[(n, p)] * sel.entries()[(p, n)]).sum();
            assert!((via_modes - row[n]).norm() < 1e-14);
        }
    }

    #[test]
    fn index_factor_has_one_nonzero_per_column() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ch = random_channel(&mut rng, ChannelKind::Bob, 8, 2, 3);
        for p in ch.paths() {
            let mut h = vec![0.0; 8];
            h[p.angle_index] = 1.0;
            assert_eq!(h.iter().sum::<f64>(), 1.0);
            for s in &p.steering {
                assert!((s.norm() - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn identity_scattering_round_trip_is_hermitian_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let grid = AngleGrid::new(8).unwrap();
        let p = PropagationPath::new(1.1, complex_normal(&mut rng), grid, 3).unwrap();
        let ch = CompoundChannel::target(8, 3, p, ScatteringMatrix::identity()).unwrap();
        let d = ch.dense().unwrap();
        assert!((&d - d.adjoint()).norm() < 1e-14);
        let eig = d.symmetric_eigen();
        assert!(eig.eigenvalues.min() > -1e-12);
    }

    #[test]
    fn dense_guard() {
        let grid = AngleGrid::new(180).unwrap();
        let p = PropagationPath::new(1.0, c(1.0, 0.0), grid, 8).unwrap();
        let ch = CompoundChannel::target(180, 8, p, ScatteringMatrix::identity()).unwrap();
        assert!(matches!(ch.dense(), Err(Error::TooLarge(..))));
    }

    fn default_bob_model() -> BobChannelModel {
        BobChannelModel {
            path_loss: PathLossModel::default(),
            scattering: ScatteringModel::cross_polar(0.1).unwrap(),
            rotation: RotationMatrix::identity(),
            scatter_loss_db: 10.0,
            scatter_length_factor: (1.0, 1.5),
            sector: (PI / 6.0, 5.0 * PI / 6.0),
        }
    }

    #[test]
    fn bob_generation_shape_and_replay() {
        let model = default_bob_model();
        let grid = AngleGrid::new(180).unwrap();
        let pos = Position { angle: 1.2, distance: 55.0 };
        let gen = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            generate_bob_channel(&mut rng, pos, 5, grid, 8, &model).unwrap()
        };
        let a = gen(3);
        assert_eq!(a.dims(), (10, 2 * 180 * 8));
        assert_eq!(a.paths()[0].angle, 1.2);
        for p in &a.paths()[1..] {
            assert!(p.angle >= PI / 6.0 && p.angle < 5.0 * PI / 6.0);
        }
        let b = gen(3);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn snapshot_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ch = random_channel(&mut rng, ChannelKind::Bob, 8, 3, 2);
        let s = serde_json::to_string(&ch).unwrap();
        let back: CompoundChannel = serde_json::from_str(&s).unwrap();
        assert_eq!(back, ch);
        let model = ScatteringModel::target(c(0.5, 0.1)).unwrap();
        let back: ScatteringModel = serde_json::from_str(&serde_json::to_string(&model).unwrap()).unwrap();
        assert_eq!(back, model);
    }
}
