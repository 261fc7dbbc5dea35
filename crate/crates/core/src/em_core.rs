//! EM-mode dictionaries and selection-driven EM beamformers.
//!
//! A CRA element radiates `f_EM = f_A ⊗ f_P`, where `f_A` holds angular gains
//! over `M` sampled directions and `f_P = [F_H, F_V]` is the polarization gain
//! vector. The dictionary `D = D_pat ⊗ D_pol` lists every admissible
//! (pattern, polarization) pair as a unit-norm column of length `2M`. Row
//! `2m + q` of `D` is the gain at angle `m` on polarization `q` (0 = H, 1 = V).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{RMat, RVec};

const UNIT_TOL: f64 = 1e-12;

/// Dual-polarized gain pair of one mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarizationState {
    /// Horizontal component.
    pub h_gain: f64,
    /// Vertical component.
    pub v_gain: f64,
}

impl PolarizationState {
    /// Horizontal linear polarization.
    pub const H: Self = Self { h_gain: 1.0, v_gain: 0.0 };
    /// Vertical linear polarization.
    pub const V: Self = Self { h_gain: 0.0, v_gain: 1.0 };
    /// +45° slant.
    pub const SLANT_45: Self = Self {
        h_gain: std::f64::consts::FRAC_1_SQRT_2,
        v_gain: std::f64::consts::FRAC_1_SQRT_2,
    };
    /// −45° slant.
    pub const SLANT_135: Self = Self {
        h_gain: std::f64::consts::FRAC_1_SQRT_2,
        v_gain: -std::f64::consts::FRAC_1_SQRT_2,
    };

    /// Validated constructor; the pair must have unit norm.
    pub fn new(h_gain: f64, v_gain: f64) -> Result<Self> {
        let norm = (h_gain * h_gain + v_gain * v_gain).sqrt();
        if (norm - 1.0).abs() > UNIT_TOL {
            return Err(Error::InvalidParameter(format!(
                "polarization state norm {norm} is not 1"
            )));
        }
        Ok(Self { h_gain, v_gain })
    }

    /// `[h, v]`.
    pub fn as_array(&self) -> [f64; 2] {
        [self.h_gain, self.v_gain]
    }
}

/// Angular gain profile of one pattern mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiationPattern {
    /// Nonnegative gains over the `M` grid angles, unit ℓ2 norm.
    pub gains: Vec<f64>,
}

impl RadiationPattern {
    /// Validated constructor.
    pub fn new(gains: Vec<f64>) -> Result<Self> {
        if gains.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(Error::InvalidParameter("pattern gains must be finite and ≥ 0".into()));
        }
        let norm = gains.iter().map(|g| g * g).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > UNIT_TOL {
            return Err(Error::InvalidParameter(format!("pattern norm {norm} is not 1")));
        }
        Ok(Self { gains })
    }
}

/// Builds the `M × P_pat` raised-cosine pattern dictionary.
///
/// Lobes are `max(0, cos(θ_m − θ_p))^sharpness` on the grid `θ_m = mπ/M`, with
/// centers `θ_p = (i + ½)π / n_lobes`. With `include_omni` the first column is
/// the constant `1/√M` and the remaining `P_pat − 1` columns are lobes.
pub fn build_pattern_dictionary(m: usize, p_pat: usize, sharpness: f64, include_omni: bool) -> Result<RMat> {
    if p_pat == 0 || m == 0 {
        return Err(Error::InvalidParameter("M and P_pat must be ≥ 1".into()));
    }
    if p_pat > m {
        return Err(Error::InvalidParameter(format!("P_pat = {p_pat} exceeds M = {m}")));
    }
    if !(sharpness > 0.0 && sharpness.is_finite()) {
        return Err(Error::InvalidParameter("sharpness must be positive".into()));
    }
    let mut d = RMat::zeros(m, p_pat);
    let n_lobes = if include_omni { p_pat - 1 } else { p_pat };
    let first_lobe = p_pat - n_lobes;
    if include_omni {
        d.column_mut(0).fill(1.0 / (m as f64).sqrt());
    }
    for i in 0..n_lobes {
        let center = (i as f64 + 0.5) * std::f64::consts::PI / n_lobes as f64;
        let mut col = d.column_mut(first_lobe + i);
        for row in 0..m {
            let theta = row as f64 * std::f64::consts::PI / m as f64;
            col[row] = (theta - center).cos().max(0.0).powf(sharpness);
        }
        let norm = col.norm();
        if norm < 1e-12 {
            return Err(Error::InvalidParameter(format!("pattern column {} vanishes on the grid", first_lobe + i)));
        }
        col /= norm;
    }
    Ok(d)
}

/// Builds the `2 × P_pol` polarization dictionary from {H, V, +45°, −45°}.
pub fn build_polarization_dictionary(p_pol: usize) -> Result<RMat> {
    if !(1..=4).contains(&p_pol) {
        return Err(Error::InvalidParameter(format!("P_pol = {p_pol} not in 1..=4")));
    }
    let states = [
        PolarizationState::H,
        PolarizationState::V,
        PolarizationState::SLANT_45,
        PolarizationState::SLANT_135,
    ];
    Ok(RMat::from_fn(2, p_pol, |q, j| states[j].as_array()[q]))
}

/// Kronecker-structured mode dictionary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "DictionaryDoc", try_from = "DictionaryDoc")]
pub struct EmDictionary {
    pattern_dict: RMat,
    pol_dict: RMat,
    full_dict: RMat,
}

/// Matrix-of-rows document layout of a dictionary.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DictionaryDoc {
    pattern_dict: Vec<Vec<f64>>,
    pol_dict: Vec<Vec<f64>>,
}

fn to_rows(m: &RMat) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(rows: &[Vec<f64>]) -> Result<RMat> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Dimension("ragged matrix rows".into()));
    }
    Ok(RMat::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

impl From<EmDictionary> for DictionaryDoc {
    fn from(d: EmDictionary) -> Self {
        Self { pattern_dict: to_rows(&d.pattern_dict), pol_dict: to_rows(&d.pol_dict) }
    }
}

impl TryFrom<DictionaryDoc> for EmDictionary {
    type Error = Error;
    fn try_from(doc: DictionaryDoc) -> Result<Self> {
        EmDictionary::new(from_rows(&doc.pattern_dict)?, from_rows(&doc.pol_dict)?)
    }
}

impl EmDictionary {
    /// Forms `D = D_pat ⊗ D_pol` after checking that every column has unit norm.
    pub fn new(pattern_dict: RMat, pol_dict: RMat) -> Result<Self> {
        if pol_dict.nrows() != 2 {
            return Err(Error::Dimension("polarization dictionary must have 2 rows".into()));
        }
        if pattern_dict.ncols() == 0 || pol_dict.ncols() == 0 || pattern_dict.nrows() == 0 {
            return Err(Error::Dimension("empty dictionary".into()));
        }
        for (name, d) in [("pattern", &pattern_dict), ("polarization", &pol_dict)] {
            for (j, c) in d.column_iter().enumerate() {
                if (c.norm() - 1.0).abs() > UNIT_TOL {
                    return Err(Error::InvalidParameter(format!("{name} column {j} is not unit norm")));
                }
            }
        }
        let full_dict = pattern_dict.kronecker(&pol_dict);
        Ok(Self { pattern_dict, pol_dict, full_dict })
    }

    /// Builds the parametric dictionary in one call.
    pub fn parametric(m: usize, p_pat: usize, p_pol: usize, sharpness: f64, include_omni: bool) -> Result<Self> {
        Self::new(
            build_pattern_dictionary(m, p_pat, sharpness, include_omni)?,
            build_polarization_dictionary(p_pol)?,
        )
    }

    /// `M × P_pat` pattern dictionary.
    pub fn pattern_dict(&self) -> &RMat {
        &self.pattern_dict
    }

    /// `2 × P_pol` polarization dictionary.
    pub fn pol_dict(&self) -> &RMat {
        &self.pol_dict
    }

    /// `2M × P` mode dictionary.
    pub fn full_dict(&self) -> &RMat {
        &self.full_dict
    }

    /// Number of sampled angles `M`.
    pub fn m(&self) -> usize {
        self.pattern_dict.nrows()
    }

    /// Number of modes `P = P_pat · P_pol`.
    pub fn num_modes(&self) -> usize {
        self.full_dict.ncols()
    }

    /// Number of pattern modes.
    pub fn num_patterns(&self) -> usize {
        self.pattern_dict.ncols()
    }

    /// Number of polarization modes.
    pub fn num_polarizations(&self) -> usize {
        self.pol_dict.ncols()
    }

    /// `[H, V]` gains of mode `p` at grid angle `m`.
    pub fn angle_gain(&self, p: usize, m: usize) -> [f64; 2] {
        [self.full_dict[(2 * m, p)], self.full_dict[(2 * m + 1, p)]]
    }
}

/// Whether a selection is exactly one-hot or box-relaxed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    /// Entries in {0,1}, one 1 per column.
    Binary,
    /// Entries in [0,1], columns summing to 1.
    Relaxed,
}

/// `P × N` per-antenna mode selection (`S_F` or `S_W`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "SelectionDoc", try_from = "SelectionDoc")]
pub struct SelectionMatrix {
    entries: RMat,
    mode: SelectionMode,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SelectionDoc {
    entries: Vec<Vec<f64>>,
    mode: SelectionMode,
}

impl From<SelectionMatrix> for SelectionDoc {
    fn from(s: SelectionMatrix) -> Self {
        Self { entries: to_rows(&s.entries), mode: s.mode }
    }
}

impl TryFrom<SelectionDoc> for SelectionMatrix {
    type Error = Error;
    fn try_from(doc: SelectionDoc) -> Result<Self> {
        let entries = from_rows(&doc.entries)?;
        match doc.mode {
            SelectionMode::Binary => Self::binary(entries),
            SelectionMode::Relaxed => Self::relaxed(entries),
        }
    }
}

/// Tolerance on relaxed column sums.
pub const COLUMN_SUM_TOL: f64 = 1e-9;

impl SelectionMatrix {
    /// Validated binary selection.
    pub fn binary(entries: RMat) -> Result<Self> {
        if entries.nrows() == 0 || entries.ncols() == 0 {
            return Err(Error::InvalidSelection("empty selection".into()));
        }
        for (n, col) in entries.column_iter().enumerate() {
            if col.iter().any(|&v| v != 0.0 && v != 1.0) || col.sum() != 1.0 {
                return Err(Error::InvalidSelection(format!("column {n} is not one-hot")));
            }
        }
        Ok(Self { entries, mode: SelectionMode::Binary })
    }

    /// Validated relaxed selection.
    pub fn relaxed(entries: RMat) -> Result<Self> {
        if entries.nrows() == 0 || entries.ncols() == 0 {
            return Err(Error::InvalidSelection("empty selection".into()));
        }
        for (n, col) in entries.column_iter().enumerate() {
            if col.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::InvalidSelection(format!("column {n} leaves [0,1]")));
            }
            if (col.sum() - 1.0).abs() > COLUMN_SUM_TOL {
                return Err(Error::InvalidSelection(format!("column {n} sums to {}", col.sum())));
            }
        }
        Ok(Self { entries, mode: SelectionMode::Relaxed })
    }

    /// One-hot selection picking mode `choices[n]` for antenna `n`.
    pub fn one_hot(p: usize, choices: &[usize]) -> Result<Self> {
        if let Some(&c) = choices.iter().find(|&&c| c >= p) {
            return Err(Error::InvalidSelection(format!("mode {c} out of range for P = {p}")));
        }
        Self::binary(RMat::from_fn(p, choices.len(), |i, n| f64::from(u8::from(choices[n] == i))))
    }

    /// Relaxed selection from `vec(S)` (column-major), after clipping solver
    /// round-off into [0,1] and renormalizing column sums.
    pub fn from_solver_vector(p: usize, n: usize, x: &[f64]) -> Result<Self> {
        if x.len() != p * n {
            return Err(Error::Dimension(format!("expected {} entries, got {}", p * n, x.len())));
        }
        let mut entries = RMat::from_column_slice(p, n, x);
        for mut col in entries.column_iter_mut() {
            col.apply(|v| *v = v.clamp(0.0, 1.0));
            let s = col.sum();
            if s <= 0.0 {
                return Err(Error::InvalidSelection("solver returned an all-zero column".into()));
            }
            col /= s;
        }
        Self::relaxed(entries)
    }

    /// `P × N` entries.
    pub fn entries(&self) -> &RMat {
        &self.entries
    }

    /// Binary or relaxed.
    pub fn mode(&self) -> SelectionMode {
        self.mode
    }

    /// Number of modes `P`.
    pub fn num_modes(&self) -> usize {
        self.entries.nrows()
    }

    /// Number of antennas `N`.
    pub fn num_antennas(&self) -> usize {
        self.entries.ncols()
    }

    /// `vec(S)`, column-major: entry `n·P + p` is `S[p, n]`.
    pub fn to_vec(&self) -> RVec {
        RVec::from_column_slice(self.entries.as_slice())
    }

    /// Largest `s(1 − s)` over all entries; zero exactly when binary.
    pub fn binariness_gap(&self) -> f64 {
        self.entries.iter().map(|s| s * (1.0 - s)).fold(0.0, f64::max)
    }

    /// Mode index with the largest weight per antenna (lowest index on ties).
    pub fn argmax_modes(&self) -> Vec<usize> {
        self.entries
            .column_iter()
            .map(|col| {
                let mut best = 0;
                for (p, &v) in col.iter().enumerate() {
                    if v > col[best] {
                        best = p;
                    }
                }
                best
            })
            .collect()
    }
}

/// Per-antenna EM gain vectors (`F_EM` or `W_EM` blocks).
#[derive(Debug, Clone, PartialEq)]
pub struct EmBeamformer {
    /// `N` blocks of length `2M`.
    pub blocks: Vec<RVec>,
}

impl EmBeamformer {
    /// Number of antennas.
    pub fn num_antennas(&self) -> usize {
        self.blocks.len()
    }

    /// Number of sampled angles.
    pub fn m(&self) -> usize {
        self.blocks.first().map_or(0, |b| b.len() / 2)
    }

    /// `[H, V]` gains of antenna `n` at grid angle `m`.
    pub fn angle_gain(&self, n: usize, m: usize) -> [f64; 2] {
        [self.blocks[n][2 * m], self.blocks[n][2 * m + 1]]
    }

    /// `2MN × N` block-diagonal matrix with block `n` in column `n`.
    pub fn dense(&self) -> RMat {
        let n = self.blocks.len();
        let len = 2 * self.m();
        let mut out = RMat::zeros(len * n, n);
        for (i, b) in self.blocks.iter().enumerate() {
            out.view_mut((i * len, i), (len, 1)).copy_from(b);
        }
        out
    }
}

fn check_rows(dict: &EmDictionary, sel: &SelectionMatrix) -> Result<()> {
    if sel.num_modes() != dict.num_modes() {
        return Err(Error::Dimension(format!(
            "selection has {} rows, dictionary has {} modes",
            sel.num_modes(),
            dict.num_modes()
        )));
    }
    Ok(())
}

/// Block `n` equals `D · s_n`.
pub fn assemble_em_beamformer(dict: &EmDictionary, sel: &SelectionMatrix) -> Result<EmBeamformer> {
    check_rows(dict, sel)?;
    let blocks = sel.entries.column_iter().map(|s| dict.full_dict() * s).collect();
    Ok(EmBeamformer { blocks })
}

/// `vec(D S)`, the concatenated EM blocks.
pub fn stacked_gain_vector(dict: &EmDictionary, sel: &SelectionMatrix) -> Result<RVec> {
    check_rows(dict, sel)?;
    let ds = dict.full_dict() * &sel.entries;
    Ok(RVec::from_column_slice(ds.as_slice()))
}

/// One-hot at each column's argmax; ties go to the lowest index.
pub fn round_selection(sel: &SelectionMatrix) -> SelectionMatrix {
    SelectionMatrix::one_hot(sel.num_modes(), &sel.argmax_modes()).expect("argmax indices are in range")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn omni_only_pattern_is_constant() {
        let d = build_pattern_dictionary(4, 1, 4.0, true).unwrap();
        assert_eq!(d.shape(), (4, 1));
        for v in d.iter() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn high_res_pattern_dictionary_shape_and_norms() {
        let d = build_pattern_dictionary(180, 7, 4.0, true).unwrap();
        assert_eq!(d.shape(), (180, 7));
        for c in d.column_iter() {
            assert!((c.norm() - 1.0).abs() < 1e-12);
            assert!(c.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn lobes_match_pointwise_formula() {
        let d = build_pattern_dictionary(8, 2, 4.0, false).unwrap();
        let pi = std::f64::consts::PI;
        for p in 0..2 {
            let center = (p as f64 + 0.5) * pi / 2.0;
            let raw: Vec<f64> = (0..8)
                .map(|m| {
                    let c = (m as f64 * pi / 8.0 - center).cos();
                    if c > 0.0 { c.powi(4) } else { 0.0 }
                })
                .collect();
            let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
            for m in 0..8 {
                assert!((d[(m, p)] - raw[m] / norm).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn pattern_dictionary_rejections() {
        assert!(build_pattern_dictionary(4, 5, 4.0, false).is_err());
        assert!(build_pattern_dictionary(4, 2, 0.0, false).is_err());
        // grid {0}: a lobe centred at π/2 vanishes at the only sample
        assert!(build_pattern_dictionary(1, 1, 4.0, false).is_err());
    }

    #[test]
    fn polarization_dictionaries() {
        let d1 = build_polarization_dictionary(1).unwrap();
        assert_eq!(d1, RMat::from_row_slice(2, 1, &[1.0, 0.0]));
        let d4 = build_polarization_dictionary(4).unwrap();
        for c in d4.column_iter() {
            assert!((c.norm() - 1.0).abs() < 1e-15);
        }
        assert_eq!(d4.column(0).dot(&d4.column(1)), 0.0);
        let d3 = build_polarization_dictionary(3).unwrap();
        let g = d3.transpose() * &d3;
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let expected = [[1.0, 0.0, s], [0.0, 1.0, s], [s, s, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((g[(i, j)] - expected[i][j]).abs() < 1e-15);
            }
        }
        assert!(build_polarization_dictionary(0).is_err());
        assert!(build_polarization_dictionary(5).is_err());
    }

    #[test]
    fn kronecker_consistency() {
        let dict = EmDictionary::parametric(6, 3, 4, 2.0, true).unwrap();
        let (pat, pol) = (dict.pattern_dict(), dict.pol_dict());
        for i in 0..3 {
            for j in 0..4 {
                let col = dict.full_dict().column(i * 4 + j);
                for m in 0..6 {
                    for q in 0..2 {
                        assert_eq!(col[2 * m + q], pat[(m, i)] * pol[(q, j)]);
                    }
                }
                assert!((col.norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn one_hot_and_relaxed_assembly() {
        let dict = EmDictionary::parametric(4, 1, 2, 4.0, true).unwrap();
        let sel = SelectionMatrix::one_hot(2, &[0]).unwrap();
        let bf = assemble_em_beamformer(&dict, &sel).unwrap();
        assert_eq!(bf.blocks[0], dict.full_dict().column(0).into_owned());

        let half = SelectionMatrix::relaxed(RMat::from_row_slice(2, 1, &[0.5, 0.5])).unwrap();
        let bf = assemble_em_beamformer(&dict, &half).unwrap();
        let avg = (dict.full_dict().column(0) + dict.full_dict().column(1)) * 0.5;
        assert!((&bf.blocks[0] - avg).norm() < 1e-15);
    }

    fn random_dict(rng: &mut ChaCha8Rng, m: usize, p_pat: usize, p_pol: usize) -> EmDictionary {
        let mut pat = RMat::from_fn(m, p_pat, |_, _| rng.gen::<f64>());
        for mut c in pat.column_iter_mut() {
            let n = c.norm();
            c /= n;
        }
        EmDictionary::new(pat, build_polarization_dictionary(p_pol).unwrap()).unwrap()
    }

    #[test]
    fn dense_blkdiag_times_ones_is_vec_ds() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let dict = random_dict(&mut rng, 3, 2, 2);
        let choices: Vec<usize> = (0..2).map(|_| rng.gen_range(0..4)).collect();
        let sel = SelectionMatrix::one_hot(4, &choices).unwrap();
        let bf = assemble_em_beamformer(&dict, &sel).unwrap();
        let lhs = bf.dense() * RVec::from_element(2, 1.0);
        let ds = dict.full_dict() * sel.entries();
        for (a, b) in lhs.iter().zip(ds.as_slice()) {
            assert!((a - b).abs() < 1e-14);
        }
        for b in &bf.blocks {
            assert!((b.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn stacked_vector_cases() {
        let dict = EmDictionary::parametric(4, 2, 2, 4.0, true).unwrap();
        let sel = SelectionMatrix::one_hot(4, &[3]).unwrap();
        assert_eq!(stacked_gain_vector(&dict, &sel).unwrap(), dict.full_dict().column(3).into_owned());
        assert!(SelectionMatrix::relaxed(RMat::zeros(4, 2)).is_err());

        let sel = SelectionMatrix::one_hot(4, &[1, 2, 0]).unwrap();
        let v = stacked_gain_vector(&dict, &sel).unwrap();
        let bf = assemble_em_beamformer(&dict, &sel).unwrap();
        let cat: Vec<f64> = bf.blocks.iter().flat_map(|b| b.iter().copied()).collect();
        for (a, b) in v.iter().zip(&cat) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn rounding_rules() {
        let s = SelectionMatrix::relaxed(RMat::from_row_slice(3, 1, &[0.7, 0.2, 0.1])).unwrap();
        assert_eq!(round_selection(&s).entries().as_slice(), &[1.0, 0.0, 0.0]);
        let t = SelectionMatrix::relaxed(RMat::from_row_slice(2, 1, &[0.5, 0.5])).unwrap();
        assert_eq!(round_selection(&t).entries().as_slice(), &[1.0, 0.0]);
        let b = SelectionMatrix::one_hot(3, &[2, 1]).unwrap();
        assert_eq!(round_selection(&b), b);
    }

    #[test]
    fn serde_round_trip() {
        let dict = EmDictionary::parametric(5, 2, 3, 4.0, false).unwrap();
        let doc = serde_json::to_string(&dict).unwrap();
        let back: EmDictionary = serde_json::from_str(&doc).unwrap();
        assert_eq!(back, dict);
        let sel = SelectionMatrix::one_hot(6, &[1, 5]).unwrap();
        let back: SelectionMatrix = serde_json::from_str(&serde_json::to_string(&sel).unwrap()).unwrap();
        assert_eq!(back, sel);
    }

    fn simplex_column(weights: &[f64]) -> Vec<f64> {
        let s: f64 = weights.iter().sum();
        weights.iter().map(|w| w / s).collect()
    }

    proptest! {
        #[test]
        fn stacked_vector_is_linear(
            w1 in proptest::collection::vec(0.01f64..1.0, 8),
            w2 in proptest::collection::vec(0.01f64..1.0, 8),
            alpha in 0.0f64..=1.0,
        ) {
            let dict = EmDictionary::parametric(5, 2, 2, 3.0, true).unwrap();
            let cols = |w: &[f64]| {
                let mut v = simplex_column(&w[..4]);
                v.extend(simplex_column(&w[4..]));
                RMat::from_column_slice(4, 2, &v)
            };
            let (a, b) = (cols(&w1), cols(&w2));
            let mix = SelectionMatrix::relaxed(&a * alpha + &b * (1.0 - alpha)).unwrap();
            let va = stacked_gain_vector(&dict, &SelectionMatrix::relaxed(a).unwrap()).unwrap();
            let vb = stacked_gain_vector(&dict, &SelectionMatrix::relaxed(b).unwrap()).unwrap();
            let vm = stacked_gain_vector(&dict, &mix).unwrap();
            prop_assert!((vm - (va * alpha + vb * (1.0 - alpha))).amax() < 1e-12);
        }

        #[test]
        fn rounding_is_idempotent(w in proptest::collection::vec(0.0f64..1.0, 12)) {
            let mut cols = Vec::new();
            for chunk in w.chunks(4) {
                let s: f64 = chunk.iter().sum::<f64>() + 1e-3;
                cols.extend(chunk.iter().map(|v| (v + 2.5e-4) / s));
            }
            let sel = SelectionMatrix::relaxed(RMat::from_column_slice(4, 3, &cols)).unwrap();
            let r = round_selection(&sel);
            prop_assert_eq!(r.num_antennas(), 3);
            prop_assert_eq!(r.binariness_gap(), 0.0);
            prop_assert_eq!(round_selection(&r), r);
        }
    }
}
