//! Scenario configuration documents.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::PathLossModel;
use crate::em_core::PolarizationState;
use crate::error::{Error, Result};
use crate::optimizer::{AlgorithmConfig, OptimizerConfig};
use crate::from_db;

/// Beamforming scheme, i.e. which part of the mode dictionary is available.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Full pattern × polarization dictionary.
    Cra,
    /// Patterns with a fixed slant-45 polarization.
    PatternOnly,
    /// Omnidirectional pattern with every polarization.
    PolarizationOnly,
    /// Omnidirectional slant-45 only (`P = 1`).
    BbOnly,
}

impl Scheme {
    /// All schemes in reporting order.
    pub const ALL: [Scheme; 4] = [Scheme::Cra, Scheme::PolarizationOnly, Scheme::PatternOnly, Scheme::BbOnly];

    /// Snake-case tag.
    pub fn tag(self) -> &'static str {
        match self {
            Scheme::Cra => "cra",
            Scheme::PatternOnly => "pattern_only",
            Scheme::PolarizationOnly => "polarization_only",
            Scheme::BbOnly => "bb_only",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.tag() == s)
            .ok_or_else(|| Error::Config { path: "scheme".into(), message: format!("unknown scheme `{s}`") })
    }
}

/// Named polarization state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarization {
    /// Horizontal.
    H,
    /// Vertical.
    V,
    /// +45° slant.
    Slant45,
    /// −45° slant.
    Slant135,
}

impl Polarization {
    /// Unit `[H, V]` vector.
    pub fn state(self) -> PolarizationState {
        match self {
            Polarization::H => PolarizationState::H,
            Polarization::V => PolarizationState::V,
            Polarization::Slant45 => PolarizationState::SLANT_45,
            Polarization::Slant135 => PolarizationState::SLANT_135,
        }
    }
}

/// Mode dictionary parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DictionarySpec {
    /// Pattern count, including the omni column when present.
    pub p_pat: usize,
    /// Polarization count (1..=4).
    pub p_pol: usize,
    /// Lobe exponent.
    pub sharpness: f64,
    /// Whether the first pattern is omnidirectional.
    pub include_omni: bool,
}

impl Default for DictionarySpec {
    fn default() -> Self {
        Self { p_pat: 3, p_pol: 3, sharpness: 4.0, include_omni: true }
    }
}

/// Polar position in degrees and meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolarDeg {
    /// Azimuth in degrees, `[0, 180)`.
    pub angle_deg: f64,
    /// Range in meters.
    pub distance_m: f64,
}

/// Region positions are drawn from: uniform radius and uniform angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Annulus {
    /// Inner radius in meters.
    pub inner_m: f64,
    /// Outer radius in meters.
    pub outer_m: f64,
    /// Smallest azimuth in degrees.
    pub min_deg: f64,
    /// Largest azimuth in degrees.
    pub max_deg: f64,
}

impl Default for Annulus {
    fn default() -> Self {
        Self { inner_m: 20.0, outer_m: 40.0, min_deg: 30.0, max_deg: 150.0 }
    }
}

/// Where the users, target and clutter sit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySpec {
    /// Region for random Bob placement.
    pub bob_region: Annulus,
    /// Region for random target placement.
    pub target_region: Annulus,
    /// Region for random clutter placement.
    pub clutter_region: Annulus,
    /// Fixed Bob positions; overrides `bob_region`.
    pub bob_positions: Option<Vec<PolarDeg>>,
    /// Fixed target position; overrides `target_region`.
    pub target_position: Option<PolarDeg>,
    /// Fixed clutter positions; overrides `clutter_region`.
    pub clutter_positions: Option<Vec<PolarDeg>>,
    /// Extra loss of each Bob scatter path in dB.
    pub scatter_loss_db: f64,
    /// Scatter path length as a multiple of the direct range.
    pub scatter_length_factor: (f64, f64),
    /// Angular sector of Bob scatter paths in degrees.
    pub scatter_sector_deg: (f64, f64),
}

impl Default for GeometrySpec {
    fn default() -> Self {
        Self {
            bob_region: Annulus { inner_m: 50.0, outer_m: 60.0, ..Annulus::default() },
            target_region: Annulus::default(),
            clutter_region: Annulus::default(),
            bob_positions: None,
            target_position: None,
            clutter_positions: None,
            scatter_loss_db: 6.0,
            scatter_length_factor: (1.2, 2.0),
            scatter_sector_deg: (30.0, 150.0),
        }
    }
}

/// Scattering statistics and receive polarizations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScatteringSpec {
    /// Off-diagonal parameter of the target template as `[re, im]`.
    pub epsilon: [f64; 2],
    /// Clutter covariance as a multiple of the target covariance.
    pub clutter_scale: f64,
    /// Cross-polar power ratio of Bob scatter paths in dB.
    pub bob_xpd_db: f64,
    /// Bob receive polarization.
    pub bob_polarization: Polarization,
    /// Eve receive polarization.
    pub eve_polarization: Polarization,
    /// Polarization rotation of the user links in degrees.
    pub rotation_deg: f64,
}

impl Default for ScatteringSpec {
    fn default() -> Self {
        Self {
            epsilon: [0.5, 0.0],
            clutter_scale: 1.0,
            bob_xpd_db: -10.0,
            bob_polarization: Polarization::Slant45,
            eve_polarization: Polarization::Slant45,
            rotation_deg: 0.0,
        }
    }
}

/// Noise powers in dBm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseDbm {
    /// Bob receiver noise.
    pub bob: f64,
    /// Eve receiver noise.
    pub eve: f64,
    /// Radar receiver noise.
    pub radar: f64,
}

impl Default for NoiseDbm {
    fn default() -> Self {
        Self { bob: -80.0, eve: -80.0, radar: -80.0 }
    }
}

/// Complete scenario description; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Antennas `N`.
    pub n: usize,
    /// Angular grid size `M`.
    pub m: usize,
    /// Users `K`.
    pub k: usize,
    /// Clutter patches `C`.
    pub c: usize,
    /// Paths per Bob link `L`.
    pub l: usize,
    /// Carrier frequency in Hz (informational; the ULA is half-wavelength).
    pub carrier_hz: f64,
    /// Transmit power budget in watts.
    pub p_t_watts: f64,
    /// Per-user SINR floors in dB; a single value applies to every user.
    pub eps_bob_db: Vec<f64>,
    /// Per-user eavesdropping ceilings in dB; a single value applies to every user.
    pub eps_eve_db: Vec<f64>,
    /// Noise powers.
    pub noise_dbm: NoiseDbm,
    /// Path-loss law.
    pub path_loss: PathLossModel,
    /// Mode dictionary.
    pub dictionary: DictionarySpec,
    /// Placement.
    pub geometry: GeometrySpec,
    /// Scattering statistics.
    pub scattering: ScatteringSpec,
    /// Scheme for single runs.
    pub scheme: Scheme,
    /// Optimizer knobs.
    pub algorithm: AlgorithmConfig,
    /// Base seed.
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n: 8,
            m: 180,
            k: 2,
            c: 2,
            l: 5,
            carrier_hz: 28e9,
            p_t_watts: 60.0,
            eps_bob_db: vec![5.0],
            eps_eve_db: vec![-20.0],
            noise_dbm: NoiseDbm::default(),
            path_loss: PathLossModel::default(),
            dictionary: DictionarySpec::default(),
            geometry: GeometrySpec::default(),
            scattering: ScatteringSpec::default(),
            scheme: Scheme::Cra,
            algorithm: AlgorithmConfig::default(),
            seed: 0,
        }
    }
}

fn cfg_err(path: &str, message: impl Into<String>) -> Error {
    Error::Config { path: path.into(), message: message.into() }
}

fn check_annulus(path: &str, a: &Annulus) -> Result<()> {
    if !(a.inner_m > 0.0 && a.outer_m >= a.inner_m && a.outer_m.is_finite()) {
        return Err(cfg_err(path, "need 0 < inner_m ≤ outer_m"));
    }
    if !(0.0 <= a.min_deg && a.min_deg <= a.max_deg && a.max_deg < 180.0) {
        return Err(cfg_err(path, "need 0 ≤ min_deg ≤ max_deg < 180"));
    }
    Ok(())
}

fn check_positions(path: &str, ps: &[PolarDeg]) -> Result<()> {
    for (i, p) in ps.iter().enumerate() {
        if !(0.0..180.0).contains(&p.angle_deg) || !(p.distance_m > 0.0 && p.distance_m.is_finite()) {
            return Err(cfg_err(&format!("{path}[{i}]"), "angle must lie in [0, 180) and distance be positive"));
        }
    }
    Ok(())
}

impl ScenarioConfig {
    /// The shipped low-resolution default scenario.
    pub fn default_scenario() -> Self {
        Self::default()
    }

    /// Tiny scenario for exhaustive checks (`N = 2, M = 8, P = 3, K = 1, C = 1, L = 2`).
    pub fn tiny_scenario() -> Self {
        Self {
            n: 2,
            m: 8,
            k: 1,
            c: 1,
            l: 2,
            dictionary: DictionarySpec { p_pat: 1, p_pol: 3, ..DictionarySpec::default() },
            ..Self::default()
        }
    }

    /// Checks every invariant; errors name the offending field.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("n", self.n), ("m", self.m), ("l", self.l)] {
            if v == 0 {
                return Err(cfg_err(name, "must be positive"));
            }
        }
        if self.k >= self.n {
            return Err(cfg_err("k", format!("K = {} leaves no radar stream with N = {}", self.k, self.n)));
        }
        if !(self.carrier_hz > 0.0 && self.carrier_hz.is_finite()) {
            return Err(cfg_err("carrier_hz", "must be positive"));
        }
        if !(self.p_t_watts > 0.0 && self.p_t_watts.is_finite()) {
            return Err(cfg_err("p_t_watts", "must be positive"));
        }
        for (name, v) in [("eps_bob_db", &self.eps_bob_db), ("eps_eve_db", &self.eps_eve_db)] {
            if !(v.len() == 1 || v.len() == self.k) {
                return Err(cfg_err(name, format!("need 1 or K = {} values, got {}", self.k, v.len())));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(cfg_err(name, "thresholds must be finite"));
            }
        }
        for (name, v) in [("noise_dbm.bob", self.noise_dbm.bob), ("noise_dbm.eve", self.noise_dbm.eve), ("noise_dbm.radar", self.noise_dbm.radar)] {
            if !v.is_finite() {
                return Err(cfg_err(name, "must be finite"));
            }
        }
        let pl = &self.path_loss;
        if !(pl.kappa.is_finite() && pl.c0_db.is_finite() && pl.d0_m > 0.0) {
            return Err(cfg_err("path_loss", "need finite kappa, c0_db and positive d0_m"));
        }
        let d = &self.dictionary;
        if d.p_pat == 0 || d.p_pat > self.m {
            return Err(cfg_err("dictionary.p_pat", "need 1 ≤ P_pat ≤ M"));
        }
        if !(1..=4).contains(&d.p_pol) {
            return Err(cfg_err("dictionary.p_pol", "need 1 ≤ P_pol ≤ 4"));
        }
        if !(d.sharpness > 0.0 && d.sharpness.is_finite()) {
            return Err(cfg_err("dictionary.sharpness", "must be positive"));
        }
        let g = &self.geometry;
        check_annulus("geometry.bob_region", &g.bob_region)?;
        check_annulus("geometry.target_region", &g.target_region)?;
        check_annulus("geometry.clutter_region", &g.clutter_region)?;
        if let Some(ps) = &g.bob_positions {
            if ps.len() != self.k {
                return Err(cfg_err("geometry.bob_positions", format!("need K = {} positions", self.k)));
            }
            check_positions("geometry.bob_positions", ps)?;
        }
        if let Some(p) = &g.target_position {
            check_positions("geometry.target_position", std::slice::from_ref(p))?;
        }
        if let Some(ps) = &g.clutter_positions {
            if ps.len() != self.c {
                return Err(cfg_err("geometry.clutter_positions", format!("need C = {} positions", self.c)));
            }
            check_positions("geometry.clutter_positions", ps)?;
        }
        let (lo, hi) = g.scatter_length_factor;
        if !(lo >= 1.0 && hi >= lo && hi.is_finite()) {
            return Err(cfg_err("geometry.scatter_length_factor", "need 1 ≤ lo ≤ hi"));
        }
        let (lo, hi) = g.scatter_sector_deg;
        if !(0.0 <= lo && lo < hi && hi < 180.0) {
            return Err(cfg_err("geometry.scatter_sector_deg", "need 0 ≤ lo < hi < 180"));
        }
        if !g.scatter_loss_db.is_finite() {
            return Err(cfg_err("geometry.scatter_loss_db", "must be finite"));
        }
        let s = &self.scattering;
        if s.epsilon.iter().any(|v| !v.is_finite()) {
            return Err(cfg_err("scattering.epsilon", "must be finite"));
        }
        if !(s.clutter_scale >= 0.0 && s.clutter_scale.is_finite()) {
            return Err(cfg_err("scattering.clutter_scale", "must be ≥ 0"));
        }
        if !s.bob_xpd_db.is_finite() || !s.rotation_deg.is_finite() {
            return Err(cfg_err("scattering", "bob_xpd_db and rotation_deg must be finite"));
        }
        self.algorithm.validate().map_err(|e| cfg_err("algorithm", e.to_string()))
    }

    /// Linear per-user thresholds, broadcasting single values.
    pub fn thresholds(&self) -> (Vec<f64>, Vec<f64>) {
        let expand = |v: &[f64]| if v.len() == 1 { vec![from_db(v[0]); self.k] } else { v.iter().map(|x| from_db(*x)).collect() };
        (expand(&self.eps_bob_db), expand(&self.eps_eve_db))
    }

    /// Optimizer inputs derived from this scenario.
    pub fn optimizer_config(&self) -> OptimizerConfig {
        let (eps_bob, eps_eve) = self.thresholds();
        OptimizerConfig { power_budget: self.p_t_watts, eps_bob, eps_eve, algorithm: self.algorithm.clone() }
    }

    /// Canonical JSON (struct field order, compact).
    pub fn canonical_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Hex SHA-256 of the canonical JSON.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.canonical_json()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    /// Parses and validates a JSON document.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| cfg_err("<document>", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Pretty JSON.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Reads and validates a scenario document.
pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)?;
    ScenarioConfig::from_json(&text)
}

/// Writes a scenario document.
pub fn save_config(path: &Path, cfg: &ScenarioConfig) -> Result<()> {
    std::fs::write(path, cfg.to_json()? + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_default() {
        let cfg = ScenarioConfig::from_json("{}").unwrap();
        assert_eq!(cfg, ScenarioConfig::default_scenario());
        assert_eq!((cfg.n, cfg.p_t_watts, cfg.dictionary.p_pat * cfg.dictionary.p_pol), (8, 60.0, 9));
        let (b, e) = cfg.thresholds();
        assert_eq!(b.len(), 2);
        assert!((b[0] - from_db(5.0)).abs() < 1e-12 && (e[1] - 0.01).abs() < 1e-15);
    }

    #[test]
    fn shipped_documents_match_builtins() {
        let default = ScenarioConfig::from_json(include_str!("../../scenarios/default_scenario.json")).unwrap();
        let tiny = ScenarioConfig::from_json(include_str!("../../scenarios/tiny_scenario.json")).unwrap();
        assert_eq!(default, ScenarioConfig::default_scenario());
        assert_eq!(tiny, ScenarioConfig::tiny_scenario());
    }

    #[test]
    fn k_equal_n_rejected() {
        let err = ScenarioConfig::from_json(r#"{"n": 2, "k": 2, "eps_bob_db": [5]}"#).unwrap_err();
        assert!(matches!(err, Error::Config { ref path, .. } if path == "k"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ScenarioConfig::from_json(r#"{"antennas": 4}"#).is_err());
        assert!(ScenarioConfig::from_json(r#"{"dictionary": {"p_pattern": 4}}"#).is_err());
    }

    #[test]
    fn bad_threshold_count_rejected() {
        let err = ScenarioConfig::from_json(r#"{"eps_bob_db": [5, 5, 5]}"#).unwrap_err();
        assert!(matches!(err, Error::Config { ref path, .. } if path == "eps_bob_db"));
    }

    #[test]
    fn round_trip_preserves_hash() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        let mut cfg = ScenarioConfig::tiny_scenario();
        cfg.seed = 42;
        cfg.geometry.target_position = Some(PolarDeg { angle_deg: 60.0, distance_m: 25.0 });
        save_config(&path, &cfg).unwrap();
        let back = load_config(&path).unwrap();
        assert_eq!(back.hash().unwrap(), cfg.hash().unwrap());
        assert_eq!(cfg.hash().unwrap().len(), 64);
        let mut other = cfg.clone();
        other.seed = 43;
        assert_ne!(other.hash().unwrap(), cfg.hash().unwrap());
    }

    #[test]
    fn scheme_tags_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.tag().parse::<Scheme>().unwrap(), s);
        }
        assert!("hybrid".parse::<Scheme>().is_err());
    }
}
