//! Channel realizations and scheme dictionaries for a scenario.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{
    generate_bob_channel, sample_scattering_matrix, AngleGrid, BobChannelModel, ChannelSet, CompoundChannel, Position,
    PropagationPath, RotationMatrix, ScatteringModel,
};
use crate::em_core::{build_pattern_dictionary, build_polarization_dictionary, EmDictionary, PolarizationState};
use crate::error::Result;
use crate::metrics::NoiseModel;
use crate::{Cx, RMat};

use super::config::{Annulus, PolarDeg, ScenarioConfig, Scheme};

/// Mode dictionary available to `scheme`.
pub fn apply_scheme(cfg: &ScenarioConfig, scheme: Scheme) -> Result<EmDictionary> {
    let d = &cfg.dictionary;
    let slant = {
        let s = PolarizationState::SLANT_45.as_array();
        RMat::from_column_slice(2, 1, &s)
    };
    let omni = build_pattern_dictionary(cfg.m, 1, d.sharpness, true)?;
    let patterns = || build_pattern_dictionary(cfg.m, d.p_pat, d.sharpness, d.include_omni);
    match scheme {
        Scheme::Cra => EmDictionary::new(patterns()?, build_polarization_dictionary(d.p_pol)?),
        Scheme::PatternOnly => EmDictionary::new(patterns()?, slant),
        Scheme::PolarizationOnly => EmDictionary::new(omni, build_polarization_dictionary(d.p_pol)?),
        Scheme::BbOnly => EmDictionary::new(omni, slant),
    }
}

/// Target scattering model from the scenario.
pub fn target_model(cfg: &ScenarioConfig) -> Result<ScatteringModel> {
    ScatteringModel::target(Cx::new(cfg.scattering.epsilon[0], cfg.scattering.epsilon[1]))
}

/// Clutter scattering model from the scenario.
pub fn clutter_model(cfg: &ScenarioConfig) -> Result<ScatteringModel> {
    target_model(cfg)?.scaled(cfg.scattering.clutter_scale)
}

fn draw_position<R: Rng + ?Sized>(rng: &mut R, a: &Annulus) -> Position {
    let angle = if a.max_deg > a.min_deg { rng.gen_range(a.min_deg..a.max_deg) } else { a.min_deg };
    let distance = if a.outer_m > a.inner_m { rng.gen_range(a.inner_m..a.outer_m) } else { a.inner_m };
    Position { angle: angle.to_radians(), distance }
}

fn fixed(p: &PolarDeg) -> Position {
    Position { angle: p.angle_deg.to_radians(), distance: p.distance_m }
}

fn round_trip_path<R: Rng + ?Sized>(rng: &mut R, cfg: &ScenarioConfig, pos: Position, grid: AngleGrid) -> Result<PropagationPath> {
    let phase = rng.gen_range(0.0..2.0 * PI);
    let amplitude = Cx::from_polar(cfg.path_loss.amplitude(pos.distance)?, phase);
    PropagationPath::new(pos.angle, amplitude, grid, cfg.n)
}

/// One channel realization; every random draw comes from `seed`.
///
/// Draw order is fixed: positions, Bob links, target, clutter. Fixed
/// positions still consume their position draws so that other draws do not
/// shift when a position is pinned.
pub fn generate_channels(cfg: &ScenarioConfig, seed: u64) -> Result<ChannelSet> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = AngleGrid::new(cfg.m)?;
    let g = &cfg.geometry;
    let pick = |fixed_pos: Option<&PolarDeg>, region: &Annulus, rng: &mut ChaCha8Rng| {
        let drawn = draw_position(rng, region);
        fixed_pos.map(fixed).unwrap_or(drawn)
    };
    let bob_pos: Vec<Position> = (0..cfg.k).map(|i| pick(g.bob_positions.as_ref().map(|v| &v[i]), &g.bob_region, &mut rng)).collect();
    let target_pos = pick(g.target_position.as_ref(), &g.target_region, &mut rng);
    let clutter_pos: Vec<Position> =
        (0..cfg.c).map(|i| pick(g.clutter_positions.as_ref().map(|v| &v[i]), &g.clutter_region, &mut rng)).collect();

    let s = &cfg.scattering;
    let rotation = RotationMatrix::from_angle(s.rotation_deg.to_radians());
    let bob_model = BobChannelModel {
        path_loss: cfg.path_loss,
        scattering: ScatteringModel::cross_polar(crate::from_db(s.bob_xpd_db))?,
        rotation,
        scatter_loss_db: g.scatter_loss_db,
        scatter_length_factor: g.scatter_length_factor,
        sector: (g.scatter_sector_deg.0.to_radians(), g.scatter_sector_deg.1.to_radians()),
    };
    let bobs = bob_pos
        .iter()
        .map(|p| generate_bob_channel(&mut rng, *p, cfg.l, grid, cfg.n, &bob_model))
        .collect::<Result<Vec<_>>>()?;

    let t_model = target_model(cfg)?;
    let c_model = clutter_model(cfg)?;
    let tp = round_trip_path(&mut rng, cfg, target_pos, grid)?;
    let target = CompoundChannel::target(cfg.m, cfg.n, tp.clone(), sample_scattering_matrix(&mut rng, &t_model))?;
    let eve = CompoundChannel::eve(cfg.m, cfg.n, tp, rotation)?;
    let clutters = clutter_pos
        .iter()
        .map(|p| {
            let path = round_trip_path(&mut rng, cfg, *p, grid)?;
            CompoundChannel::clutter(cfg.m, cfg.n, path, sample_scattering_matrix(&mut rng, &c_model))
        })
        .collect::<Result<Vec<_>>>()?;
    let set = ChannelSet {
        m: cfg.m,
        n: cfg.n,
        bobs,
        bob_polarizations: vec![s.bob_polarization.state(); cfg.k],
        eve,
        eve_polarization: s.eve_polarization.state(),
        target,
        clutters,
        noise: NoiseModel::from_dbm(cfg.noise_dbm.bob, cfg.noise_dbm.eve, cfg.noise_dbm.radar),
    };
    set.validate()?;
    Ok(set)
}
