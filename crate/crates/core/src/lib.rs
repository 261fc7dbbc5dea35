//! Joint electromagnetic-mode and baseband beamforming for secure integrated
//! sensing and communication (ISAC) with compound reconfigurable antenna
//! (CRA) arrays.
//!
//! Every antenna at the base station picks one radiation-pattern ×
//! polarization mode from a dictionary. Together with the digital precoder
//! `F_BB` and the radar combiner `w_BB`, the mode choices are optimized to
//! maximize the radar SCNR at a target. The constraints are SINR floors for
//! the legitimate users (Bobs), an SINR ceiling at the eavesdropper (Eve,
//! who is the radar target), and a transmit power budget.
//!
//! Module map:
//! - [`em_core`]: mode dictionaries, selection matrices, EM beamformers.
//! - [`channel`]: factored compound channels for Bobs, Eve, target, clutter.
//! - [`metrics`]: SINR / SCNR / power evaluation.
//! - [`conic`]: convex subproblem representation and solve contract.
//! - [`optimizer`]: the alternating FP/MM/SOCP/penalty algorithm.
//! - [`detector`]: Monte Carlo energy-detector ROC.
//! - [`oracle`]: brute-force references used by tests and `validate`.
//! - [`harness`]: scenario configs, scheme baselines, sweeps, CSV output.

pub mod channel;
pub mod conic;
pub mod detector;
pub mod em_core;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod optimizer;
pub mod oracle;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type Cx = num_complex::Complex64;
/// Dense complex matrix.
pub type CMat = nalgebra::DMatrix<Cx>;
/// Dense complex vector.
pub type CVec = nalgebra::DVector<Cx>;
/// Dense real matrix.
pub type RMat = nalgebra::DMatrix<f64>;
/// Dense real vector.
pub type RVec = nalgebra::DVector<f64>;

/// Linear power ratio to decibels.
pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Decibels to linear power ratio.
pub fn from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    from_db(dbm - 30.0)
}
