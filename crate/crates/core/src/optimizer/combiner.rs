//! Radar combiner (generalized Rayleigh quotient) and FP auxiliary updates.

use crate::channel::ChannelSet;
use crate::em_core::EmBeamformer;
use crate::error::{Error, Result};
use crate::metrics::radar_terms_for;
use crate::{CMat, CVec, Cx};

/// Leading generalized eigenpair of `(B1, B2)` with `B2` Hermitian PD.
///
/// Returns a unit-norm maximizer of `wᴴB1w / wᴴB2w` whose largest-magnitude
/// entry is real positive, and the attained quotient.
pub fn generalized_rayleigh_max(b1: &CMat, b2: &CMat) -> Result<(CVec, f64)> {
    let n = b1.nrows();
    if b1.shape() != (n, n) || b2.shape() != (n, n) || n == 0 {
        return Err(Error::Dimension("Rayleigh quotient needs square matrices of equal size".into()));
    }
    let scale = b2.diagonal().iter().map(|v| v.re).fold(0.0, f64::max);
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Factorization("B2 has no positive diagonal".into()));
    }
    let inv = Cx::new(1.0 / scale, 0.0);
    let b2s = (b2 + b2.adjoint()) * (inv * 0.5);
    let b1s = (b1 + b1.adjoint()) * (inv * 0.5);
    let chol = b2s.cholesky().ok_or_else(|| Error::Factorization("B2 is not positive definite".into()))?;
    let l = chol.l();
    if l.diagonal().iter().any(|d| !(d.re > 0.0 && d.re.is_finite() && d.im.abs() <= 1e-12 * d.re)) {
        return Err(Error::Factorization("B2 is not positive definite".into()));
    }
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Factorization("Cholesky factor is singular".into()))?;
    let c = &l_inv * &b1s * l_inv.adjoint();
    let c = (&c + c.adjoint()) * Cx::new(0.5, 0.0);
    let eig = c.symmetric_eigen();
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::Factorization("non-finite eigenvalues".into()));
    }
    let mut top = 0;
    for i in 1..n {
        if eig.eigenvalues[i] > eig.eigenvalues[top] {
            top = i;
        }
    }
    let y = eig.eigenvectors.column(top).into_owned();
    let mut w = l_inv.adjoint() * y;
    let norm = w.norm();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::Factorization("degenerate generalized eigenvector".into()));
    }
    w /= Cx::new(norm, 0.0);
    let mut lead = 0;
    for i in 1..n {
        if w[i].norm() > w[lead].norm() * (1.0 + 1e-12) {
            lead = i;
        }
    }
    let phase = w[lead].conj() / w[lead].norm();
    w *= phase;
    let num = (w.adjoint() * b1 * &w)[0].re;
    let den = (w.adjoint() * b2 * &w)[0].re;
    Ok((w, num / den))
}

/// `B_W,1 = X_t X_tᴴ` and `B_W,2 = Σ_c X_c X_cᴴ + σ_r² I` for the given precoder.
pub fn combiner_kernels(channels: &ChannelSet, em_tx: &EmBeamformer, em_rx: &EmBeamformer, precoder: &CMat) -> (CMat, CMat) {
    let n = channels.n;
    let xt = channels.target.radar_matrix(em_rx, em_tx) * precoder;
    let b1 = &xt * xt.adjoint();
    let mut b2 = CMat::identity(n, n) * Cx::new(channels.noise.sigma2_radar, 0.0);
    for c in &channels.clutters {
        let xc = c.radar_matrix(em_rx, em_tx) * precoder;
        b2 += &xc * xc.adjoint();
    }
    (b1, b2)
}

/// SCNR-optimal combiner for fixed EM state and precoder.
pub fn update_wbb(channels: &ChannelSet, em_tx: &EmBeamformer, em_rx: &EmBeamformer, precoder: &CMat) -> Result<CVec> {
    let (b1, b2) = combiner_kernels(channels, em_tx, em_rx, precoder);
    Ok(generalized_rayleigh_max(&b1, &b2)?.0)
}

/// `γ = max(SCNR, floor)` at the current point.
pub fn update_gamma(
    channels: &ChannelSet,
    em_tx: &EmBeamformer,
    em_rx: &EmBeamformer,
    precoder: &CMat,
    combiner: &CVec,
    floor: f64,
) -> f64 {
    radar_terms_for(channels, em_tx, em_rx, precoder, combiner).ratio().max(floor)
}
