//! Confidence-ellipse AOD grids, excitation matrices, the uniform
//! benchmark allocation and the LOS power metric.
//!
//! The AOD interval of a path is the set of departure angles of points in
//! the kappa-confidence ellipse of its 2D position marginal, computed from
//! the two tangent lines through the Tx (at the origin). The excitation
//! matrix collects squared beam gains towards a uniform grid over that
//! interval; minimum-illumination constraints and the uniform benchmark are
//! built from it.

use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen, Vector2};
use num_complex::Complex64;
use thiserror::Error;

use crate::geometry::{steering_vector, ArrayGeometry};
use crate::waveform::Codebook;
use crate::wrap_angle;

use super::prior::PriorModel;

#[derive(Debug, Error)]
pub enum ExcitationError {
    #[error("confidence level must be in (0, 1), got {0}")]
    BadKappa(f64),
    #[error("confidence ellipse contains the Tx; departure angles undefined")]
    EllipseContainsOrigin,
    #[error("need at least two grid points, got {0}")]
    BadGridSize(usize),
}

/// Chi-square quantile with 2 degrees of freedom.
fn chi2_quantile_2dof(kappa: f64) -> f64 {
    -2.0 * (1.0 - kappa).ln()
}

/// Extreme departure angles over the kappa-confidence ellipse of a 2D
/// Gaussian, as seen from the origin. Returns `(theta_min, theta_max)` with
/// the arc from min to max (through the mean angle) shorter than pi.
pub fn aod_interval(
    mean: Vector2<f64>,
    cov: Matrix2<f64>,
    kappa: f64,
) -> Result<(f64, f64), ExcitationError> {
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(ExcitationError::BadKappa(kappa));
    }
    let theta_mean = mean.y.atan2(mean.x);
    let chi2 = chi2_quantile_2dof(kappa);
    let eig = SymmetricEigen::new(cov * chi2);
    let lmax = eig.eigenvalues.amax();
    if lmax < 1e-18 {
        return Ok((theta_mean, theta_mean));
    }
    let lmin = eig.eigenvalues.min();
    if lmin < 1e-12 * lmax {
        // Degenerate (segment) marginal: walk the segment's endpoints and a
        // fine sampling in between.
        let imax = if eig.eigenvalues[0] >= eig.eigenvalues[1] { 0 } else { 1 };
        let axis = eig.eigenvectors.column(imax) * eig.eigenvalues[imax].max(0.0).sqrt();
        let mut lo = 0.0f64;
        let mut hi = 0.0f64;
        for i in 0..=1000 {
            let t = -1.0 + 2.0 * i as f64 / 1000.0;
            let p = mean + axis * t;
            if p.norm() < 1e-12 {
                return Err(ExcitationError::EllipseContainsOrigin);
            }
            let d = wrap_angle(p.y.atan2(p.x) - theta_mean);
            lo = lo.min(d);
            hi = hi.max(d);
        }
        return Ok((
            wrap_angle(theta_mean + lo),
            wrap_angle(theta_mean + hi),
        ));
    }

    // Tangent directions from the origin: u' M u = 0 with
    // M = Q mu mu' Q - (mu' Q mu - 1) Q, Q = (chi2 Sigma)^-1.
    let q = (cov * chi2)
        .try_inverse()
        .ok_or(ExcitationError::EllipseContainsOrigin)?;
    let qmu = q * mean;
    let level = mean.dot(&qmu);
    if level <= 1.0 {
        return Err(ExcitationError::EllipseContainsOrigin);
    }
    let m = qmu * qmu.transpose() - q * (level - 1.0);
    let meig = SymmetricEigen::new(m);
    let (a1, a2) = (meig.eigenvalues[0], meig.eigenvalues[1]);
    let (pos, neg, vpos, vneg) = if a1 >= a2 {
        (a1, a2, meig.eigenvectors.column(0), meig.eigenvectors.column(1))
    } else {
        (a2, a1, meig.eigenvectors.column(1), meig.eigenvectors.column(0))
    };
    // Indefinite by construction when the origin is outside.
    let w1 = (-neg).max(0.0).sqrt();
    let w2 = pos.max(0.0).sqrt();
    let mut extremes = Vec::with_capacity(2);
    for sign in [1.0, -1.0] {
        let mut u = vpos * w1 + vneg * (sign * w2);
        // Point the direction towards the ellipse (positive ray parameter).
        if u.dot(&qmu) < 0.0 {
            u = -u;
        }
        extremes.push(wrap_angle(u.y.atan2(u.x)));
    }
    let d0 = wrap_angle(extremes[0] - theta_mean);
    let d1 = wrap_angle(extremes[1] - theta_mean);
    let (lo, hi) = if d0 <= d1 { (d0, d1) } else { (d1, d0) };
    Ok((wrap_angle(theta_mean + lo), wrap_angle(theta_mean + hi)))
}

/// Uniform grid of `n_theta` departure angles over the kappa-confidence
/// interval of path `l` (0 = LOS). Endpoints are the interval bounds.
pub fn confidence_aod_grid(
    prior: &PriorModel,
    path: usize,
    kappa: f64,
    n_theta: usize,
) -> Result<Vec<f64>, ExcitationError> {
    if n_theta < 2 {
        return Err(ExcitationError::BadGridSize(n_theta));
    }
    let (mean, cov) = prior.marginal_2d(path);
    let (lo, hi) = aod_interval(mean, cov, kappa)?;
    let width = wrap_angle(hi - lo);
    Ok((0..n_theta)
        .map(|m| wrap_angle(lo + width * m as f64 / (n_theta - 1) as f64))
        .collect())
}

/// Excitation matrix of a path: `A[m, k] = |a_T(theta_m)^T f_k|^2`.
pub fn excitation_matrix(
    tx: &ArrayGeometry,
    codebook: &Codebook,
    thetas: &[f64],
) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(thetas.len(), codebook.num_beams());
    for (m, &theta) in thetas.iter().enumerate() {
        let at = steering_vector(tx, theta);
        for (k, f) in codebook.beams.iter().enumerate() {
            let g: Complex64 = at.iter().zip(f.iter()).map(|(x, y)| x * y).sum();
            a[(m, k)] = g.norm_sqr();
        }
    }
    a
}

/// Beams most excited by some direction of some path's confidence grid
/// (ties broken toward the lowest beam index).
pub fn useful_beams(
    tx: &ArrayGeometry,
    codebook: &Codebook,
    prior: &PriorModel,
    kappa: f64,
    n_theta: usize,
    paths: impl Iterator<Item = usize>,
) -> Result<Vec<usize>, ExcitationError> {
    let mut set = std::collections::BTreeSet::new();
    for l in paths {
        let grid = confidence_aod_grid(prior, l, kappa, n_theta)?;
        let a = excitation_matrix(tx, codebook, &grid);
        for m in 0..grid.len() {
            let mut best = 0usize;
            let mut best_v = f64::NEG_INFINITY;
            for k in 0..codebook.num_beams() {
                if a[(m, k)] > best_v {
                    best_v = a[(m, k)];
                    best = k;
                }
            }
            set.insert(best);
        }
    }
    Ok(set.into_iter().collect())
}

/// Uniform power over the useful beams of all paths.
pub fn uniform_benchmark(
    tx: &ArrayGeometry,
    codebook: &Codebook,
    prior: &PriorModel,
    kappa: f64,
    n_theta: usize,
) -> Result<DVector<f64>, ExcitationError> {
    let beams = useful_beams(tx, codebook, prior, kappa, n_theta, 0..prior.num_paths())?;
    let mut q = DVector::zeros(codebook.num_beams());
    let w = 1.0 / beams.len() as f64;
    for k in beams {
        q[k] = w;
    }
    Ok(q)
}

/// Fraction of power on LOS-illuminating beams.
pub fn q_los_metric(
    q: &DVector<f64>,
    tx: &ArrayGeometry,
    codebook: &Codebook,
    prior: &PriorModel,
    kappa: f64,
    n_theta: usize,
) -> Result<f64, ExcitationError> {
    let beams = useful_beams(tx, codebook, prior, kappa, n_theta, std::iter::once(0))?;
    Ok(beams.into_iter().map(|k| q[k]).sum())
}
