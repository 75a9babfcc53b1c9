//! 2D array and multipath geometry.
//!
//! The Tx sits at the origin, the Rx at `p_R` with orientation `alpha_R`.
//! Propagation is over `L` discrete paths: path 0 is the line of sight, the
//! others are single-bounce paths via scatterer/reflector points `p_{s,l}`.
//! Delays include a common Tx-Rx clock offset. This module maps position
//! parameters to channel parameters (delay, AOD, AOA per path) and provides
//! the analytic Jacobian of that map, which drives all Fisher-information
//! computations downstream.

use nalgebra::{DMatrix, DVector, Vector2};
use num_complex::Complex64;
use thiserror::Error;

use crate::{wrap_angle, SPEED_OF_LIGHT};

/// Distances below this are treated as coincident points.
pub const DEGENERACY_THRESHOLD_M: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
    #[error("array must have at least one element")]
    EmptyArray,
    #[error("invalid array element {index}: {reason}")]
    BadElement { index: usize, reason: String },
    #[error("position parameters need at least the LOS path")]
    NoPaths,
}

/// Antenna array as polar element offsets from its reference point.
#[derive(Debug, Clone)]
pub struct ArrayGeometry {
    /// Per element: (distance from reference in m, angle in rad).
    pub elements: Vec<(f64, f64)>,
    /// Carrier frequency in Hz.
    pub carrier_frequency: f64,
}

impl ArrayGeometry {
    pub fn new(elements: Vec<(f64, f64)>, carrier_frequency: f64) -> Result<Self, GeometryError> {
        if elements.is_empty() {
            return Err(GeometryError::EmptyArray);
        }
        let elements = elements
            .into_iter()
            .enumerate()
            .map(|(index, (d, psi))| {
                if !(d.is_finite() && d >= 0.0) {
                    return Err(GeometryError::BadElement {
                        index,
                        reason: format!("distance {d} must be finite and nonnegative"),
                    });
                }
                Ok((d, wrap_angle(psi)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            elements,
            carrier_frequency,
        })
    }

    /// Uniform linear array along the x-axis with half-wavelength spacing.
    pub fn ula(num_elements: usize, carrier_frequency: f64) -> Result<Self, GeometryError> {
        let lambda = SPEED_OF_LIGHT / carrier_frequency;
        Self::new(
            (0..num_elements)
                .map(|j| (j as f64 * lambda / 2.0, 0.0))
                .collect(),
            carrier_frequency,
        )
    }

    /// Uniform circular array; the radius makes the adjacent-element arc
    /// length half a wavelength.
    pub fn uca(num_elements: usize, carrier_frequency: f64) -> Result<Self, GeometryError> {
        let lambda = SPEED_OF_LIGHT / carrier_frequency;
        let radius = num_elements as f64 * lambda / (4.0 * std::f64::consts::PI);
        Self::new(
            (0..num_elements)
                .map(|i| {
                    (
                        radius,
                        2.0 * std::f64::consts::PI * i as f64 / num_elements as f64,
                    )
                })
                .collect(),
            carrier_frequency,
        )
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency
    }
}

/// Per-path complex gain in polar form (the estimation parameterization).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainPolar {
    pub magnitude: f64,
    pub phase: f64,
}

impl GainPolar {
    pub fn new(magnitude: f64, phase: f64) -> Self {
        Self {
            magnitude,
            phase: wrap_angle(phase),
        }
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::from_polar(self.magnitude, self.phase)
    }

    pub fn from_complex(h: Complex64) -> Self {
        Self {
            magnitude: h.norm(),
            phase: if h.norm() > 0.0 { h.arg() } else { 0.0 },
        }
    }
}

/// Position parameter vector: Rx position/orientation, clock offset, and
/// per-path gains plus scatterer positions. Dimension `4L + 2` with the
/// ordering `[p_R, alpha_R, eps_clk, h_0, (p_s1, h_1), ..., (p_s(L-1), h_(L-1))]`.
#[derive(Debug, Clone)]
pub struct PositionParams {
    pub p_r: Vector2<f64>,
    pub alpha_r: f64,
    /// Clock offset in seconds.
    pub eps_clk: f64,
    /// One gain per path; index 0 is the LOS gain.
    pub gains: Vec<GainPolar>,
    /// Scatterer positions for paths 1..L-1.
    pub scatterers: Vec<Vector2<f64>>,
}

impl PositionParams {
    pub fn num_paths(&self) -> usize {
        self.gains.len()
    }

    pub fn dim(&self) -> usize {
        4 * self.num_paths() + 2
    }

    /// Flattens into the canonical parameter vector.
    pub fn to_vector(&self) -> DVector<f64> {
        let l = self.num_paths();
        let mut v = DVector::zeros(4 * l + 2);
        v[0] = self.p_r.x;
        v[1] = self.p_r.y;
        v[2] = self.alpha_r;
        v[3] = self.eps_clk;
        v[4] = self.gains[0].magnitude;
        v[5] = self.gains[0].phase;
        for (i, (s, g)) in self.scatterers.iter().zip(&self.gains[1..]).enumerate() {
            let base = 6 + 4 * i;
            v[base] = s.x;
            v[base + 1] = s.y;
            v[base + 2] = g.magnitude;
            v[base + 3] = g.phase;
        }
        v
    }

    /// Inverse of [`Self::to_vector`]; panics on a length that is not `4L + 2`.
    pub fn from_vector(v: &DVector<f64>) -> Self {
        assert!(
            v.len() >= 6 && (v.len() - 2) % 4 == 0,
            "bad parameter length {}",
            v.len()
        );
        let l = (v.len() - 2) / 4;
        let mut gains = vec![GainPolar::new(v[4], v[5])];
        let mut scatterers = Vec::with_capacity(l - 1);
        for i in 0..l - 1 {
            let base = 6 + 4 * i;
            scatterers.push(Vector2::new(v[base], v[base + 1]));
            gains.push(GainPolar::new(v[base + 2], v[base + 3]));
        }
        Self {
            p_r: Vector2::new(v[0], v[1]),
            alpha_r: v[2],
            eps_clk: v[3],
            gains,
            scatterers,
        }
    }
}

/// One propagation path in channel coordinates.
#[derive(Debug, Clone, Copy)]
pub struct PathParams {
    /// Delay in seconds (includes the clock offset).
    pub delay: f64,
    /// Angle of departure at the Tx, rad in `[-pi, pi)`.
    pub aod: f64,
    /// Angle of arrival at the Rx, rad in `[-pi, pi)`.
    pub aoa: f64,
    pub gain: Complex64,
}

/// Channel parameters for all paths; path 0 is the LOS.
#[derive(Debug, Clone)]
pub struct ChannelParams {
    pub paths: Vec<PathParams>,
}

impl ChannelParams {
    pub fn num_paths(&self) -> usize {
        self.paths.len()
    }
}

/// Array steering vector: entry `j` is `exp(i w_c d_j cos(psi_j - theta)/c)`.
pub fn steering_vector(array: &ArrayGeometry, theta: f64) -> DVector<Complex64> {
    let k = 2.0 * std::f64::consts::PI * array.carrier_frequency / SPEED_OF_LIGHT;
    DVector::from_iterator(
        array.len(),
        array
            .elements
            .iter()
            .map(|&(d, psi)| Complex64::from_polar(1.0, k * d * (psi - theta).cos())),
    )
}

/// First derivative of the steering vector with respect to `theta`.
pub fn steering_derivative(array: &ArrayGeometry, theta: f64) -> DVector<Complex64> {
    let k = 2.0 * std::f64::consts::PI * array.carrier_frequency / SPEED_OF_LIGHT;
    DVector::from_iterator(
        array.len(),
        array.elements.iter().map(|&(d, psi)| {
            let g = k * d * (psi - theta).cos();
            let gp = k * d * (psi - theta).sin();
            Complex64::new(0.0, gp) * Complex64::from_polar(1.0, g)
        }),
    )
}

/// Second derivative of the steering vector with respect to `theta`.
pub fn steering_second_derivative(array: &ArrayGeometry, theta: f64) -> DVector<Complex64> {
    let k = 2.0 * std::f64::consts::PI * array.carrier_frequency / SPEED_OF_LIGHT;
    DVector::from_iterator(
        array.len(),
        array.elements.iter().map(|&(d, psi)| {
            let g = k * d * (psi - theta).cos();
            let gp = k * d * (psi - theta).sin();
            let gpp = -k * d * (psi - theta).cos();
            (Complex64::new(0.0, gpp) + Complex64::new(0.0, gp).powi(2))
                * Complex64::from_polar(1.0, g)
        }),
    )
}

fn check_distance(d: f64, what: &str) -> Result<(), GeometryError> {
    if d < DEGENERACY_THRESHOLD_M {
        Err(GeometryError::Degenerate(format!(
            "{what} distance {d:.3e} m below threshold"
        )))
    } else {
        Ok(())
    }
}

/// Maps position parameters to channel parameters (delays, AODs, AOAs; gains
/// are copied through).
pub fn pos_to_channel(nu: &PositionParams) -> Result<ChannelParams, GeometryError> {
    if nu.gains.is_empty() {
        return Err(GeometryError::NoPaths);
    }
    let c = SPEED_OF_LIGHT;
    let d0 = nu.p_r.norm();
    check_distance(d0, "Tx-Rx")?;
    let aod0 = nu.p_r.y.atan2(nu.p_r.x);
    let mut paths = vec![PathParams {
        delay: d0 / c + nu.eps_clk,
        aod: wrap_angle(aod0),
        aoa: wrap_angle(aod0 + std::f64::consts::PI - nu.alpha_r),
        gain: nu.gains[0].to_complex(),
    }];
    for (l, s) in nu.scatterers.iter().enumerate() {
        let ds = s.norm();
        check_distance(ds, "Tx-scatterer")?;
        let rel = nu.p_r - s;
        check_distance(rel.norm(), "scatterer-Rx")?;
        paths.push(PathParams {
            delay: (ds + rel.norm()) / c + nu.eps_clk,
            aod: wrap_angle(s.y.atan2(s.x)),
            aoa: wrap_angle((s.y - nu.p_r.y).atan2(s.x - nu.p_r.x) - nu.alpha_r),
            gain: nu.gains[l + 1].to_complex(),
        });
    }
    Ok(ChannelParams { paths })
}

/// Jacobian of the position-to-channel map: `3L` rows (delay, AOD, AOA per
/// path) by `4L + 2` columns in the [`PositionParams::to_vector`] ordering.
/// Gain columns are identically zero; `d tau_l / d eps_clk = 1` for all `l`.
pub fn pos_to_channel_jacobian(nu: &PositionParams) -> Result<DMatrix<f64>, GeometryError> {
    if nu.gains.is_empty() {
        return Err(GeometryError::NoPaths);
    }
    let c = SPEED_OF_LIGHT;
    let l = nu.num_paths();
    let mut j = DMatrix::zeros(3 * l, 4 * l + 2);

    let d0 = nu.p_r.norm();
    check_distance(d0, "Tx-Rx")?;
    // LOS rows.
    j[(0, 0)] = nu.p_r.x / (c * d0);
    j[(0, 1)] = nu.p_r.y / (c * d0);
    j[(0, 3)] = 1.0;
    let inv_sq0 = 1.0 / (d0 * d0);
    j[(1, 0)] = -nu.p_r.y * inv_sq0;
    j[(1, 1)] = nu.p_r.x * inv_sq0;
    j[(2, 0)] = -nu.p_r.y * inv_sq0;
    j[(2, 1)] = nu.p_r.x * inv_sq0;
    j[(2, 2)] = -1.0;

    for (i, s) in nu.scatterers.iter().enumerate() {
        let row = 3 * (i + 1);
        let col_s = 6 + 4 * i;
        let ds = s.norm();
        check_distance(ds, "Tx-scatterer")?;
        let rel = nu.p_r - s;
        let dr = rel.norm();
        check_distance(dr, "scatterer-Rx")?;

        // Delay row.
        j[(row, 0)] = rel.x / (c * dr);
        j[(row, 1)] = rel.y / (c * dr);
        j[(row, 3)] = 1.0;
        j[(row, col_s)] = s.x / (c * ds) - rel.x / (c * dr);
        j[(row, col_s + 1)] = s.y / (c * ds) - rel.y / (c * dr);

        // AOD row: depends only on the scatterer position.
        let inv_sq_s = 1.0 / (ds * ds);
        j[(row + 1, col_s)] = -s.y * inv_sq_s;
        j[(row + 1, col_s + 1)] = s.x * inv_sq_s;

        // AOA row: angle of (s - p_R) minus orientation.
        let delta = s - nu.p_r;
        let inv_sq_d = 1.0 / delta.norm_squared();
        j[(row + 2, col_s)] = -delta.y * inv_sq_d;
        j[(row + 2, col_s + 1)] = delta.x * inv_sq_d;
        j[(row + 2, 0)] = delta.y * inv_sq_d;
        j[(row + 2, 1)] = -delta.x * inv_sq_d;
        j[(row + 2, 2)] = -1.0;
    }
    Ok(j)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::angle_distance;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    const FC: f64 = 38e9;

    fn scenario_mean_params() -> PositionParams {
        PositionParams {
            p_r: Vector2::new(25.0, 10.0),
            alpha_r: 0.3,
            eps_clk: 0.0,
            gains: vec![
                GainPolar::new(1e-4, 0.0),
                GainPolar::new(3e-5, 0.5),
                GainPolar::new(2e-5, -0.4),
                GainPolar::new(4e-5, 2.0),
            ],
            scatterers: vec![
                Vector2::new(15.63, 25.0),
                Vector2::new(10.42, -25.0),
                Vector2::new(60.0, 6.32),
            ],
        }
    }

    #[test]
    fn ula_broadside_is_all_ones() {
        let a = ArrayGeometry::ula(8, FC).unwrap();
        let v = steering_vector(&a, PI / 2.0);
        for e in v.iter() {
            assert!((e - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn ula_endfire_alternates_sign() {
        // Element j has phase pi*j at theta = 0, so entries alternate +1/-1.
        let a = ArrayGeometry::ula(6, FC).unwrap();
        let v = steering_vector(&a, 0.0);
        for (j, e) in v.iter().enumerate() {
            let expect = if j % 2 == 0 { 1.0 } else { -1.0 };
            assert!(
                (e - Complex64::new(expect, 0.0)).norm() < 1e-9,
                "element {j}: {e}"
            );
        }
    }

    #[test]
    fn steering_entries_unit_modulus_and_uca_norm() {
        let a = ArrayGeometry::uca(16, FC).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let theta = rng.gen_range(-PI..PI);
            let v = steering_vector(&a, theta);
            for e in v.iter() {
                assert!((e.norm() - 1.0).abs() < 1e-12);
            }
            assert!((v.norm() - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn steering_derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for array in [
            ArrayGeometry::ula(8, FC).unwrap(),
            ArrayGeometry::uca(16, FC).unwrap(),
        ] {
            for _ in 0..20 {
                let theta = rng.gen_range(-PI..PI);
                let h = 1e-6;
                let fp = steering_vector(&array, theta + h);
                let fm = steering_vector(&array, theta - h);
                let fd = (fp.clone() - fm.clone()) / Complex64::new(2.0 * h, 0.0);
                let an = steering_derivative(&array, theta);
                assert!((&fd - &an).norm() / an.norm().max(1e-12) < 1e-5);
                let f0 = steering_vector(&array, theta);
                let fd2 = (fp + fm - f0.clone() * Complex64::new(2.0, 0.0))
                    / Complex64::new(h * h, 0.0);
                let an2 = steering_second_derivative(&array, theta);
                assert!((&fd2 - &an2).norm() / an2.norm().max(1e-12) < 1e-3);
            }
        }
    }

    #[test]
    fn on_axis_los_channel() {
        let nu = PositionParams {
            p_r: Vector2::new(40.0, 0.0),
            alpha_r: 0.0,
            eps_clk: 0.0,
            gains: vec![GainPolar::new(1.0, 0.0)],
            scatterers: vec![],
        };
        let ch = pos_to_channel(&nu).unwrap();
        assert!((ch.paths[0].delay - 40.0 / SPEED_OF_LIGHT).abs() < 1e-18);
        assert!(ch.paths[0].aod.abs() < 1e-15);
        assert!(angle_distance(ch.paths[0].aoa, PI) < 1e-15);
    }

    #[test]
    fn scenario_mean_channel_values() {
        let nu = scenario_mean_params();
        let ch = pos_to_channel(&nu).unwrap();
        // Recomputed directly from the delay/angle definitions.
        assert!((ch.paths[0].delay * 1e9 - 89.8149).abs() < 1e-3);
        assert!((ch.paths[0].aod - 0.380506).abs() < 1e-5);
        assert!((ch.paths[1].delay * 1e9 - 157.3419).abs() < 1e-3);
        // Clock offset shifts every delay equally.
        let mut nu2 = nu.clone();
        nu2.eps_clk = 10e-9;
        let ch2 = pos_to_channel(&nu2).unwrap();
        for (a, b) in ch.paths.iter().zip(&ch2.paths) {
            assert!(((b.delay - a.delay) - 10e-9).abs() < 1e-18);
            assert_eq!(a.aod, b.aod);
            assert_eq!(a.aoa, b.aoa);
        }
    }

    #[test]
    fn degenerate_geometry_rejected() {
        let mut nu = scenario_mean_params();
        nu.scatterers[1] = nu.p_r; // scatterer on top of the Rx
        assert!(matches!(
            pos_to_channel(&nu),
            Err(GeometryError::Degenerate(_))
        ));
        let mut nu = scenario_mean_params();
        nu.scatterers[0] = Vector2::new(1e-9, 0.0); // on top of the Tx
        assert!(pos_to_channel(&nu).is_err());
        assert!(pos_to_channel_jacobian(&nu).is_err());
    }

    #[test]
    fn nlos_delay_exceeds_los_delay() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let nu = PositionParams {
                p_r: Vector2::new(rng.gen_range(5.0..50.0), rng.gen_range(-30.0..30.0)),
                alpha_r: rng.gen_range(-PI..PI),
                eps_clk: rng.gen_range(-50e-9..50e-9),
                gains: vec![GainPolar::new(1.0, 0.0), GainPolar::new(0.3, 0.0)],
                scatterers: vec![Vector2::new(
                    rng.gen_range(5.0..60.0),
                    rng.gen_range(-40.0..40.0),
                )],
            };
            if let Ok(ch) = pos_to_channel(&nu) {
                assert!(ch.paths[1].delay > ch.paths[0].delay);
            }
        }
    }

    #[test]
    fn vector_round_trip_matches_parameter_layout() {
        let nu = scenario_mean_params();
        let v = nu.to_vector();
        assert_eq!(v.len(), 4 * 4 + 2);
        assert_eq!(v[0], 25.0);
        assert_eq!(v[2], 0.3);
        assert_eq!(v[3], 0.0);
        assert_eq!(v[4], 1e-4); // |h_0|
        assert_eq!(v[6], 15.63); // p_s1 x
        assert_eq!(v[9], 0.5); // arg h_1
        let back = PositionParams::from_vector(&v);
        assert_eq!(back.to_vector(), v);
    }

    #[test]
    fn jacobian_trivial_entries() {
        let nu = scenario_mean_params();
        let j = pos_to_channel_jacobian(&nu).unwrap();
        // d tau_l / d eps = 1 for every path.
        for l in 0..4 {
            assert_eq!(j[(3 * l, 3)], 1.0);
        }
        // d aoa_0 / d alpha = -1.
        assert_eq!(j[(2, 2)], -1.0);
        // Gain columns identically zero.
        for r in 0..j.nrows() {
            for col in [4usize, 5, 8, 9, 12, 13, 16, 17] {
                assert_eq!(j[(r, col)], 0.0);
            }
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let l = rng.gen_range(1..=4usize);
            let nu = PositionParams {
                p_r: Vector2::new(rng.gen_range(5.0..50.0), rng.gen_range(-30.0..30.0)),
                alpha_r: rng.gen_range(-PI..PI),
                eps_clk: rng.gen_range(-50e-9..50e-9),
                gains: (0..l)
                    .map(|_| GainPolar::new(rng.gen_range(0.1..1.0), 0.0))
                    .collect(),
                scatterers: (1..l)
                    .map(|_| Vector2::new(rng.gen_range(5.0..60.0), rng.gen_range(-40.0..40.0)))
                    .collect(),
            };
            let Ok(j) = pos_to_channel_jacobian(&nu) else {
                continue;
            };
            let v0 = nu.to_vector();
            let mut fd = DMatrix::zeros(3 * l, v0.len());
            for col in 0..v0.len() {
                let step = 1e-7 * (1.0 + v0[col].abs());
                let mut vp = v0.clone();
                vp[col] += step;
                let mut vm = v0.clone();
                vm[col] -= step;
                let chp = pos_to_channel(&PositionParams::from_vector(&vp)).unwrap();
                let chm = pos_to_channel(&PositionParams::from_vector(&vm)).unwrap();
                for (pl, (pp, pm)) in chp.paths.iter().zip(&chm.paths).enumerate() {
                    fd[(3 * pl, col)] = (pp.delay - pm.delay) / (2.0 * step);
                    fd[(3 * pl + 1, col)] = wrap_angle(pp.aod - pm.aod) / (2.0 * step);
                    fd[(3 * pl + 2, col)] = wrap_angle(pp.aoa - pm.aoa) / (2.0 * step);
                }
            }
            let rel = (&j - &fd).norm() / j.norm();
            worst = worst.max(rel);
        }
        assert!(worst < 1e-5, "worst relative error {worst:.3e}");
    }
}
