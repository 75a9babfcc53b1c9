//! Single-anchor mmWave MIMO-OFDM positioning toolkit.
//!
//! Covers the full loop of a downlink positioning system with imperfectly
//! synchronized clocks:
//!
//! - `geometry`: 2D array/multipath geometry and the position-to-channel
//!   parameter map with its analytic Jacobian;
//! - `waveform`: OFDM reference signals on a beam codebook, atom matrices,
//!   and noisy observation synthesis;
//! - `fisher`: hybrid Fisher information, squared position error bound
//!   (SPEB), and its expectation over a geometry prior;
//! - `allocate`: beam power allocation strategies minimizing the expected
//!   SPEB (full SDP, Jensen-reduced, per-path suboptimal, uniform benchmark);
//! - `estimate`: gridless channel-parameter estimation by alternating
//!   conditional-gradient descent (detection, sparse gain update, pruning,
//!   local Newton refinement);
//! - `locate`: mapping of channel estimates to position/orientation/clock
//!   offset via weighted least squares with Levenberg-Marquardt;
//! - `harness`: scenario files, Monte Carlo experiment runners, CSV/SVG
//!   emission, and the `beamloc` CLI plumbing.
//!
//! Powers are handled in milliwatts internally and dBm at interfaces; angles
//! are radians in `[-pi, pi)`; delays are seconds.

pub mod allocate;
pub mod estimate;
pub mod fisher;
pub mod geometry;
pub mod harness;
pub mod locate;
pub mod quad;
pub mod waveform;

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_angle(theta: f64) -> f64 {
    use std::f64::consts::PI;
    let two_pi = 2.0 * PI;
    let mut t = (theta + PI).rem_euclid(two_pi) - PI;
    if t >= PI {
        t -= two_pi;
    }
    t
}

/// Distance between two angles on the circle (always in `[0, pi]`).
pub fn angle_distance(a: f64, b: f64) -> f64 {
    wrap_angle(a - b).abs()
}

/// dBm to milliwatts.
pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(0.1 * dbm)
}

/// Milliwatts to dBm.
pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn wrap_angle_range_and_period() {
        assert_eq!(wrap_angle(0.0), 0.0);
        assert!((wrap_angle(PI) - (-PI)).abs() < 1e-15);
        assert!((wrap_angle(-PI) - (-PI)).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI) - (-PI)).abs() < 1e-12);
        for k in -5..=5 {
            let t = 0.7;
            assert!((wrap_angle(t + 2.0 * PI * k as f64) - t).abs() < 1e-12);
        }
    }

    #[test]
    fn power_units_round_trip() {
        assert!((dbm_to_mw(0.0) - 1.0).abs() < 1e-15);
        assert!((dbm_to_mw(30.0) - 1000.0).abs() < 1e-9);
        assert!((mw_to_dbm(dbm_to_mw(-7.3)) + 7.3).abs() < 1e-12);
    }
}
