//! Gaussian prior over the link geometry and the path-gain model.
//!
//! The prior covers `[p_R, (p_s1, rho_1), ..., (p_s(L-1), rho_(L-1))]`,
//! with reflection coefficients rho in dB. Gain magnitudes follow free-space
//! spreading: `|h_0| = lambda/(4 pi d_0)` for the LOS and
//! `|h_l| = sqrt(rho_l) lambda / (4 pi (d_Tx,s + d_s,Rx))` for bounce paths.
//! Because rho is Gaussian in dB, `sqrt(rho)` and `rho` in linear units are
//! lognormal with closed-form means; those moments are what the reduced
//! allocation strategies substitute for nested gain sampling.

use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen, Vector2};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::geometry::{GainPolar, PositionParams};
use crate::SPEED_OF_LIGHT;

#[derive(Debug, Error)]
pub enum PriorError {
    #[error("prior dimension {0} is not 2 + 3(L-1) for any L >= 1")]
    BadDimension(usize),
    #[error("covariance is not symmetric (max skew {0:.3e})")]
    NotSymmetric(f64),
    #[error("covariance is not positive semidefinite (eigmin {0:.3e})")]
    NotPsd(f64),
    #[error("sigma_clk must be positive or +inf, got {0}")]
    BadSigmaClk(f64),
}

/// Gaussian prior on geometry plus the deterministic-spreading gain model.
#[derive(Debug, Clone)]
pub struct PriorModel {
    /// Mean of `[p_R, (p_s, rho_dB) x (L-1)]`.
    pub mean: DVector<f64>,
    /// Covariance, same ordering.
    pub cov: DMatrix<f64>,
    /// Clock-offset standard deviation in seconds.
    pub sigma_clk: f64,
    /// Carrier frequency (sets the wavelength of the gain model).
    pub carrier_frequency: f64,
    /// Rx orientation used when building parameter vectors (the SPEB of a
    /// circular Rx array does not depend on it).
    pub mean_orientation: f64,
    /// Square root of the covariance for sampling.
    sqrt_cov: DMatrix<f64>,
}

impl PriorModel {
    pub fn new(
        mean: DVector<f64>,
        cov: DMatrix<f64>,
        sigma_clk: f64,
        carrier_frequency: f64,
        mean_orientation: f64,
    ) -> Result<Self, PriorError> {
        let n = mean.len();
        if n < 2 || (n - 2) % 3 != 0 || cov.nrows() != n || cov.ncols() != n {
            return Err(PriorError::BadDimension(n));
        }
        if !(sigma_clk > 0.0) {
            return Err(PriorError::BadSigmaClk(sigma_clk));
        }
        let mut skew: f64 = 0.0;
        for r in 0..n {
            for c in (r + 1)..n {
                skew = skew.max((cov[(r, c)] - cov[(c, r)]).abs());
            }
        }
        if skew > 1e-9 * cov.norm().max(1.0) {
            return Err(PriorError::NotSymmetric(skew));
        }
        let eig = SymmetricEigen::new(cov.clone());
        let lmin = eig.eigenvalues.min();
        if lmin < -1e-9 * eig.eigenvalues.amax().max(1.0) {
            return Err(PriorError::NotPsd(lmin));
        }
        let mut sqrt_cov = DMatrix::zeros(n, n);
        for i in 0..n {
            let s = eig.eigenvalues[i].max(0.0).sqrt();
            let v = eig.eigenvectors.column(i);
            sqrt_cov += s * v * v.transpose();
        }
        Ok(Self {
            mean,
            cov,
            sigma_clk,
            carrier_frequency,
            mean_orientation,
            sqrt_cov,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Number of propagation paths (LOS + one per scatterer).
    pub fn num_paths(&self) -> usize {
        (self.dim() - 2) / 3 + 1
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency
    }

    /// Indices of `p_{s,l}` in the prior vector (`l >= 1`).
    pub fn scatterer_indices(&self, l: usize) -> (usize, usize) {
        let base = 2 + 3 * (l - 1);
        (base, base + 1)
    }

    /// Index of `rho_l` (dB) in the prior vector (`l >= 1`).
    pub fn rho_index(&self, l: usize) -> usize {
        2 + 3 * (l - 1) + 2
    }

    /// Indices of all position coordinates (Rx plus scatterers).
    pub fn position_indices(&self) -> Vec<usize> {
        let mut idx = vec![0, 1];
        for l in 1..self.num_paths() {
            let (a, b) = self.scatterer_indices(l);
            idx.push(a);
            idx.push(b);
        }
        idx
    }

    /// 2D marginal of the Rx position (`l = 0`) or scatterer `l`.
    pub fn marginal_2d(&self, l: usize) -> (Vector2<f64>, Matrix2<f64>) {
        let (i, j) = if l == 0 {
            (0, 1)
        } else {
            self.scatterer_indices(l)
        };
        (
            Vector2::new(self.mean[i], self.mean[j]),
            Matrix2::new(
                self.cov[(i, i)],
                self.cov[(i, j)],
                self.cov[(j, i)],
                self.cov[(j, j)],
            ),
        )
    }

    /// Marginal over the position coordinates only (drops the rho entries).
    pub fn position_marginal(&self) -> (DVector<f64>, DMatrix<f64>) {
        let idx = self.position_indices();
        (
            DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.mean[i])),
            DMatrix::from_fn(idx.len(), idx.len(), |r, c| self.cov[(idx[r], idx[c])]),
        )
    }

    /// Conditional mean of the full prior vector given `p_R`.
    pub fn conditional_mean_given_rx(&self, p_r: Vector2<f64>) -> DVector<f64> {
        let n = self.dim();
        let srr = Matrix2::new(
            self.cov[(0, 0)],
            self.cov[(0, 1)],
            self.cov[(1, 0)],
            self.cov[(1, 1)],
        );
        let inv = srr.try_inverse().expect("Rx block must be invertible");
        let delta = inv * (p_r - Vector2::new(self.mean[0], self.mean[1]));
        let mut mean = self.mean.clone();
        mean[0] = p_r.x;
        mean[1] = p_r.y;
        for i in 2..n {
            mean[i] += self.cov[(i, 0)] * delta.x + self.cov[(i, 1)] * delta.y;
        }
        mean
    }

    /// One draw from the prior (full vector, rho entries in dB).
    pub fn sample<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.mean + &self.sqrt_cov * z
    }

    /// LOS gain magnitude at Tx-Rx distance `d0`.
    pub fn los_gain(&self, d0: f64) -> f64 {
        self.wavelength() / (4.0 * std::f64::consts::PI * d0)
    }

    /// Bounce-path gain magnitude for total path length `d` and `rho` in dB.
    pub fn nlos_gain(&self, total_path_m: f64, rho_db: f64) -> f64 {
        let rho_lin = 10f64.powf(0.1 * rho_db);
        rho_lin.sqrt() * self.wavelength() / (4.0 * std::f64::consts::PI * total_path_m)
    }

    /// Lognormal moments `E[|h_l|]` and `E[|h_l|^2]` of a bounce path's gain
    /// given its geometry, with `rho_l ~ N(mean_db, sigma_db^2)` in dB.
    pub fn nlos_gain_moments(&self, total_path_m: f64, mean_db: f64, sigma_db: f64) -> (f64, f64) {
        let kappa = std::f64::consts::LN_10 / 10.0;
        let a = self.wavelength() / (4.0 * std::f64::consts::PI * total_path_m);
        let m1 = a * (0.5 * kappa * mean_db + 0.125 * kappa * kappa * sigma_db * sigma_db).exp();
        let m2 =
            a * a * (kappa * mean_db + 0.5 * kappa * kappa * sigma_db * sigma_db).exp();
        (m1, m2)
    }

    /// Builds position parameters from a prior vector: gains follow the
    /// spreading model, phases and clock offset as given.
    pub fn position_params(
        &self,
        draw: &DVector<f64>,
        eps_clk: f64,
        phases: &[f64],
    ) -> PositionParams {
        let l = self.num_paths();
        assert_eq!(phases.len(), l, "need one phase per path");
        let p_r = Vector2::new(draw[0], draw[1]);
        let d0 = p_r.norm();
        let mut gains = vec![GainPolar::new(self.los_gain(d0), phases[0])];
        let mut scatterers = Vec::with_capacity(l - 1);
        for path in 1..l {
            let (i, j) = self.scatterer_indices(path);
            let s = Vector2::new(draw[i], draw[j]);
            let total = s.norm() + (p_r - s).norm();
            gains.push(GainPolar::new(
                self.nlos_gain(total, draw[self.rho_index(path)]),
                phases[path],
            ));
            scatterers.push(s);
        }
        PositionParams {
            p_r,
            alpha_r: self.mean_orientation,
            eps_clk,
            gains,
            scatterers,
        }
    }

    /// Position parameters at the prior mean (zero phases, zero offset).
    pub fn mean_params(&self) -> PositionParams {
        self.position_params(&self.mean.clone(), 0.0, &vec![0.0; self.num_paths()])
    }

    /// Draws position parameters for bound evaluation: geometry and rho from
    /// the prior, zero phases and zero clock offset (the Fisher information
    /// does not depend on either).
    pub fn draw_params<R: Rng>(&self, rng: &mut R) -> PositionParams {
        let v = self.sample(rng);
        self.position_params(&v, 0.0, &vec![0.0; self.num_paths()])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_prior() -> PriorModel {
        // LOS + one scatterer.
        let mean = DVector::from_vec(vec![20.0, 5.0, 10.0, 15.0, -10.0]);
        let mut cov = DMatrix::zeros(5, 5);
        cov[(0, 0)] = 4.0;
        cov[(1, 1)] = 4.0;
        cov[(2, 2)] = 2.0;
        cov[(3, 3)] = 1.0;
        cov[(4, 4)] = 16.0;
        cov[(0, 2)] = 1.5;
        cov[(2, 0)] = 1.5;
        PriorModel::new(mean, cov, 16e-9, 38e9, 0.0).unwrap()
    }

    #[test]
    fn dimension_and_index_helpers() {
        let p = toy_prior();
        assert_eq!(p.num_paths(), 2);
        assert_eq!(p.scatterer_indices(1), (2, 3));
        assert_eq!(p.rho_index(1), 4);
        assert_eq!(p.position_indices(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn non_psd_covariance_rejected() {
        let mean = DVector::zeros(5);
        let mut cov = DMatrix::identity(5, 5);
        cov[(0, 1)] = 2.0;
        cov[(1, 0)] = 2.0; // 2x2 block [-1 eigenvalue]
        assert!(matches!(
            PriorModel::new(mean, cov, 1e-9, 38e9, 0.0),
            Err(PriorError::NotPsd(_))
        ));
    }

    #[test]
    fn sampling_matches_moments() {
        let p = toy_prior();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 20000;
        let mut mean = DVector::zeros(5);
        let mut second = DMatrix::zeros(5, 5);
        for _ in 0..n {
            let v = p.sample(&mut rng);
            mean += &v / n as f64;
            second += &v * v.transpose() / n as f64;
        }
        let cov_emp = second - &mean * mean.transpose();
        assert!((mean - &p.mean).amax() < 0.1);
        assert!((cov_emp - &p.cov).amax() < 0.5);
    }

    #[test]
    fn conditional_mean_shifts_correlated_entries() {
        let p = toy_prior();
        // p_s1.x correlates with p_R.x (cov 1.5, var 4).
        let cond = p.conditional_mean_given_rx(Vector2::new(24.0, 5.0));
        assert_eq!(cond[0], 24.0);
        assert!((cond[2] - (10.0 + 1.5 / 4.0 * 4.0)).abs() < 1e-12);
        assert_eq!(cond[3], 15.0); // uncorrelated
    }

    #[test]
    fn gain_moments_match_monte_carlo() {
        let p = toy_prior();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let total = 30.0;
        let (m1, m2) = p.nlos_gain_moments(total, -10.0, 4.0);
        let n = 200000;
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for _ in 0..n {
            let rho_db = -10.0 + 4.0 * rng.sample::<f64, _>(StandardNormal);
            let g = p.nlos_gain(total, rho_db);
            s1 += g / n as f64;
            s2 += g * g / n as f64;
        }
        assert!((s1 - m1).abs() / m1 < 0.01, "{s1} vs {m1}");
        assert!((s2 - m2).abs() / m2 < 0.02, "{s2} vs {m2}");
    }

    #[test]
    fn params_construction_uses_gain_model() {
        let p = toy_prior();
        let nu = p.mean_params();
        assert_eq!(nu.num_paths(), 2);
        let d0 = (20.0f64 * 20.0 + 25.0).sqrt();
        assert!((nu.gains[0].magnitude - p.los_gain(d0)).abs() < 1e-15);
        let total = (10.0f64 * 10.0 + 225.0).sqrt() + ((20.0f64 - 10.0).powi(2) + 100.0).sqrt();
        assert!((nu.gains[1].magnitude - p.nlos_gain(total, -10.0)).abs() < 1e-15);
    }
}
