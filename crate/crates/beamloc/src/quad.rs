//! Gaussian quadrature rules (Golub-Welsch) and Gaussian cubatures.
//!
//! Nodes and weights come from the symmetric eigendecomposition of the
//! Jacobi matrix of the orthogonal-polynomial recurrence. An n-point rule
//! integrates polynomials up to degree `2n - 1` exactly; the tensor-product
//! 2D cubature built from the 3-point Hermite rule is the 9-point rule of
//! degree 5 used for scatterer marginals.

use nalgebra::{DMatrix, Matrix2, SymmetricEigen, Vector2};

/// Nodes/weights for `E[f(Z)]`, `Z ~ N(0,1)` (probabilists' Hermite).
/// Weights sum to 1.
pub fn gauss_hermite(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let mut jac = DMatrix::zeros(n, n);
    for k in 1..n {
        let b = (k as f64).sqrt();
        jac[(k - 1, k)] = b;
        jac[(k, k - 1)] = b;
    }
    from_jacobi(jac, 1.0)
}

/// Nodes/weights for `integral_{-1}^{1} f(x) dx` (Gauss-Legendre).
/// Weights sum to 2.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let mut jac = DMatrix::zeros(n, n);
    for k in 1..n {
        let kf = k as f64;
        let b = kf / (4.0 * kf * kf - 1.0).sqrt();
        jac[(k - 1, k)] = b;
        jac[(k, k - 1)] = b;
    }
    from_jacobi(jac, 2.0)
}

fn from_jacobi(jac: DMatrix<f64>, total_mass: f64) -> Vec<(f64, f64)> {
    let eig = SymmetricEigen::new(jac);
    let mut rule: Vec<(f64, f64)> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(i, &x)| (x, total_mass * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    rule.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    rule
}

/// Tensor-product cubature for `E[f(X)]`, `X ~ N(mean, cov)` in 2D.
/// `per_dim = 3` gives the 9-point rule, exact for polynomials of degree 5.
pub fn gauss_cubature_2d(
    mean: Vector2<f64>,
    cov: Matrix2<f64>,
    per_dim: usize,
) -> Vec<(Vector2<f64>, f64)> {
    let l = cov
        .cholesky()
        .map(|c| c.l())
        .unwrap_or_else(|| {
            // PSD but singular covariance: take a symmetric square root.
            let eig = SymmetricEigen::new(cov);
            let mut m = Matrix2::zeros();
            for i in 0..2 {
                let lam = eig.eigenvalues[i].max(0.0).sqrt();
                let v = eig.eigenvectors.column(i);
                m += lam * v * v.transpose();
            }
            m
        });
    let rule = gauss_hermite(per_dim);
    let mut points = Vec::with_capacity(per_dim * per_dim);
    for &(x1, w1) in &rule {
        for &(x2, w2) in &rule {
            points.push((mean + l * Vector2::new(x1, x2), w1 * w2));
        }
    }
    points
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Moments of N(0,1): 1, 0, 1, 0, 3, 0, 15, ...
    fn std_normal_moment(k: u32) -> f64 {
        match k {
            0 => 1.0,
            k if k % 2 == 1 => 0.0,
            k => ((1..=k / 2).map(|j| (2 * j - 1) as f64)).product(),
        }
    }

    #[test]
    fn hermite_rule_exact_to_degree() {
        for n in 1..=8usize {
            let rule = gauss_hermite(n);
            assert!((rule.iter().map(|r| r.1).sum::<f64>() - 1.0).abs() < 1e-12);
            for k in 0..=(2 * n as u32 - 1) {
                let got: f64 = rule.iter().map(|&(x, w)| w * x.powi(k as i32)).sum();
                let expect = std_normal_moment(k);
                // Odd moments vanish by cancellation of O(|x|^k) terms, so
                // tolerate rounding at that scale.
                let scale: f64 = rule.iter().map(|&(x, w)| w * x.abs().powi(k as i32)).sum();
                assert!(
                    (got - expect).abs() < 1e-12 * scale.max(1.0),
                    "n = {n}, moment {k}: {got}"
                );
            }
        }
    }

    #[test]
    fn hermite_three_point_closed_form() {
        // Nodes -sqrt(3), 0, sqrt(3) with weights 1/6, 2/3, 1/6.
        let rule = gauss_hermite(3);
        assert!((rule[0].0 + 3f64.sqrt()).abs() < 1e-12);
        assert!(rule[1].0.abs() < 1e-12);
        assert!((rule[2].0 - 3f64.sqrt()).abs() < 1e-12);
        assert!((rule[0].1 - 1.0 / 6.0).abs() < 1e-12);
        assert!((rule[1].1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn legendre_rule_integrates_polynomials() {
        let rule = gauss_legendre(5);
        assert!((rule.iter().map(|r| r.1).sum::<f64>() - 2.0).abs() < 1e-12);
        // integral of x^4 over [-1,1] = 2/5; degree 9 still exact for n = 5.
        let got: f64 = rule.iter().map(|&(x, w)| w * x.powi(4)).sum();
        assert!((got - 0.4).abs() < 1e-12);
        let got9: f64 = rule.iter().map(|&(x, w)| w * x.powi(8)).sum();
        assert!((got9 - 2.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn nine_point_cubature_matches_gaussian_moments_to_degree_5() {
        let mean = Vector2::new(1.5, -2.0);
        let cov = Matrix2::new(2.0, 0.7, 0.7, 1.2);
        let pts = gauss_cubature_2d(mean, cov, 3);
        assert_eq!(pts.len(), 9);
        // E[(x - mx)^a (y - my)^b] for a + b <= 5 from Isserlis' theorem.
        let sxx = cov[(0, 0)];
        let sxy = cov[(0, 1)];
        let syy = cov[(1, 1)];
        let cases: Vec<((u32, u32), f64)> = vec![
            ((0, 0), 1.0),
            ((1, 0), 0.0),
            ((0, 1), 0.0),
            ((2, 0), sxx),
            ((1, 1), sxy),
            ((0, 2), syy),
            ((3, 0), 0.0),
            ((2, 1), 0.0),
            ((4, 0), 3.0 * sxx * sxx),
            ((3, 1), 3.0 * sxx * sxy),
            ((2, 2), sxx * syy + 2.0 * sxy * sxy),
            ((5, 0), 0.0),
            ((3, 2), 0.0),
        ];
        for ((a, b), expect) in cases {
            let got: f64 = pts
                .iter()
                .map(|(p, w)| {
                    w * (p.x - mean.x).powi(a as i32) * (p.y - mean.y).powi(b as i32)
                })
                .sum();
            assert!(
                (got - expect).abs() < 1e-9 * expect.abs().max(1.0),
                "moment ({a},{b}): got {got}, expected {expect}"
            );
        }
    }
}
