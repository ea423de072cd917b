//! Exact integration against centered Gaussians with diagonal covariance —
//! the invariant measures of the kinetic Fokker-Planck operator with
//! quadratic potential (`e^{−V(x)−‖v‖²/2}` has covariance
//! `diag(ω⁻² I, I)` for `V = ω²‖x‖²/2`).

use crate::poly::Poly;
use crate::{CoreError, Matrix, Result};

/// Centered Gaussian with diagonal covariance.
#[derive(Clone, Debug)]
pub struct DiagonalGaussian {
    variances: Vec<f64>,
}

impl DiagonalGaussian {
    pub fn new(variances: Vec<f64>) -> Result<Self> {
        if variances.is_empty() || variances.iter().any(|&v| v <= 0.0) {
            return Err(CoreError::InvalidInput("variances must be positive".into()));
        }
        Ok(DiagonalGaussian { variances })
    }

    /// Invariant measure of the kinetic Fokker-Planck dynamics with
    /// `V = ω²‖x‖²/2` on `(x, v) ∈ ℝ²ⁿ`.
    pub fn kfp_invariant(n: usize, omega: f64) -> Self {
        let mut variances = vec![1.0 / (omega * omega); n];
        variances.extend(std::iter::repeat(1.0).take(n));
        DiagonalGaussian { variances }
    }

    pub fn dim(&self) -> usize {
        self.variances.len()
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn covariance(&self) -> Matrix {
        Matrix::from_diagonal(&crate::Point::from_column_slice(&self.variances))
    }

    pub fn expect_poly(&self, p: &Poly) -> Result<f64> {
        if p.dim() != self.dim() {
            return Err(CoreError::dim("expect_poly", self.dim(), p.dim()));
        }
        Ok(p.gaussian_moment_diag(&self.variances))
    }

    pub fn variance_poly(&self, p: &Poly) -> Result<f64> {
        let mean = self.expect_poly(p)?;
        let second = self.expect_poly(&p.mul(p))?;
        Ok(second - mean * mean)
    }

    /// `∫ ∇pᵀ Σ ∇p dμ` for a polynomial and a constant metric matrix.
    pub fn t_integral_poly(&self, p: &Poly, sigma: &Matrix) -> Result<f64> {
        if sigma.nrows() != self.dim() {
            return Err(CoreError::dim("t_integral_poly", self.dim(), sigma.nrows()));
        }
        let grads = p.gradient();
        let mut total = 0.0;
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                let c = sigma[(i, j)];
                if c == 0.0 {
                    continue;
                }
                total += c * self.expect_poly(&grads[i].mul(&grads[j]))?;
            }
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::gaussian_expectation_quadrature;
    use crate::Point;

    #[test]
    fn poly_moments_agree_with_quadrature() {
        let mu = DiagonalGaussian::kfp_invariant(1, 1.3);
        // f(x, v) = x² v + v³ − x
        let f = Poly::monomial(2, &[2, 1], 1.0)
            .add(&Poly::monomial(2, &[0, 3], 1.0))
            .add(&Poly::monomial(2, &[1, 0], -1.0));
        let exact = mu.expect_poly(&f.mul(&f)).unwrap();
        let quad = gaussian_expectation_quadrature(
            &|z: &Point| {
                let v = f.eval(z);
                v * v
            },
            mu.variances(),
            10,
        );
        assert!((exact - quad).abs() <= 1e-10 * (1.0 + exact.abs()));
    }

    #[test]
    fn t_integral_matches_directional_variance() {
        // For f = uᵀz, ∫∇fᵀΣ∇f dμ = uᵀΣu independent of μ.
        let mu = DiagonalGaussian::new(vec![0.7, 2.0]).unwrap();
        let sigma = Matrix::from_row_slice(2, 2, &[1.0, -0.2, -0.2, 0.5]);
        let f = Poly::variable(2, 0).scale(2.0).add(&Poly::variable(2, 1).scale(-1.0));
        let u = Point::from_column_slice(&[2.0, -1.0]);
        let expected = (&sigma * &u).dot(&u);
        assert!((mu.t_integral_poly(&f, &sigma).unwrap() - expected).abs() < 1e-12);
    }
}
