//! Numerical search for a constant positive-definite `Σ` certifying the
//! drift condition `−⟨Σ (∂b)_y x, x⟩ ≥ a ‖x‖²` on a sample of drift
//! Jacobians, i.e. `λ_max(sym(Σ Jᵀ_k)) ≤ −a` for every sample `k`.
//!
//! The outer loop maximizes `a` by bisection; feasibility at a fixed level is
//! decided by projected subgradient descent on the largest-eigenvalue
//! objective over `{Σ = Σᵀ, Σ ⪰ ε I, tr Σ = n}`. Whatever the optimizer
//! does, the returned certificate is re-verified by direct eigensolves, so
//! optimizer quality affects tightness, never soundness.

use serde::{Deserialize, Serialize};

use crate::linalg::{self, sym};
use crate::{CoreError, Matrix, Result};

#[derive(Clone, Debug)]
pub struct SigmaOptions {
    /// Subgradient iterations per feasibility test.
    pub max_iters: usize,
    /// Bisection tolerance on the certified rate.
    pub tol: f64,
    /// Minimum eigenvalue kept during the search.
    pub eps_floor: f64,
    /// Trace of the returned `Σ` (default: the dimension `n`).
    pub trace_gauge: Option<f64>,
}

impl Default for SigmaOptions {
    fn default() -> Self {
        SigmaOptions {
            max_iters: 400,
            tol: 1e-4,
            eps_floor: 1e-6,
            trace_gauge: None,
        }
    }
}

/// A verified drift-condition certificate.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SigmaCertificate {
    /// Symmetric positive definite, `tr Σ = trace_gauge`.
    pub sigma: Vec<Vec<f64>>,
    pub rate_a: f64,
    /// Per-sample `λ_min(−sym(Σ Jᵀ_k)) − a`; all ≥ −1e−8 for a valid
    /// certificate.
    pub residuals: Vec<f64>,
    pub trace_gauge: f64,
    pub bisection_width: f64,
    pub sample_size: usize,
    /// The certificate holds on the supplied Jacobian sample only.
    pub scope_note: String,
}

impl SigmaCertificate {
    pub fn sigma_matrix(&self) -> Matrix {
        let n = self.sigma.len();
        Matrix::from_fn(n, n, |i, j| self.sigma[i][j])
    }
}

/// Search outcome when no positive rate is certifiable.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InfeasibilityReport {
    /// Best achieved `max_k λ_max(sym(Σ Jᵀ_k))`; nonnegative means no
    /// contraction direction was found.
    pub best_phi: f64,
    pub best_sigma: Vec<Vec<f64>>,
    pub iterations: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum SigmaOutcome {
    Certificate(SigmaCertificate),
    Infeasible(InfeasibilityReport),
}

/// Residual recomputation for an existing certificate.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResidualReport {
    pub residuals: Vec<f64>,
    pub min_residual: f64,
    pub pass: bool,
}

fn check_jacobians(jacobians: &[Matrix]) -> Result<usize> {
    if jacobians.is_empty() {
        return Err(CoreError::InvalidInput("need at least one Jacobian sample".into()));
    }
    let n = jacobians[0].nrows();
    for j in jacobians {
        if !j.is_square() || j.nrows() != n {
            return Err(CoreError::dim("find_sigma jacobians", n, j.nrows()));
        }
    }
    Ok(n)
}

/// `max_k λ_max(sym(Σ Jᵀ_k))` and the index attaining it.
fn worst_eig(sigma: &Matrix, jacobians: &[Matrix]) -> (f64, usize) {
    let mut worst = f64::NEG_INFINITY;
    let mut arg = 0;
    for (k, j) in jacobians.iter().enumerate() {
        let v = linalg::max_eig(&sym(&(sigma * j.transpose())));
        if v > worst {
            worst = v;
            arg = k;
        }
    }
    (worst, arg)
}

/// Project onto `{Σ symmetric, eigenvalues ≥ eps, tr Σ = gauge}`: shift the
/// eigenvalue vector and clamp, choosing the shift so the trace constraint
/// holds exactly.
fn project(sigma: &Matrix, eps: f64, gauge: f64) -> Matrix {
    let eig = sym(sigma).symmetric_eigen();
    let lam: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let total = |tau: f64| -> f64 { lam.iter().map(|&l| (l + tau).max(eps)).sum() };
    let mut lo = -lam.iter().cloned().fold(f64::INFINITY, f64::min) - gauge.abs() - 1.0;
    let mut hi = gauge.abs() + 1.0 - lam.iter().cloned().fold(f64::NEG_INFINITY, f64::max).min(0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total(mid) < gauge {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tau = 0.5 * (lo + hi);
    let clamped = nalgebra::DVector::from_iterator(lam.len(), lam.iter().map(|&l| (l + tau).max(eps)));
    &eig.eigenvectors * Matrix::from_diagonal(&clamped) * eig.eigenvectors.transpose()
}

/// Lyapunov warm start from the averaged Jacobian: solve
/// `sym(Σ J̄ᵀ) = −I`, exact for constant-Jacobian drifts.
fn warm_start(jacobians: &[Matrix], n: usize, eps: f64) -> Matrix {
    let mut mean = Matrix::zeros(n, n);
    for j in jacobians {
        mean += j;
    }
    mean /= jacobians.len() as f64;
    // Σ J̄ᵀ + J̄ Σ = −2I  ⇔  A X + X Aᵀ = Q with A = J̄, Q = −2I.
    let q = Matrix::identity(n, n) * -2.0;
    match linalg::lyapunov_solve(&mean, &q) {
        Ok(x) => {
            let x = sym(&x);
            if linalg::min_eig(&x) > 0.0 {
                project(&x, eps, n as f64)
            } else {
                Matrix::identity(n, n)
            }
        }
        Err(_) => Matrix::identity(n, n),
    }
}

/// Minimize `max_k λ_max(sym(Σ Jᵀ_k))` from the given start; stops early once
/// the objective drops below `target`. Returns the best iterate.
fn descend(
    start: &Matrix,
    jacobians: &[Matrix],
    eps: f64,
    gauge: f64,
    max_iters: usize,
    target: f64,
) -> (Matrix, f64, usize) {
    let n = start.nrows();
    let mut sigma = start.clone();
    let mut best = sigma.clone();
    let (mut best_phi, _) = worst_eig(&sigma, jacobians);
    if best_phi <= target {
        return (best, best_phi, 0);
    }
    let mut used = 0;
    for t in 0..max_iters {
        used = t + 1;
        let (_, k) = worst_eig(&sigma, jacobians);
        let m = sym(&(&sigma * jacobians[k].transpose()));
        let (_, u) = linalg::max_eig_pair(&m);
        let w = jacobians[k].transpose() * &u;
        let grad = (&u * w.transpose() + &w * u.transpose()) * 0.5;

        let step = 0.5 * gauge / (n as f64 * (t as f64 + 1.0).sqrt());
        let gnorm = grad.norm();
        if gnorm < 1e-15 {
            break;
        }
        sigma = project(&(&sigma - grad * (step / gnorm)), eps, gauge);
        let (phi, _) = worst_eig(&sigma, jacobians);
        if phi < best_phi {
            best_phi = phi;
            best = sigma.clone();
        }
        if best_phi <= target {
            break;
        }
    }
    (best, best_phi, used)
}

/// Maximize the certified rate `a` by bisection over Jacobian samples.
/// The search runs at the canonical gauge `tr Σ = n` and the result is
/// rescaled exactly to the requested gauge, so rates scale linearly with it.
pub fn find_sigma(jacobians: &[Matrix], opts: &SigmaOptions) -> Result<SigmaOutcome> {
    let n = check_jacobians(jacobians)?;
    let gauge = n as f64;
    let out_gauge = opts.trace_gauge.unwrap_or(gauge);
    if out_gauge <= 0.0 {
        return Err(CoreError::InvalidInput("trace gauge must be positive".into()));
    }
    let eps = opts.eps_floor;

    // Phase 0: is any strictly contracting Σ reachable at all?
    let start = warm_start(jacobians, n, eps);
    let (mut sigma_best, phi0, iters0) =
        descend(&start, jacobians, eps, gauge, opts.max_iters, -opts.tol);
    if phi0 >= 0.0 {
        return Ok(SigmaOutcome::Infeasible(InfeasibilityReport {
            best_phi: phi0,
            best_sigma: matrix_rows(&sigma_best),
            iterations: iters0,
        }));
    }

    let mut a_lo = -phi0; // certified right now
    let mut a_hi = a_lo * 2.0;

    // Grow until infeasible.
    for _ in 0..64 {
        let (cand, phi, _) = descend(
            &sigma_best,
            jacobians,
            eps,
            gauge,
            opts.max_iters,
            -a_hi - opts.tol * 0.1,
        );
        if phi <= -a_hi {
            sigma_best = cand;
            a_lo = a_lo.max(-phi);
            a_hi *= 2.0;
        } else {
            break;
        }
    }

    // Bisect.
    while a_hi - a_lo > opts.tol {
        let mid = 0.5 * (a_lo + a_hi);
        let (cand, phi, _) = descend(
            &sigma_best,
            jacobians,
            eps,
            gauge,
            opts.max_iters,
            -mid - opts.tol * 0.1,
        );
        if phi <= -mid {
            sigma_best = cand;
            a_lo = a_lo.max(-phi);
        } else {
            a_hi = mid;
        }
        if a_lo >= a_hi {
            a_hi = a_lo;
            break;
        }
    }
    let width = (a_hi - a_lo).max(0.0);

    // A-posteriori certification at the canonical gauge.
    let (phi_final, _) = worst_eig(&sigma_best, jacobians);
    let a_final = -phi_final;

    // Exact rescale to the requested gauge.
    let scale = out_gauge / gauge;
    let sigma_out = &sigma_best * scale;
    let a_out = a_final * scale;
    let residuals: Vec<f64> = jacobians
        .iter()
        .map(|j| -linalg::max_eig(&sym(&(&sigma_out * j.transpose()))) - a_out)
        .collect();

    Ok(SigmaOutcome::Certificate(SigmaCertificate {
        sigma: matrix_rows(&sigma_out),
        rate_a: a_out,
        residuals,
        trace_gauge: out_gauge,
        bisection_width: width * scale,
        sample_size: jacobians.len(),
        scope_note: "certified on the supplied Jacobian sample, not globally".to_string(),
    }))
}

/// Recompute residuals of a certificate on (possibly different) Jacobians by
/// direct symmetric eigensolves.
pub fn verify_certificate(cert: &SigmaCertificate, jacobians: &[Matrix]) -> Result<ResidualReport> {
    let n = check_jacobians(jacobians)?;
    let sigma = cert.sigma_matrix();
    if sigma.nrows() != n {
        return Err(CoreError::dim("verify_certificate", sigma.nrows(), n));
    }
    let residuals: Vec<f64> = jacobians
        .iter()
        .map(|j| linalg::min_eig(&(-sym(&(&sigma * j.transpose())))) - cert.rate_a)
        .collect();
    let min_residual = residuals.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(ResidualReport {
        residuals,
        min_residual,
        pass: min_residual >= -1e-8,
    })
}

pub(crate) fn matrix_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kfp_jacobian(lambda: f64) -> Matrix {
        Matrix::from_row_slice(2, 2, &[0.0, 1.0, -lambda, -1.0])
    }

    #[test]
    fn negative_identity_certifies_unit_rate() {
        let out = find_sigma(&[Matrix::identity(3, 3) * -1.0], &SigmaOptions::default()).unwrap();
        match out {
            SigmaOutcome::Certificate(cert) => {
                assert!((cert.rate_a - 1.0).abs() < 1e-3, "rate {}", cert.rate_a);
                assert!((cert.sigma_matrix() - Matrix::identity(3, 3)).amax() < 1e-2);
                assert!(cert.bisection_width <= 1e-4 + 1e-12);
            }
            other => panic!("expected certificate, got {other:?}"),
        }
    }

    #[test]
    fn expanding_drift_is_infeasible() {
        let out = find_sigma(&[Matrix::identity(2, 2)], &SigmaOptions::default()).unwrap();
        match out {
            SigmaOutcome::Infeasible(report) => assert!(report.best_phi >= 0.0),
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn kfp_jacobian_family_is_feasible_and_consistent() {
        let jacobians: Vec<Matrix> = [1.0, 1.5, 2.25].iter().map(|&l| kfp_jacobian(l)).collect();
        let out = find_sigma(&jacobians, &SigmaOptions::default()).unwrap();
        let cert = match out {
            SigmaOutcome::Certificate(c) => c,
            other => panic!("expected certificate, got {other:?}"),
        };
        assert!(cert.residuals.iter().all(|&r| r >= -1e-8));

        // At least half the rate implied by the closed-form construction.
        let params = crate::kfp::solve_kfp_params(1.0, 2.25, 0.05).unwrap();
        let implied = params.implied_euclidean_rate();
        assert!(
            cert.rate_a >= implied / 2.0,
            "search rate {} below half the closed-form rate {}",
            cert.rate_a,
            implied
        );
    }

    #[test]
    fn returned_certificates_verify_a_posteriori() {
        let jacobians: Vec<Matrix> = [1.0, 2.0].iter().map(|&l| kfp_jacobian(l)).collect();
        if let SigmaOutcome::Certificate(cert) =
            find_sigma(&jacobians, &SigmaOptions::default()).unwrap()
        {
            let report = verify_certificate(&cert, &jacobians).unwrap();
            assert!(report.pass, "min residual {}", report.min_residual);
            // Interior eigenvalues keep the inequality strict.
            let interior: Vec<Matrix> = [1.2, 1.7].iter().map(|&l| kfp_jacobian(l)).collect();
            let report = verify_certificate(&cert, &interior).unwrap();
            assert!(report.pass);
            // An expanding Jacobian breaks it decisively.
            let report = verify_certificate(&cert, &[Matrix::identity(2, 2)]).unwrap();
            assert!(report.min_residual <= -cert.rate_a + 1e-12);
        } else {
            panic!("expected certificate");
        }
    }

    #[test]
    fn doubling_the_trace_gauge_doubles_the_rate() {
        let jacobians: Vec<Matrix> = [1.0, 1.5, 2.25].iter().map(|&l| kfp_jacobian(l)).collect();
        let base = find_sigma(&jacobians, &SigmaOptions::default()).unwrap();
        let doubled = find_sigma(
            &jacobians,
            &SigmaOptions {
                trace_gauge: Some(4.0),
                ..SigmaOptions::default()
            },
        )
        .unwrap();
        match (base, doubled) {
            (SigmaOutcome::Certificate(b), SigmaOutcome::Certificate(d)) => {
                assert!((d.rate_a - 2.0 * b.rate_a).abs() <= 1e-8);
                assert!((d.sigma_matrix() - b.sigma_matrix() * 2.0).amax() <= 1e-8);
            }
            _ => panic!("both searches should certify"),
        }
    }

    #[test]
    fn adding_samples_never_improves_the_rate() {
        let small = vec![Matrix::identity(2, 2) * -1.0];
        let larger = vec![Matrix::identity(2, 2) * -1.0, Matrix::identity(2, 2) * -0.5];
        let opts = SigmaOptions::default();
        let a_small = match find_sigma(&small, &opts).unwrap() {
            SigmaOutcome::Certificate(c) => c.rate_a,
            _ => panic!(),
        };
        let a_large = match find_sigma(&larger, &opts).unwrap() {
            SigmaOutcome::Certificate(c) => c.rate_a,
            _ => panic!(),
        };
        assert!(a_large <= a_small + 2.0 * opts.tol);
        assert!((a_large - 0.5).abs() < 1e-2);
    }

    #[test]
    fn rejects_ragged_input() {
        let jacobians = vec![Matrix::identity(2, 2), Matrix::identity(3, 3)];
        assert!(find_sigma(&jacobians, &SigmaOptions::default()).is_err());
        assert!(find_sigma(&[], &SigmaOptions::default()).is_err());
    }
}
