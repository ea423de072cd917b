//! Poincaré inequality check for the invariant measure of the kinetic
//! Fokker-Planck dynamics with quadratic potential:
//! `Var_μ(f) ≤ (a/K) ∫ T(f) dμ`, where `a` is the smallest constant with
//! `Γ ≤ a·T` and `K` the certified contraction rate.
//!
//! The measure is exactly Gaussian, so polynomial test functions integrate in
//! closed form; Gauss-Hermite quadrature provides the independent route and
//! handles the non-polynomial families.

use crate::gaussian::DiagonalGaussian;
use crate::kfp::PotentialSpec;
use crate::linalg;
use crate::operator::MetricForm;
use crate::oracles::gaussian_expectation_quadrature;
use crate::testfn::TestFunction;
use crate::{CoreError, Matrix, Point, Result};

use super::{Provenance, Verdict, VerificationReport};

const BOUND_SLACK: f64 = 1e-8;
const MOMENT_XCHECK_TOL: f64 = 1e-10;

/// Smallest `a` with `Γ(f) ≤ a·T(f)` pointwise: the largest generalized
/// eigenvalue of the diffusion matrix against the metric.
pub fn gamma_vs_t_ratio(diffusion: &Matrix, s: &MetricForm) -> Result<f64> {
    linalg::gen_eig_max(diffusion, s.matrix())
}

fn kfp_diffusion(n: usize) -> Matrix {
    let mut a = Matrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        a[(n + i, n + i)] = 1.0;
    }
    a
}

/// Run the Poincaré check for the given test functions. `rho` is the
/// certified rate `K`; a nonpositive rate makes the bound vacuous and the
/// verdict degenerate.
pub fn check_poincare(
    pot: &PotentialSpec,
    s: &MetricForm,
    rho: f64,
    test_fns: &[TestFunction],
    quad_nodes: usize,
) -> Result<VerificationReport> {
    let omega = pot.quadratic_omega().ok_or_else(|| {
        CoreError::Unsupported(
            "Poincaré check needs a quadratic potential (exact invariant measure)".into(),
        )
    })?;
    let n = pot.n();
    if s.dim() != 2 * n {
        return Err(CoreError::dim("check_poincare metric", 2 * n, s.dim()));
    }
    if test_fns.is_empty() {
        return Err(CoreError::InvalidInput("need at least one test function".into()));
    }
    let mu = DiagonalGaussian::kfp_invariant(n, omega);
    let a_gamma = gamma_vs_t_ratio(&kfp_diffusion(n), s)?;

    let mut provenance = Provenance::with_tolerance(BOUND_SLACK);
    provenance.note("a_gamma", format!("{a_gamma:.12e}"));
    provenance.note("rho", rho);
    provenance.note("quad_nodes", quad_nodes);
    provenance.note("n_functions", test_fns.len());

    if rho <= 0.0 {
        provenance.note("degenerate", "nonpositive contraction rate");
        return Ok(VerificationReport {
            check_name: "poincare".to_string(),
            verdict: Verdict::Degenerate,
            margin: f64::NEG_INFINITY,
            series: Vec::new(),
            provenance,
        });
    }

    let nodes = quad_nodes.max(6);
    let mut margin = f64::INFINITY;
    let mut worst_xcheck = 0.0f64;
    let mut inconclusive = false;

    for (idx, f) in test_fns.iter().enumerate() {
        if f.dim() != 2 * n {
            return Err(CoreError::dim("check_poincare function", 2 * n, f.dim()));
        }
        let quad_var = {
            let mean = gaussian_expectation_quadrature(&|z: &Point| f.value(z), mu.variances(), nodes);
            let second =
                gaussian_expectation_quadrature(&|z: &Point| f.value(z).powi(2), mu.variances(), nodes);
            second - mean * mean
        };
        let t_of = |z: &Point| {
            let g = f.grad(z);
            (s.matrix() * &g).dot(&g)
        };
        let quad_t = gaussian_expectation_quadrature(&t_of, mu.variances(), nodes);

        let (var, t_int) = if let Some(p) = f.poly() {
            let var = mu.variance_poly(p)?;
            let t_int = mu.t_integral_poly(p, s.matrix())?;
            let dev = ((var - quad_var).abs() / (1.0 + var.abs()))
                .max((t_int - quad_t).abs() / (1.0 + t_int.abs()));
            worst_xcheck = worst_xcheck.max(dev);
            if dev > MOMENT_XCHECK_TOL {
                provenance.note("xcheck_failure_fn", idx);
            }
            (var, t_int)
        } else {
            // Non-polynomial families: quadrature at two resolutions must
            // agree before the values are trusted.
            let var_hi = {
                let mean = gaussian_expectation_quadrature(
                    &|z: &Point| f.value(z),
                    mu.variances(),
                    nodes + 16,
                );
                let second = gaussian_expectation_quadrature(
                    &|z: &Point| f.value(z).powi(2),
                    mu.variances(),
                    nodes + 16,
                );
                second - mean * mean
            };
            let t_hi = gaussian_expectation_quadrature(&t_of, mu.variances(), nodes + 16);
            let dev = ((quad_var - var_hi).abs() / (1.0 + var_hi.abs()))
                .max((quad_t - t_hi).abs() / (1.0 + t_hi.abs()));
            if dev > 1e-8 {
                inconclusive = true;
                provenance.note("quadrature_unstable_fn", idx);
            }
            (var_hi, t_hi)
        };

        margin = margin.min((a_gamma / rho) * t_int * (1.0 + BOUND_SLACK) - var);
    }
    provenance.note("moment_xcheck_max", format!("{worst_xcheck:.3e}"));

    let verdict = if worst_xcheck > MOMENT_XCHECK_TOL || margin < 0.0 {
        Verdict::Fail
    } else if inconclusive {
        Verdict::Inconclusive
    } else {
        Verdict::Pass
    };
    Ok(VerificationReport {
        check_name: "poincare".to_string(),
        verdict,
        margin,
        series: Vec::new(),
        provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kfp::solve_kfp_params;
    use crate::testfn::{sample_function, FamilyKind, FunctionFamily};

    #[test]
    fn a_gamma_has_the_block_closed_form() {
        // For the twisted block [[1, ∓a], [∓a, b]] against diffusion
        // diag(0, 1): a_γ = 1/(b − a²).
        let params = solve_kfp_params(1.0, 2.25, 0.05).unwrap();
        let s = params.metric_form(1);
        let a_gamma = gamma_vs_t_ratio(&kfp_diffusion(1), &s).unwrap();
        let closed = 1.0 / (params.b - params.a * params.a);
        assert!((a_gamma - closed).abs() < 1e-12, "{a_gamma} vs {closed}");
    }

    #[test]
    fn constant_and_velocity_functions_satisfy_the_bound() {
        let pot = PotentialSpec::quadratic(1, 1.0);
        let params = solve_kfp_params(1.0, 1.0, 0.05).unwrap();
        let s = params.metric_form(1);
        let fns = vec![
            TestFunction::constant(2, 3.0),
            TestFunction::linear(&Point::from_column_slice(&[0.0, 1.0]), 0.0),
            TestFunction::linear(&Point::from_column_slice(&[1.0, 0.0]), 0.0),
        ];
        let report = check_poincare(&pot, &s, params.rho, &fns, 24).unwrap();
        assert_eq!(report.verdict, Verdict::Pass, "margin {}", report.margin);
    }

    #[test]
    fn random_polynomials_pass_with_moment_cross_check() {
        let pot = PotentialSpec::quadratic(1, 1.0);
        let params = solve_kfp_params(1.0, 1.0, 0.05).unwrap();
        let s = params.metric_form(1);
        let fam = FunctionFamily::default_for(FamilyKind::Polynomial);
        let fns: Vec<TestFunction> = (0..10).map(|k| sample_function(&fam, 2, 600 + k)).collect();
        let report = check_poincare(&pot, &s, params.rho, &fns, 10).unwrap();
        assert_eq!(report.verdict, Verdict::Pass, "margin {}", report.margin);
        let dev: f64 = report.provenance.details["moment_xcheck_max"].parse().unwrap();
        assert!(dev <= 1e-10);
    }

    #[test]
    fn hermite_degree_two_matches_quadrature() {
        // f = v² − 1 (Hermite H₂ in the velocity variable).
        let pot = PotentialSpec::quadratic(1, 1.0);
        let params = solve_kfp_params(1.0, 1.0, 0.05).unwrap();
        let s = params.metric_form(1);
        let h2 = TestFunction::quadratic(
            &Matrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 2.0]),
            &Point::zeros(2),
            -1.0,
        );
        let report = check_poincare(&pot, &s, params.rho, &[h2], 12).unwrap();
        assert_eq!(report.verdict, Verdict::Pass);
    }

    #[test]
    fn trig_functions_use_stable_quadrature() {
        let pot = PotentialSpec::quadratic(1, 1.0);
        let params = solve_kfp_params(1.0, 1.0, 0.05).unwrap();
        let s = params.metric_form(1);
        let fam = FunctionFamily::default_for(FamilyKind::Trigonometric);
        let fns: Vec<TestFunction> = (0..5).map(|k| sample_function(&fam, 2, 900 + k)).collect();
        let report = check_poincare(&pot, &s, params.rho, &fns, 48).unwrap();
        assert_eq!(report.verdict, Verdict::Pass, "margin {}", report.margin);
    }

    #[test]
    fn non_quadratic_potentials_are_rejected() {
        let pot = PotentialSpec::perturbed_cosine(1, 1.0, 0.1);
        let params = solve_kfp_params(0.9, 1.1, 0.05).unwrap();
        let s = params.metric_form(1);
        let f = TestFunction::constant(2, 1.0);
        assert!(matches!(
            check_poincare(&pot, &s, params.rho, &[f], 12),
            Err(CoreError::Unsupported(_))
        ));
    }
}
