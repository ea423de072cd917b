//! Monte Carlo check of the semigroup gradient bound
//! `T(P_t f) ≤ e^{2Kt} P_t(T(f))`.
//!
//! The left side needs the gradient of `x ↦ E[f(Z_t^x)]`, estimated by
//! common-random-numbers central differences: the perturbed starting points
//! reuse identical noise streams, so for linear drift the difference quotient
//! is exactly the deterministic Euler flow and the estimator has zero
//! variance. Trajectories are evolved once per starting point and shared by
//! all test functions.

use crate::dynamics::{evolve_starts_common_noise, SdeSystem};
use crate::operator::MetricForm;
use crate::testfn::TestFunction;
use crate::{CoreError, Point, Result};

use super::{Provenance, SeriesPoint, Verdict, VerificationReport};

#[derive(Clone, Debug)]
pub struct GradientBoundConfig {
    pub t: f64,
    pub dt: f64,
    pub n_streams: usize,
    pub seed: u64,
    /// Central-difference step for the pathwise gradient, scaled by
    /// `1 + ‖x‖`.
    pub fd_step: f64,
    /// Batches used to estimate the standard error of the left side.
    pub batches: usize,
}

impl Default for GradientBoundConfig {
    fn default() -> Self {
        GradientBoundConfig {
            t: 1.0,
            dt: 1e-3,
            n_streams: 2000,
            seed: 0,
            fd_step: 1e-3,
            batches: 10,
        }
    }
}

struct PointVerdict {
    margin: f64,
    ratio: f64,
    rel_se: f64,
    inconclusive: bool,
}

/// Verdicts for every test function at one starting point, sharing one
/// common-noise trajectory grid.
fn check_at_point(
    sys: &SdeSystem,
    s: &MetricForm,
    k_rate: f64,
    fs: &[TestFunction],
    x: &Point,
    cfg: &GradientBoundConfig,
) -> Result<Vec<PointVerdict>> {
    let d = sys.dim();
    let h = cfg.fd_step * (1.0 + x.norm());

    let mut starts = Vec::with_capacity(2 * d + 1);
    starts.push(x.clone());
    for i in 0..d {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        starts.push(xp);
        starts.push(xm);
    }
    let grid = evolve_starts_common_noise(sys, &starts, cfg.n_streams, cfg.t, cfg.dt, cfg.seed)?;
    let growth = (2.0 * k_rate * cfg.t).exp();

    let batch_len = (cfg.n_streams / cfg.batches).max(1);
    let mut out = Vec::with_capacity(fs.len());
    for f in fs {
        // Right side: e^{2Kt} ⟨T(f)(Z_t)⟩ from the unperturbed start.
        let t_samples: Vec<f64> = grid[0]
            .iter()
            .map(|z| s.t_quad(f, z))
            .collect::<Result<_>>()?;
        let n = t_samples.len() as f64;
        let mean_t: f64 = t_samples.iter().sum::<f64>() / n;
        let var_t: f64 =
            t_samples.iter().map(|v| (v - mean_t).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        let rhs = growth * mean_t;
        let se_rhs = growth * (var_t / n).sqrt();

        // Left side: ‖∇ E[f(Z_t^·)](x)‖²_Σ with batched error bars.
        let mut batch_lhs = Vec::with_capacity(cfg.batches);
        let mut full_grad = Point::zeros(d);
        for batch in 0..cfg.batches {
            let lo = batch * batch_len;
            let hi = if batch + 1 == cfg.batches {
                cfg.n_streams
            } else {
                (lo + batch_len).min(cfg.n_streams)
            };
            if lo >= hi {
                continue;
            }
            let mut grad = Point::zeros(d);
            for i in 0..d {
                let plus = &grid[1 + 2 * i][lo..hi];
                let minus = &grid[2 + 2 * i][lo..hi];
                let mean_plus: f64 =
                    plus.iter().map(|z| f.value(z)).sum::<f64>() / (hi - lo) as f64;
                let mean_minus: f64 =
                    minus.iter().map(|z| f.value(z)).sum::<f64>() / (hi - lo) as f64;
                grad[i] = (mean_plus - mean_minus) / (2.0 * h);
            }
            batch_lhs.push((s.matrix() * &grad).dot(&grad));
            full_grad += grad * ((hi - lo) as f64 / cfg.n_streams as f64);
        }
        let lhs = (s.matrix() * &full_grad).dot(&full_grad);
        let nb = batch_lhs.len() as f64;
        let mean_b: f64 = batch_lhs.iter().sum::<f64>() / nb;
        let se_lhs = if nb > 1.0 {
            (batch_lhs.iter().map(|v| (v - mean_b).powi(2)).sum::<f64>() / (nb - 1.0)).sqrt()
                / nb.sqrt()
        } else {
            0.0
        };

        let scale = rhs.abs().max(1e-12);
        let rel_se = ((se_rhs / scale).powi(2) + (se_lhs / scale).powi(2)).sqrt();
        let allowance = 3.0 * rel_se * scale + 1e-12;
        out.push(PointVerdict {
            margin: rhs + allowance - lhs,
            ratio: lhs / scale,
            rel_se,
            inconclusive: se_rhs > 0.2 * scale,
        });
    }
    Ok(out)
}

/// Check the gradient bound for one test function on a list of starting
/// points. `k_rate` is the `K` of the bound (negative for contraction).
pub fn check_gradient_bound(
    sys: &SdeSystem,
    s: &MetricForm,
    k_rate: f64,
    f: &TestFunction,
    points: &[Point],
    cfg: &GradientBoundConfig,
) -> Result<VerificationReport> {
    check_gradient_bound_batch(sys, s, k_rate, std::slice::from_ref(f), points, cfg)
}

/// Same as [`check_gradient_bound`] for several test functions sharing the
/// evolved trajectories (each function gets its own margin; the report
/// carries the worst).
pub fn check_gradient_bound_batch(
    sys: &SdeSystem,
    s: &MetricForm,
    k_rate: f64,
    fs: &[TestFunction],
    points: &[Point],
    cfg: &GradientBoundConfig,
) -> Result<VerificationReport> {
    if points.is_empty() || fs.is_empty() {
        return Err(CoreError::InvalidInput(
            "gradient bound needs at least one point and one function".into(),
        ));
    }
    if cfg.t < 0.0 {
        return Err(CoreError::InvalidInput("gradient bound needs t ≥ 0".into()));
    }
    if cfg.t == 0.0 {
        // Both sides collapse to T(f)(x); the bound holds with equality.
        let mut provenance = Provenance::with_tolerance(0.0);
        provenance.seeds = vec![cfg.seed];
        provenance.note("t", 0.0);
        provenance.note("trivial", "at t = 0 both sides equal T(f)(x)");
        return Ok(VerificationReport {
            check_name: "gradient_bound".to_string(),
            verdict: Verdict::Pass,
            margin: 0.0,
            series: Vec::new(),
            provenance,
        });
    }

    let mut margin = f64::INFINITY;
    let mut any_inconclusive = false;
    let mut series = Vec::new();
    for x in points {
        for v in check_at_point(sys, s, k_rate, fs, x, cfg)? {
            margin = margin.min(v.margin);
            any_inconclusive |= v.inconclusive;
            series.push(SeriesPoint {
                time: cfg.t,
                value: v.ratio,
                stderr: v.rel_se,
                seed: cfg.seed,
            });
        }
    }

    let mut provenance = Provenance::with_tolerance(0.0);
    provenance.seeds = vec![cfg.seed];
    provenance.n_particles = Some(cfg.n_streams);
    provenance.dt = Some(cfg.dt);
    provenance.note("t", cfg.t);
    provenance.note("k_rate", k_rate);
    provenance.note("n_functions", fs.len());
    provenance.note("n_points", points.len());

    let verdict = if margin < 0.0 {
        Verdict::Fail
    } else if any_inconclusive {
        Verdict::Inconclusive
    } else {
        Verdict::Pass
    };
    Ok(VerificationReport {
        check_name: "gradient_bound".to_string(),
        verdict,
        margin,
        series,
        provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kfp::{build_operator, solve_kfp_params, PotentialSpec};
    use crate::linalg;
    use crate::operator::DiffusionOperator;
    use crate::testfn::{sample_function, FamilyKind, FunctionFamily};

    #[test]
    fn kfp_contraction_holds_for_linear_functions() {
        let pot = PotentialSpec::quadratic(1, 1.0);
        let params = solve_kfp_params(1.0, 1.0, 0.05).unwrap();
        let sys = SdeSystem::from_operator(build_operator(&pot).unwrap()).unwrap();
        let s = params.metric_form(1);
        let f = sample_function(&FunctionFamily::default_for(FamilyKind::Linear), 2, 5);
        let cfg = GradientBoundConfig {
            t: 1.0,
            n_streams: 500,
            seed: 3,
            ..Default::default()
        };
        let points = vec![Point::from_column_slice(&[0.5, -0.5])];
        let report = check_gradient_bound(&sys, &s, -params.rho, &f, &points, &cfg).unwrap();
        assert_eq!(report.verdict, Verdict::Pass, "margin {}", report.margin);
    }

    #[test]
    fn kolmogorov_needs_a_positive_growth_rate() {
        // No confinement: the flow (x + tv, v) expands; the bound holds with
        // the K certified from the Jacobian's symmetric part (K = 1/2), and
        // contraction (K < 0) must fail.
        let op = DiffusionOperator::kolmogorov();
        let s = MetricForm::identity(2);
        let sample = vec![Point::zeros(2)];
        let k = crate::operator::expansion_rate(&op, &s, &sample).unwrap();
        assert!((k - 0.5).abs() < 1e-9);

        let sys = SdeSystem::from_operator(op).unwrap();
        let f = sample_function(&FunctionFamily::default_for(FamilyKind::Linear), 2, 21);
        let cfg = GradientBoundConfig {
            t: 1.0,
            n_streams: 400,
            seed: 8,
            ..Default::default()
        };
        let points = vec![Point::from_column_slice(&[0.0, 1.0])];
        let grows = check_gradient_bound(&sys, &s, k, &f, &points, &cfg).unwrap();
        assert_eq!(grows.verdict, Verdict::Pass);
        let contracts = check_gradient_bound(&sys, &s, -0.3, &f, &points, &cfg).unwrap();
        assert_eq!(contracts.verdict, Verdict::Fail);
    }

    #[test]
    fn zero_time_is_a_trivial_pass() {
        let pot = PotentialSpec::quadratic(1, 1.0);
        let sys = SdeSystem::from_operator(build_operator(&pot).unwrap()).unwrap();
        let s = MetricForm::identity(2);
        let f = sample_function(&FunctionFamily::default_for(FamilyKind::Quadratic), 2, 3);
        let cfg = GradientBoundConfig {
            t: 0.0,
            ..Default::default()
        };
        let report =
            check_gradient_bound(&sys, &s, -0.1, &f, &[Point::zeros(2)], &cfg).unwrap();
        assert_eq!(report.verdict, Verdict::Pass);
        assert_eq!(report.margin, 0.0);
    }

    #[test]
    fn crn_difference_matches_euler_flow_for_linear_drift() {
        // The pathwise derivative of the discrete dynamics is (I + dtJ)^k.
        let pot = PotentialSpec::quadratic(1, 1.0);
        let sys = SdeSystem::from_operator(build_operator(&pot).unwrap()).unwrap();
        let x = Point::from_column_slice(&[0.4, -0.2]);
        let h = 1e-3;
        let dt = 1e-3;
        let t = 1.0;
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[0] += h;
        xm[0] -= h;
        let grid = evolve_starts_common_noise(&sys, &[xp, xm], 4, t, dt, 99).unwrap();
        let j = sys.operator().drift_jacobian(&x);
        let flow = linalg::euler_flow_matrix(&j, dt, (t / dt).round() as usize);
        let expected = &flow * Point::from_column_slice(&[2.0 * h, 0.0]);
        for stream in 0..4 {
            let diff = &grid[0][stream] - &grid[1][stream];
            assert!(
                (diff - &expected).amax() < 1e-8,
                "noise failed to cancel across perturbed starts"
            );
        }
    }
}
