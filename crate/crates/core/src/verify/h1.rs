//! Energy decay in `H¹(μ)`: for centered `f`, the functional
//! `Φ(t) = ∫ T(P_t f) dμ + b ∫ (P_t f)² dμ` obeys `Φ(t) ≤ e^{−C′t} Φ(0)`
//! whenever `∫T₂ ≥ K₁∫T − K₂∫Γ` holds, `μ` satisfies a `T`-Poincaré
//! inequality with constant `C`, the mixing weight exceeds `K₂`, and
//! `0 < C′ ≤ min(2K₁, 2/C)`.
//!
//! For quadratic potentials the dynamics are linear-Gaussian, so polynomial
//! `f` propagates exactly: `P_t f(z) = E[f(e^{tJ} z + G_t)]` is again a
//! polynomial with coefficients computable in closed form. No Monte Carlo
//! enters the pass/fail path.

use serde::{Deserialize, Serialize};

use crate::gaussian::DiagonalGaussian;
use crate::kfp::{build_operator, PotentialSpec};
use crate::linalg;
use crate::operator::MetricForm;
use crate::testfn::TestFunction;
use crate::{CoreError, Point, Result};

use super::{Provenance, SeriesPoint, Verdict, VerificationReport};

const DECAY_TOL: f64 = 1e-6;

/// Constants of the integrated curvature assumption and the resulting rate.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct H1Params {
    pub k1: f64,
    pub k2: f64,
    pub b_weight: f64,
    pub c_poincare: f64,
    pub c_prime: f64,
}

impl H1Params {
    pub fn new(k1: f64, k2: f64, b_weight: f64, c_poincare: f64, c_prime: f64) -> Result<Self> {
        if !(k1 > 0.0 && k2 >= 0.0 && b_weight >= 0.0 && c_poincare > 0.0) {
            return Err(CoreError::InvalidInput(
                "H1 constants must be positive (K₂ and b may be zero)".into(),
            ));
        }
        let cap = (2.0 * k1).min(2.0 / c_poincare);
        if !(c_prime > 0.0 && c_prime <= cap + 1e-12) {
            return Err(CoreError::InvalidInput(format!(
                "decay rate must satisfy 0 < C' ≤ min(2K₁, 2/C) = {cap:.6e}, got {c_prime:.6e}"
            )));
        }
        Ok(H1Params {
            k1,
            k2,
            b_weight,
            c_poincare,
            c_prime,
        })
    }

    /// The strongest rate the constants allow.
    pub fn max_rate(k1: f64, c_poincare: f64) -> f64 {
        (2.0 * k1).min(2.0 / c_poincare)
    }
}

/// Check `Φ(t) e^{C′t} / Φ(0) ≤ 1 + 1e−6` along the exact polynomial
/// propagation. `f` is centered against `μ` automatically (with a note).
pub fn check_h1_decay(
    pot: &PotentialSpec,
    s: &MetricForm,
    params: &H1Params,
    f: &TestFunction,
    times: &[f64],
) -> Result<VerificationReport> {
    let omega = pot.quadratic_omega().ok_or_else(|| {
        CoreError::Unsupported("H¹ decay check needs a quadratic potential".into())
    })?;
    let poly = f
        .poly()
        .ok_or_else(|| CoreError::Unsupported("exact propagation needs a polynomial test function".into()))?
        .clone();
    let n = pot.n();
    let d = 2 * n;
    if s.dim() != d || f.dim() != d {
        return Err(CoreError::dim("check_h1_decay", d, s.dim().max(f.dim())));
    }
    if times.iter().any(|&t| t < 0.0) {
        return Err(CoreError::InvalidInput("times must be nonnegative".into()));
    }

    let mu = DiagonalGaussian::kfp_invariant(n, omega);
    let mut provenance = Provenance::with_tolerance(DECAY_TOL);
    provenance.note("c_prime", params.c_prime);
    provenance.note("b_weight", params.b_weight);
    provenance.note("k1", params.k1);
    provenance.note("k2", params.k2);
    provenance.note("c_poincare", params.c_poincare);

    // Center against the exact invariant measure.
    let mean = mu.expect_poly(&poly)?;
    let centered = poly.sub(&crate::poly::Poly::constant(d, mean));
    if mean.abs() > 1e-14 {
        provenance.note("auto_centered", format!("subtracted mean {mean:.6e}"));
    }

    let op = build_operator(pot)?;
    let j = op.drift_jacobian(&Point::zeros(d));
    let mut q_noise = crate::Matrix::zeros(d, d);
    for i in 0..n {
        q_noise[(n + i, n + i)] = 2.0;
    }

    let phi_at = |t: f64| -> Result<f64> {
        let (flow, gram) = linalg::linear_flow_and_gramian(&j, &q_noise, t);
        let propagated = centered.gaussian_affine_image(&flow, &gram);
        let t_part = mu.t_integral_poly(&propagated, s.matrix())?;
        let sq_part = mu.expect_poly(&propagated.mul(&propagated))?;
        Ok(t_part + params.b_weight * sq_part)
    };

    let phi0 = phi_at(0.0)?;
    provenance.note("phi_0", format!("{phi0:.12e}"));
    if phi0.abs() < 1e-14 {
        provenance.note("trivial", "functional vanishes after centering");
        return Ok(VerificationReport {
            check_name: "h1_decay".to_string(),
            verdict: Verdict::Pass,
            margin: 0.0,
            series: Vec::new(),
            provenance,
        });
    }

    let mut series = Vec::with_capacity(times.len());
    let mut margin = f64::INFINITY;
    for &t in times {
        let value = phi_at(t)? * (params.c_prime * t).exp() / phi0;
        margin = margin.min(1.0 + DECAY_TOL - value);
        series.push(SeriesPoint {
            time: t,
            value,
            stderr: 0.0,
            seed: 0,
        });
    }

    // Without b > K₂ the functional is not provably monotone; record what
    // happened but make no claim.
    let verdict = if params.b_weight <= params.k2 && params.k2 > 0.0 {
        provenance.note("degenerate", "mixing weight does not dominate K₂");
        Verdict::Degenerate
    } else if margin >= 0.0 {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(VerificationReport {
        check_name: "h1_decay".to_string(),
        verdict,
        margin,
        series,
        provenance,
    })
}
