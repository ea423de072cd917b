//! Sampled verification of the Lyapunov-function assumption: existence of a
//! smooth `U` with `U ≥ 1`, `T(U) ≤ C·U`, `LU ≤ C·U` and compact sublevel
//! sets, which makes the semigroup stochastically complete.
//!
//! The first three conditions are checked on a point sample (the report says
//! "sampled, not global"); compactness of sublevel sets is structural and
//! holds only for candidates built by the registered radially-unbounded
//! constructor.

use serde::{Deserialize, Serialize};

use crate::operator::{DiffusionOperator, MetricForm};
use crate::testfn::TestFunction;
use crate::{CoreError, Point, Result};

/// Candidate Lyapunov function with derivatives to second order.
#[derive(Clone, Debug)]
pub struct LyapunovCandidate {
    u: TestFunction,
    claimed_c: Option<f64>,
    radially_unbounded: bool,
}

impl LyapunovCandidate {
    /// The registered radially-unbounded family: `U(z) = 1 + ‖z‖²`.
    /// Sublevel sets are balls, hence compact.
    pub fn one_plus_norm_sq(dim: usize) -> Self {
        let q = crate::Matrix::identity(dim, dim) * 2.0;
        LyapunovCandidate {
            u: TestFunction::quadratic(&q, &Point::zeros(dim), 1.0),
            claimed_c: None,
            radially_unbounded: true,
        }
    }

    /// Wrap an arbitrary test function. Compactness of sublevel sets cannot
    /// be established structurally for these, so condition iv) fails.
    pub fn from_function(u: TestFunction, claimed_c: Option<f64>) -> Self {
        LyapunovCandidate {
            u,
            claimed_c,
            radially_unbounded: false,
        }
    }

    pub fn function(&self) -> &TestFunction {
        &self.u
    }

    pub fn claimed_c(&self) -> Option<f64> {
        self.claimed_c
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssumptionVerdict {
    Pass,
    Fail,
}

/// Outcome of the sampled assumption check.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub verdict: AssumptionVerdict,
    /// `Ĉ = max over sample of max(T(U)/U, LU/U, 0)`.
    pub c_hat: f64,
    /// Point violating `U ≥ 1`, if any.
    pub witness: Option<Vec<f64>>,
    /// Whether compact sublevel sets hold structurally.
    pub compact_sublevels: bool,
    pub sample_size: usize,
    /// The check is sampled, not global.
    pub scope_note: String,
}

/// Estimate the assumption constants on a sample. Fails with a witness when
/// `U < 1` somewhere, when the ratio estimate is non-finite, or when the
/// candidate family gives no structural compactness.
pub fn check_assumption(
    cand: &LyapunovCandidate,
    op: &DiffusionOperator,
    s: &MetricForm,
    sample: &[Point],
) -> Result<AssumptionReport> {
    if sample.is_empty() {
        return Err(CoreError::InvalidInput("assumption check needs a non-empty sample".into()));
    }
    let u = cand.function();
    if u.dim() != op.dim() {
        return Err(CoreError::dim("check_assumption", op.dim(), u.dim()));
    }

    let mut c_hat: f64 = 0.0;
    let mut witness = None;
    for x in sample {
        let uv = u.value(x);
        if uv < 1.0 {
            witness = Some(x.iter().copied().collect());
            break;
        }
        let t_u = s.t_quad(u, x)?;
        let l_u = op.apply(u, x)?;
        c_hat = c_hat.max(t_u / uv).max(l_u / uv);
    }

    let pass = witness.is_none() && c_hat.is_finite() && cand.radially_unbounded;
    Ok(AssumptionReport {
        verdict: if pass {
            AssumptionVerdict::Pass
        } else {
            AssumptionVerdict::Fail
        },
        c_hat,
        witness,
        compact_sublevels: cand.radially_unbounded,
        sample_size: sample.len(),
        scope_note: "sampled, not global".to_string(),
    })
}

/// Default sampling region: quasi-random points in the ball of radius 20.
pub fn default_sample(dim: usize) -> Vec<Point> {
    crate::sampling::ball_points(dim, 20.0, 10_000)
}
