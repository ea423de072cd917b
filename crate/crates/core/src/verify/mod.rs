//! Executable checks of the contraction theory: the pointwise `T₂ ≥ ρT`
//! inequality, the semigroup gradient bound, Wasserstein contraction of the
//! dual semigroup, convergence to the invariant measure, the Poincaré
//! inequality, and the `H¹(μ)` energy decay.
//!
//! The first three are logically equivalent statements; the harness checks
//! them by independent estimators and treats any (pass, fail) disagreement as
//! a build-breaking inconsistency.

mod gradient;
mod h1;
mod poincare;
mod t2;
mod wasserstein;

pub use gradient::{check_gradient_bound, check_gradient_bound_batch, GradientBoundConfig};
pub use h1::{check_h1_decay, H1Params};
pub use poincare::{check_poincare, gamma_vs_t_ratio};
pub use t2::check_t2_inequality;
pub use wasserstein::{check_fixed_point, check_wasserstein_contraction, WassersteinConfig};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// The hypothesis needed for the guarantee is violated; the observed
    /// behaviour is recorded without a pass/fail claim.
    Degenerate,
    /// Monte Carlo error swamps the margin; no claim either way.
    Inconclusive,
}

/// One row of a recorded time series.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub time: f64,
    pub value: f64,
    pub stderr: f64,
    pub seed: u64,
}

/// Everything needed to reproduce a check bit-for-bit.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub seeds: Vec<u64>,
    pub n_particles: Option<usize>,
    pub dt: Option<f64>,
    pub tolerance: f64,
    pub certificate: Option<String>,
    pub details: BTreeMap<String, String>,
}

impl Provenance {
    pub fn with_tolerance(tolerance: f64) -> Self {
        Provenance {
            tolerance,
            ..Default::default()
        }
    }

    pub fn note(&mut self, key: &str, value: impl std::fmt::Display) {
        self.details.insert(key.to_string(), value.to_string());
    }
}

/// Outcome of one check: the verdict, the worst-case slack observed, an
/// optional time series, and the reproduction record.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerificationReport {
    pub check_name: String,
    pub verdict: Verdict,
    pub margin: f64,
    pub series: Vec<SeriesPoint>,
    pub provenance: Provenance,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn failed(&self) -> bool {
        self.verdict == Verdict::Fail
    }
}
