//! Closed-form contraction certificates for the kinetic Fokker-Planck
//! operator `Δ_v − v·∇_v − ∇V·∇_v + v·∇_x` on `(x, v) ∈ ℝ²ⁿ` (drift signs
//! follow the SDE `dx = v dt`, `dv = −v dt − ∇V dt + √2 dB`).
//!
//! Given Hessian bounds `m ≤ ∇²V ≤ M` with `√M − √m ≤ 1`, a twisted metric
//! with coefficients `(a, b)` solving
//!
//! ```text
//! a + b − 2a² = (m + M)/2,      b − a = √(mM)
//! ```
//!
//! makes `T₂ ≥ ρ T` hold with `ρ ≥ 0`. The system places `m` and `M` exactly
//! where the defining inequality `(a+b−λ)² < 4a(b−aλ)` degenerates to
//! equality, so `ρ = 0` when the potential attains its bounds; the `slack`
//! parameter widens the target window so that the actual Hessian is interior
//! and `ρ > 0`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::operator::{t2_lower_matrix, DiffusionOperator, MetricForm};
use crate::{CoreError, Matrix, Point, Result};

type ScalarField = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;
type VectorField = Arc<dyn Fn(&Point) -> Point + Send + Sync>;
type MatrixField = Arc<dyn Fn(&Point) -> Matrix + Send + Sync>;

/// Structural class of a potential; checks that need an exactly known
/// invariant measure are restricted to `Quadratic`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PotentialKind {
    Quadratic { omega: f64 },
    PerturbedCosine { omega: f64, eps: f64 },
    Custom,
}

/// Confinement potential `V : ℝⁿ → ℝ` with exact derivatives and certified
/// Hessian bounds `0 < m ≤ ∇²V ≤ M`.
#[derive(Clone)]
pub struct PotentialSpec {
    n: usize,
    kind: PotentialKind,
    v_value: ScalarField,
    v_grad: VectorField,
    v_hess: MatrixField,
    hessian_bounds: (f64, f64),
}

impl std::fmt::Debug for PotentialSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PotentialSpec")
            .field("n", &self.n)
            .field("hessian_bounds", &self.hessian_bounds)
            .finish()
    }
}

impl PotentialSpec {
    pub fn new(
        n: usize,
        v_value: ScalarField,
        v_grad: VectorField,
        v_hess: MatrixField,
        hessian_bounds: (f64, f64),
    ) -> Result<Self> {
        let (m, big_m) = hessian_bounds;
        if !(m > 0.0 && m <= big_m) {
            return Err(CoreError::InvalidInput(format!(
                "Hessian bounds must satisfy 0 < m ≤ M, got ({m}, {big_m})"
            )));
        }
        Ok(PotentialSpec {
            n,
            kind: PotentialKind::Custom,
            v_value,
            v_grad,
            v_hess,
            hessian_bounds,
        })
    }

    /// `V(x) = ω² ‖x‖² / 2`, Hessian exactly `ω² I`.
    pub fn quadratic(n: usize, omega: f64) -> Self {
        let w2 = omega * omega;
        PotentialSpec {
            n,
            kind: PotentialKind::Quadratic { omega },
            v_value: Arc::new(move |x: &Point| 0.5 * w2 * x.norm_squared()),
            v_grad: Arc::new(move |x: &Point| x * w2),
            v_hess: Arc::new(move |x: &Point| Matrix::identity(x.len(), x.len()) * w2),
            hessian_bounds: (w2, w2),
        }
    }

    /// `V(x) = ω² ‖x‖²/2 + ε Σᵢ cos(xᵢ)`; Hessian eigenvalues lie in
    /// `[ω² − ε, ω² + ε]`.
    pub fn perturbed_cosine(n: usize, omega: f64, eps: f64) -> Self {
        assert!(eps >= 0.0 && eps < omega * omega, "perturbation must keep m > 0");
        let w2 = omega * omega;
        PotentialSpec {
            n,
            kind: PotentialKind::PerturbedCosine { omega, eps },
            v_value: Arc::new(move |x: &Point| {
                0.5 * w2 * x.norm_squared() + eps * x.iter().map(|xi| xi.cos()).sum::<f64>()
            }),
            v_grad: Arc::new(move |x: &Point| {
                Point::from_iterator(x.len(), x.iter().map(|xi| w2 * xi - eps * xi.sin()))
            }),
            v_hess: Arc::new(move |x: &Point| {
                Matrix::from_diagonal(&Point::from_iterator(
                    x.len(),
                    x.iter().map(|xi| w2 - eps * xi.cos()),
                ))
            }),
            hessian_bounds: (w2 - eps, w2 + eps),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> PotentialKind {
        self.kind
    }

    /// Frequency of an exactly quadratic potential, if this is one.
    pub fn quadratic_omega(&self) -> Option<f64> {
        match self.kind {
            PotentialKind::Quadratic { omega } => Some(omega),
            _ => None,
        }
    }

    pub fn value(&self, x: &Point) -> f64 {
        (self.v_value)(x)
    }

    pub fn grad(&self, x: &Point) -> Point {
        (self.v_grad)(x)
    }

    pub fn hess(&self, x: &Point) -> Matrix {
        (self.v_hess)(x)
    }

    pub fn hessian_bounds(&self) -> (f64, f64) {
        self.hessian_bounds
    }

    /// Verify that sampled Hessian eigenvalues stay inside the declared
    /// bounds (with 1e−9 slack for roundoff).
    pub fn validate_bounds(&self, sample: &[Point]) -> Result<()> {
        let (m, big_m) = self.hessian_bounds;
        for x in sample {
            let ev = linalg::sym_eigenvalues(&self.hess(x));
            if ev[0] < m - 1e-9 || *ev.last().unwrap() > big_m + 1e-9 {
                return Err(CoreError::InvalidInput(format!(
                    "Hessian eigenvalues {:?} escape declared bounds ({m}, {big_m}) at sample point",
                    ev
                )));
            }
        }
        Ok(())
    }
}

/// Twisted-metric certificate for the kinetic Fokker-Planck operator.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KfpParams {
    /// Declared Hessian bounds of the potential.
    pub m: f64,
    pub big_m: f64,
    /// Widened bounds actually used to solve the coefficient system.
    pub m_wide: f64,
    pub big_m_wide: f64,
    pub slack: f64,
    /// Twist coefficients with the gauge `α = 1, γ = 0`.
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    /// `a = αβ + γδ`, `b = β² + δ²`.
    pub a: f64,
    pub b: f64,
    /// `κ = a + b − 2a²`, `θ = b − a`.
    pub kappa: f64,
    pub theta: f64,
    /// Contraction rate of `T₂ ≥ ρT` evaluated at the declared bounds.
    pub rho: f64,
    /// `√cond(S)`: prefactor converting twisted-metric contraction into
    /// Euclidean Wasserstein contraction.
    pub c1: f64,
    /// Which root of `a² − a + (√M'−√m')²/4 = 0` was kept, and the rates both
    /// roots would give.
    pub root_choice: String,
    pub rho_larger_root: f64,
    pub rho_smaller_root: f64,
}

impl KfpParams {
    /// The 2×2 coefficient block `[[1, a], [a, b]]`.
    pub fn s_block(&self) -> Matrix {
        Matrix::from_row_slice(2, 2, &[1.0, self.a, self.a, self.b])
    }

    /// Certified metric on `ℝ²ⁿ` in `(x, v)` block order. The cross coupling
    /// carries a minus sign: with the transport convention `ẋ = +v` used by
    /// [`build_operator`], the positive-cross block certifies the reflected
    /// operator `v ↦ −v`, and the two metrics are congruent.
    pub fn metric_form(&self, n: usize) -> MetricForm {
        let d = 2 * n;
        let mut s = Matrix::zeros(d, d);
        for i in 0..n {
            s[(i, i)] = 1.0;
            s[(i, n + i)] = -self.a;
            s[(n + i, i)] = -self.a;
            s[(n + i, n + i)] = self.b;
        }
        MetricForm::new(s).expect("certificate metric is positive definite")
    }

    /// Pointwise contraction rate certified for a Hessian eigenvalue `λ`:
    /// the smallest generalized eigenvalue of the lower-bound matrix against
    /// the twisted metric, both assembled for the scalar (n = 1) operator.
    pub fn rate_at(&self, lambda: f64) -> f64 {
        let metric = self.metric_form(1);
        let j = Matrix::from_row_slice(2, 2, &[0.0, 1.0, -lambda, -1.0]);
        let bound = t2_lower_matrix(&j, &metric).expect("2x2 bound");
        let rho = linalg::gen_eig_min(bound.matrix(), metric.matrix()).expect("pencil");
        // The construction yields exact zero at the window endpoints; absorb
        // the eigensolver's roundoff there.
        if rho < 0.0 && rho > -1e-9 {
            0.0
        } else {
            rho
        }
    }

    /// Euclidean contraction rate implied by this certificate when the
    /// metric is rescaled to `trace Σ = 2n` (the gauge used by the Σ-search):
    /// `ρ · λ_min(S₂) · 2/(1 + b)`.
    pub fn implied_euclidean_rate(&self) -> f64 {
        let lam_min = linalg::min_eig(&self.s_block());
        self.rho * lam_min * 2.0 / (1.0 + self.b)
    }
}

/// Solve the certificate system for Hessian bounds `(m, M)` widened by
/// `slack`. Picks whichever quadratic root certifies the larger rate
/// (ties go to the larger root).
pub fn solve_kfp_params(m: f64, big_m: f64, slack: f64) -> Result<KfpParams> {
    if !(m > 0.0) || !m.is_finite() || !big_m.is_finite() {
        return Err(CoreError::InvalidInput(format!(
            "Hessian bounds must be positive and finite, got ({m}, {big_m})"
        )));
    }
    if big_m < m {
        return Err(CoreError::InvalidInput(format!(
            "upper Hessian bound below lower: ({m}, {big_m})"
        )));
    }
    if !(0.0..1.0).contains(&slack) {
        return Err(CoreError::InvalidInput(format!("slack must lie in [0, 1), got {slack}")));
    }

    let m_wide = m * (1.0 - slack);
    let big_m_wide = big_m * (1.0 + slack);
    let gap = big_m_wide.sqrt() - m_wide.sqrt();
    if gap > 1.0 {
        return Err(CoreError::Infeasible(format!(
            "no twisted metric exists unless sqrt(M) - sqrt(m) <= 1; \
             widened bounds ({m_wide:.6}, {big_m_wide:.6}) give {gap:.6}"
        )));
    }

    let disc = (1.0 - gap * gap).max(0.0).sqrt();
    let geo = (m_wide * big_m_wide).sqrt();

    let build = |a: f64| -> Option<KfpParams> {
        if a <= 1e-12 {
            return None;
        }
        let b = a + geo;
        debug_assert!(a * a <= b + 1e-12);
        let delta_sq = b - a * a;
        let params = KfpParams {
            m,
            big_m,
            m_wide,
            big_m_wide,
            slack,
            alpha: 1.0,
            beta: a,
            gamma: 0.0,
            delta: delta_sq.max(0.0).sqrt(),
            a,
            b,
            kappa: a + b - 2.0 * a * a,
            theta: b - a,
            rho: 0.0,
            c1: 0.0,
            root_choice: String::new(),
            rho_larger_root: 0.0,
            rho_smaller_root: 0.0,
        };
        Some(params)
    };

    let a_hi = (1.0 + disc) / 2.0;
    let a_lo = (1.0 - disc) / 2.0;
    let larger = build(a_hi);
    let smaller = build(a_lo);

    let rate = |p: &KfpParams| p.rate_at(p.m).min(p.rate_at(p.big_m));
    let rho_hi = larger.as_ref().map(|p| rate(p)).unwrap_or(f64::NEG_INFINITY);
    let rho_lo = smaller.as_ref().map(|p| rate(p)).unwrap_or(f64::NEG_INFINITY);

    let (mut chosen, choice) = if rho_lo > rho_hi + 1e-12 {
        (smaller.unwrap(), "smaller")
    } else {
        (
            larger.ok_or_else(|| {
                CoreError::Infeasible("both certificate roots are degenerate".into())
            })?,
            "larger",
        )
    };
    chosen.rho = rate(&chosen);
    chosen.c1 = chosen.metric_form(1).cond().sqrt();
    chosen.root_choice = choice.to_string();
    chosen.rho_larger_root = rho_hi;
    chosen.rho_smaller_root = if rho_lo.is_finite() { rho_lo } else { f64::NAN };
    Ok(chosen)
}

/// Contraction rate certified by the parameters: the minimum of the pencil
/// rate over the declared Hessian bounds. The pencil's smallest eigenvalue is
/// concave in `λ`, so the interval minimum sits at an endpoint (asserted by
/// grid sampling in the tests).
pub fn contraction_rate(params: &KfpParams) -> f64 {
    params.rate_at(params.m).min(params.rate_at(params.big_m))
}

/// Assemble the kinetic Fokker-Planck generator on `ℝ²ⁿ`:
/// diffusion `diag(0, I)` (so `L` contains `Δ_v` with unit coefficient) and
/// drift `(v, −v − ∇V(x))` in `(x, v)` block order.
pub fn build_operator(pot: &PotentialSpec) -> Result<DiffusionOperator> {
    let n = pot.n();
    let d = 2 * n;
    let mut diffusion = Matrix::zeros(d, d);
    for i in 0..n {
        diffusion[(n + i, n + i)] = 1.0;
    }
    let pot_drift = pot.clone();
    let drift = move |z: &Point| {
        let x = z.rows(0, n).into_owned();
        let v = z.rows(n, n).into_owned();
        let gv = pot_drift.grad(&x);
        let mut out = Point::zeros(d);
        out.rows_mut(0, n).copy_from(&v);
        out.rows_mut(n, n).copy_from(&(-&v - gv));
        out
    };
    let pot_jac = pot.clone();
    let jacobian = move |z: &Point| {
        let x = z.rows(0, n).into_owned();
        let hess = pot_jac.hess(&x);
        let mut j = Matrix::zeros(d, d);
        for i in 0..n {
            j[(i, n + i)] = 1.0;
            j[(n + i, n + i)] = -1.0;
        }
        j.view_mut((n, 0), (n, n)).copy_from(&(-hess));
        j
    };
    DiffusionOperator::new(diffusion, Arc::new(drift), Arc::new(jacobian))
}
