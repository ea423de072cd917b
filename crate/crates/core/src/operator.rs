//! Pointwise calculus of a diffusion generator: `L`, the carré du champ `Γ`,
//! the twisted gradient form `T`, its iteration `T₂`, and the closed-form
//! lower-bound matrix for constant-coefficient certificates.

use std::sync::Arc;

use crate::linalg::{self, sym};
use crate::testfn::TestFunction;
use crate::{CoreError, Matrix, Point, Result};

pub type DriftFn = Arc<dyn Fn(&Point) -> Point + Send + Sync>;
pub type JacobianFn = Arc<dyn Fn(&Point) -> Matrix + Send + Sync>;

/// `L = Σ a_ij ∂²/∂x_i∂x_j + Σ b_i ∂/∂x_i` with constant symmetric
/// positive-semidefinite diffusion matrix and smooth drift.
#[derive(Clone)]
pub struct DiffusionOperator {
    dim: usize,
    diffusion: Matrix,
    drift: DriftFn,
    drift_jacobian: JacobianFn,
}

impl std::fmt::Debug for DiffusionOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DiffusionOperator")
            .field("dim", &self.dim)
            .field("diffusion", &self.diffusion)
            .finish()
    }
}

impl DiffusionOperator {
    pub fn new(diffusion: Matrix, drift: DriftFn, drift_jacobian: JacobianFn) -> Result<Self> {
        let dim = diffusion.nrows();
        if !diffusion.is_square() {
            return Err(CoreError::InvalidInput("diffusion matrix must be square".into()));
        }
        if !linalg::is_symmetric(&diffusion, 1e-12) {
            return Err(CoreError::InvalidInput("diffusion matrix must be symmetric".into()));
        }
        if linalg::min_eig(&diffusion) < -1e-10 {
            return Err(CoreError::InvalidInput(
                "diffusion matrix must be positive semidefinite".into(),
            ));
        }
        Ok(DiffusionOperator {
            dim,
            diffusion,
            drift,
            drift_jacobian,
        })
    }

    /// Linear drift `z ↦ Jz` with the given diffusion matrix.
    pub fn linear_drift(j: Matrix, diffusion: Matrix) -> Result<Self> {
        if j.nrows() != diffusion.nrows() || !j.is_square() {
            return Err(CoreError::dim("linear_drift", diffusion.nrows(), j.nrows()));
        }
        let jc = j.clone();
        Self::new(
            diffusion,
            Arc::new(move |z: &Point| &j * z),
            Arc::new(move |_: &Point| jc.clone()),
        )
    }

    /// Standard Ornstein-Uhlenbeck generator: drift `−z`, diffusion `I`.
    pub fn ornstein_uhlenbeck(dim: usize) -> Self {
        Self::linear_drift(Matrix::identity(dim, dim) * -1.0, Matrix::identity(dim, dim)).unwrap()
    }

    /// The 2-d operator `∂²/∂v² + v ∂/∂x` on coordinates `(x, v)`:
    /// pure velocity diffusion with free transport and no confinement.
    pub fn kolmogorov() -> Self {
        let diffusion = Matrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        Self::new(
            diffusion,
            Arc::new(|z: &Point| Point::from_column_slice(&[z[1], 0.0])),
            Arc::new(|_: &Point| Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0])),
        )
        .unwrap()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn diffusion(&self) -> &Matrix {
        &self.diffusion
    }

    pub fn drift(&self, x: &Point) -> Point {
        (self.drift)(x)
    }

    pub fn drift_jacobian(&self, x: &Point) -> Matrix {
        (self.drift_jacobian)(x)
    }

    fn check_dim(&self, f: &TestFunction, context: &'static str) -> Result<()> {
        if f.dim() != self.dim {
            return Err(CoreError::dim(context, self.dim, f.dim()));
        }
        Ok(())
    }

    /// `Lf(x) = tr(A · ∇²f(x)) + b(x)·∇f(x)`.
    pub fn apply(&self, f: &TestFunction, x: &Point) -> Result<f64> {
        self.check_dim(f, "apply_operator")?;
        if x.len() != self.dim {
            return Err(CoreError::dim("apply_operator point", self.dim, x.len()));
        }
        Ok((&self.diffusion * f.hess(x)).trace() + self.drift(x).dot(&f.grad(x)))
    }

    /// `Γ(f)(x) = ∇f(x)ᵀ A ∇f(x)`, the carré du champ for constant diffusion.
    /// Agreement with the defining formula `½(Lf² − 2fLf)` is enforced by the
    /// module tests.
    pub fn carre_du_champ(&self, f: &TestFunction, x: &Point) -> Result<f64> {
        self.check_dim(f, "carre_du_champ")?;
        let g = f.grad(x);
        Ok((&self.diffusion * &g).dot(&g))
    }

    /// Check that the supplied Jacobian matches central finite differences of
    /// the drift on the given points. Returns the worst absolute deviation.
    pub fn validate_jacobian(&self, points: &[Point], tol: f64) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for x in points {
            let j = self.drift_jacobian(x);
            let h = 1e-5 * (1.0 + x.norm());
            for k in 0..self.dim {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += h;
                xm[k] -= h;
                let col = (self.drift(&xp) - self.drift(&xm)) / (2.0 * h);
                for i in 0..self.dim {
                    worst = worst.max((col[i] - j[(i, k)]).abs());
                }
            }
        }
        if worst > tol {
            return Err(CoreError::InvalidInput(format!(
                "drift Jacobian deviates from finite differences by {worst:.3e} (tol {tol:.1e})"
            )));
        }
        Ok(worst)
    }
}

/// Constant symmetric positive-definite matrix `Σ` defining the twisted
/// gradient `T(f) = ∇fᵀ Σ ∇f` and the induced Mahalanobis distance.
#[derive(Clone, Debug)]
pub struct MetricForm {
    matrix: Matrix,
    inverse: Matrix,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    cond: f64,
}

impl MetricForm {
    pub fn new(matrix: Matrix) -> Result<Self> {
        if !linalg::is_symmetric(&matrix, 1e-10) {
            return Err(CoreError::InvalidInput("metric matrix must be symmetric".into()));
        }
        let matrix = sym(&matrix);
        let ev = linalg::sym_eigenvalues(&matrix);
        let (lo, hi) = (ev[0], *ev.last().unwrap());
        if lo <= 0.0 {
            return Err(CoreError::InvalidInput(format!(
                "metric matrix must be positive definite (min eigenvalue {lo:.3e})"
            )));
        }
        let chol = matrix
            .clone()
            .cholesky()
            .ok_or_else(|| CoreError::InvalidInput("metric Cholesky failed".into()))?;
        let inverse = chol.inverse();
        Ok(MetricForm {
            matrix,
            inverse,
            chol,
            cond: hi / lo,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(Matrix::identity(dim, dim)).unwrap()
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn inverse(&self) -> &Matrix {
        &self.inverse
    }

    /// Ratio of extreme eigenvalues.
    pub fn cond(&self) -> f64 {
        self.cond
    }

    /// `T(f, g)(x) = ∇f(x)ᵀ Σ ∇g(x)`.
    pub fn t_form(&self, f: &TestFunction, g: &TestFunction, x: &Point) -> Result<f64> {
        if f.dim() != self.dim() || g.dim() != self.dim() {
            return Err(CoreError::dim("t_form", self.dim(), f.dim().max(g.dim())));
        }
        Ok((&self.matrix * g.grad(x)).dot(&f.grad(x)))
    }

    /// `T(f)(x) = T(f, f)(x)`.
    pub fn t_quad(&self, f: &TestFunction, x: &Point) -> Result<f64> {
        self.t_form(f, f, x)
    }

    /// Distance induced by `T`: the supremum of `|f(x) − f(y)|` over
    /// `T(f) ≤ 1` is attained by a linear function and equals the Mahalanobis
    /// distance `√((x−y)ᵀ Σ⁻¹ (x−y))`.
    pub fn induced_distance(&self, x: &Point, y: &Point) -> f64 {
        let w = x - y;
        let solved = self.chol.solve(&w);
        solved.dot(&w).max(0.0).sqrt()
    }
}

/// Symmetric matrix `B(y)` with `T₂(f)(y) ≥ ∇f(y)ᵀ B(y) ∇f(y)` for constant
/// diffusion and constant `Σ`.
#[derive(Clone, Debug)]
pub struct LowerBoundMatrix {
    matrix: Matrix,
}

impl LowerBoundMatrix {
    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn quad(&self, g: &Point) -> f64 {
        (&self.matrix * g).dot(g)
    }
}

/// `T₂(f)(x) = ½ (L T(f) − 2 T(f, Lf))(x)`, assembled from analytic
/// derivatives of `f` up to third order (the third order enters through
/// `L` applied to `T(f)`).
pub fn t2_form(op: &DiffusionOperator, s: &MetricForm, f: &TestFunction, x: &Point) -> Result<f64> {
    if f.dim() != op.dim() || s.dim() != op.dim() {
        return Err(CoreError::dim("t2_form", op.dim(), f.dim()));
    }
    let third = f.third(x).ok_or(CoreError::MissingDerivatives {
        order: 3,
        context: "t2_form",
    })?;

    let g = f.grad(x);
    let h = f.hess(x);
    let sigma = s.matrix();
    let a = op.diffusion();
    let b = op.drift(x);
    let j = op.drift_jacobian(x);

    let sg = sigma * &g;

    // ∇T = 2 H Σ ∇f ; ∇²T = 2 D³f·(Σ∇f) + 2 H Σ H.
    let grad_t = (&h * &sg) * 2.0;
    let hess_t = third.contract_vec(&sg) * 2.0 + (&h * sigma * &h) * 2.0;
    let l_t = (a * hess_t).trace() + b.dot(&grad_t);

    // ∇(Lf) = D³f : A + Jᵀ ∇f + H b.
    let grad_lf = third.contract_mat(a) + j.transpose() * &g + &h * &b;
    let t_f_lf = (sigma * grad_lf).dot(&g);

    Ok(0.5 * l_t - t_f_lf)
}

/// Closed-form certificate matrix: for constant diffusion and constant `Σ`,
/// `T₂(f)(y) = tr(A H Σ H) + ∇fᵀ B ∇f ≥ ∇fᵀ B ∇f` with
/// `B = −(Σ Jᵀ + J Σ)/2` and `J` the drift Jacobian at `y`.
///
/// The orientation of `J` inside the quadratic form is fixed empirically
/// against `t2_form` (see the module tests): with `J_ik = ∂b_i/∂x_k`, the
/// drift contribution to `T₂` is `−∇fᵀ Σ Jᵀ ∇f`, not `−∇fᵀ Σ J ∇f`.
pub fn t2_lower_matrix(j: &Matrix, s: &MetricForm) -> Result<LowerBoundMatrix> {
    if j.nrows() != s.dim() || !j.is_square() {
        return Err(CoreError::dim("t2_lower_matrix", s.dim(), j.nrows()));
    }
    let m = -(sym(&(s.matrix() * j.transpose())));
    Ok(LowerBoundMatrix { matrix: m })
}

/// Smallest `K` with `T₂ ≥ −K T` certifiable from the Jacobian alone:
/// the largest generalized eigenvalue of `(sym(ΣJᵀ), Σ)` over the sample.
pub fn expansion_rate(op: &DiffusionOperator, s: &MetricForm, sample: &[Point]) -> Result<f64> {
    let mut k = f64::NEG_INFINITY;
    for x in sample {
        let j = op.drift_jacobian(x);
        let m = sym(&(s.matrix() * j.transpose()));
        k = k.max(crate::linalg::gen_eig_max(&m, s.matrix())?);
    }
    Ok(k)
}
