//! Small dense linear-algebra helpers shared across modules.

use crate::{CoreError, Matrix, Result};

/// Symmetric part `(M + Mᵀ)/2`.
pub fn sym(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

pub fn is_symmetric(m: &Matrix, tol: f64) -> bool {
    m.is_square() && (m - m.transpose()).amax() <= tol
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(m: &Matrix) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

pub fn min_eig(m: &Matrix) -> f64 {
    sym_eigenvalues(m)[0]
}

pub fn max_eig(m: &Matrix) -> f64 {
    *sym_eigenvalues(m).last().unwrap()
}

/// Largest eigenvalue together with a corresponding unit eigenvector.
pub fn max_eig_pair(m: &Matrix) -> (f64, crate::Point) {
    let eig = m.clone().symmetric_eigen();
    let mut best = 0;
    for i in 1..eig.eigenvalues.len() {
        if eig.eigenvalues[i] > eig.eigenvalues[best] {
            best = i;
        }
    }
    (eig.eigenvalues[best], eig.eigenvectors.column(best).into_owned())
}

/// Symmetric positive-semidefinite square root; small negative eigenvalues
/// from roundoff are clamped to zero.
pub fn psd_sqrt(m: &Matrix) -> Matrix {
    let eig = m.clone().symmetric_eigen();
    let vals = eig.eigenvalues.map(|v| if v > 0.0 { v.sqrt() } else { 0.0 });
    &eig.eigenvectors * Matrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

/// Smallest generalized eigenvalue of the pencil `(B, S)` with `S ≻ 0`,
/// i.e. the smallest `ρ` with `det(B − ρS) = 0`. Computed as the smallest
/// ordinary eigenvalue of `L⁻¹ B L⁻ᵀ` where `S = LLᵀ`.
pub fn gen_eig_min(b: &Matrix, s: &Matrix) -> Result<f64> {
    if b.nrows() != s.nrows() {
        return Err(CoreError::dim("gen_eig_min", s.nrows(), b.nrows()));
    }
    let chol = s
        .clone()
        .cholesky()
        .ok_or_else(|| CoreError::InvalidInput("pencil metric is not positive definite".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| CoreError::InvalidInput("singular Cholesky factor".into()))?;
    let reduced = &linv * b * linv.transpose();
    Ok(min_eig(&sym(&reduced)))
}

/// Largest generalized eigenvalue of `(B, S)`.
pub fn gen_eig_max(b: &Matrix, s: &Matrix) -> Result<f64> {
    gen_eig_min(&(-b), s).map(|v| -v)
}

/// Solve the continuous Lyapunov equation `A X + X Aᵀ = Q` by vectorization.
/// Intended for the small dimensions used here (n ≤ a few dozen).
pub fn lyapunov_solve(a: &Matrix, q: &Matrix) -> Result<Matrix> {
    let n = a.nrows();
    if !a.is_square() || q.nrows() != n || q.ncols() != n {
        return Err(CoreError::dim("lyapunov_solve", n, q.nrows()));
    }
    // (I ⊗ A + A ⊗ I) vec(X) = vec(Q) with column-major vec.
    let eye = Matrix::identity(n, n);
    let kron = eye.kronecker(a) + a.kronecker(&eye);
    let rhs = nalgebra::DVector::from_column_slice(q.as_slice());
    let lu = kron.lu();
    let x = lu
        .solve(&rhs)
        .ok_or_else(|| CoreError::InvalidInput("Lyapunov operator is singular".into()))?;
    Ok(Matrix::from_column_slice(n, n, x.as_slice()))
}

/// Stationary covariance of `dZ = JZ dt + σ dB`: solves `J C + C Jᵀ + Q = 0`
/// with `Q = σσᵀ`.
pub fn stationary_covariance(j: &Matrix, q: &Matrix) -> Result<Matrix> {
    lyapunov_solve(j, &(-q)).map(|c| sym(&c))
}

/// Matrix exponential `e^{tJ}`.
pub fn expm(j: &Matrix, t: f64) -> Matrix {
    (j * t).exp()
}

/// Transition matrix and integrated noise covariance for the linear SDE
/// `dZ = JZ dt + σ dB`: returns `(e^{tJ}, ∫₀ᵗ e^{sJ} Q e^{sJᵀ} ds)` via the
/// block-exponential identity on `[[J, Q], [0, −Jᵀ]]`.
pub fn linear_flow_and_gramian(j: &Matrix, q: &Matrix, t: f64) -> (Matrix, Matrix) {
    let n = j.nrows();
    let mut block = Matrix::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(j);
    block.view_mut((0, n), (n, n)).copy_from(q);
    block.view_mut((n, n), (n, n)).copy_from(&(-j.transpose()));
    let e = (block * t).exp();
    let f = e.view((0, 0), (n, n)).into_owned();
    let m12 = e.view((0, n), (n, n)).into_owned();
    // ∫₀ᵗ e^{sJ} Q e^{sJᵀ} ds = M12 · F ᵀ
    let gram = &m12 * f.transpose();
    (f, sym(&gram))
}

/// `(I + dt·J)^k`, the exact flow matrix of the Euler map with step `dt`.
pub fn euler_flow_matrix(j: &Matrix, dt: f64, steps: usize) -> Matrix {
    let n = j.nrows();
    let mut base = Matrix::identity(n, n) + j * dt;
    let mut acc = Matrix::identity(n, n);
    let mut k = steps;
    while k > 0 {
        if k & 1 == 1 {
            acc = &acc * &base;
        }
        base = &base * &base;
        k >>= 1;
    }
    acc
}
