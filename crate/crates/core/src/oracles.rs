//! Independent reference implementations used to validate the primary paths.
//!
//! Everything here deliberately avoids the analytic derivative stacks and the
//! production solvers: derivatives come from nested central differences,
//! transport from permutation enumeration or closed forms, and integrals from
//! Gauss-Hermite quadrature. Keep it that way — these are the oracles the
//! test suites trust.

use crate::operator::{DiffusionOperator, MetricForm};
use crate::testfn::{Tensor3, TestFunction};
use crate::{Matrix, Point};

/// Step size convention for central differences.
pub fn fd_step(x: &Point) -> f64 {
    1e-4 * (1.0 + x.norm())
}

pub fn fd_gradient(f: &dyn Fn(&Point) -> f64, x: &Point, h: f64) -> Point {
    let d = x.len();
    Point::from_iterator(d, (0..d).map(|i| {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        (f(&xp) - f(&xm)) / (2.0 * h)
    }))
}

pub fn fd_hessian(f: &dyn Fn(&Point) -> f64, x: &Point, h: f64) -> Matrix {
    let d = x.len();
    let f0 = f(x);
    let mut hess = Matrix::zeros(d, d);
    for i in 0..d {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        hess[(i, i)] = (f(&xp) - 2.0 * f0 + f(&xm)) / (h * h);
        for j in (i + 1)..d {
            let mut xpp = x.clone();
            let mut xpm = x.clone();
            let mut xmp = x.clone();
            let mut xmm = x.clone();
            xpp[i] += h;
            xpp[j] += h;
            xpm[i] += h;
            xpm[j] -= h;
            xmp[i] -= h;
            xmp[j] += h;
            xmm[i] -= h;
            xmm[j] -= h;
            let v = (f(&xpp) - f(&xpm) - f(&xmp) + f(&xmm)) / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    hess
}

/// Third derivatives as central differences of the finite-difference Hessian.
/// The outer step is taken larger than the inner one to keep the roundoff of
/// the nested scheme below the comparison tolerance.
pub fn fd_third(f: &dyn Fn(&Point) -> f64, x: &Point, h_inner: f64, h_outer: f64) -> Tensor3 {
    let d = x.len();
    let mut t = Tensor3::zeros(d);
    for k in 0..d {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += h_outer;
        xm[k] -= h_outer;
        let hp = fd_hessian(f, &xp, h_inner);
        let hm = fd_hessian(f, &xm, h_inner);
        for i in 0..d {
            for j in 0..d {
                t.set(i, j, k, (hp[(i, j)] - hm[(i, j)]) / (2.0 * h_outer));
            }
        }
    }
    t
}

/// Apply `L` to a black-box scalar function by finite differences.
pub fn fd_apply_operator(op: &DiffusionOperator, g: &dyn Fn(&Point) -> f64, x: &Point) -> f64 {
    let h = fd_step(x);
    let hess = fd_hessian(g, x, h);
    let grad = fd_gradient(g, x, h);
    (op.diffusion() * hess).trace() + op.drift(x).dot(&grad)
}

/// Nested finite-difference evaluation of `T₂(f) = ½(L T(f) − 2 T(f, Lf))`.
///
/// Only first and second analytic derivatives of `f` enter; everything of
/// higher order is produced by differencing, so this is independent of the
/// analytic third-derivative path.
pub fn t2_fd_oracle(op: &DiffusionOperator, s: &MetricForm, f: &TestFunction, x: &Point) -> f64 {
    let t_of_f = |y: &Point| {
        let g = f.grad(y);
        (s.matrix() * &g).dot(&g)
    };
    let l_t = fd_apply_operator(op, &t_of_f, x);

    let lf = |y: &Point| (op.diffusion() * f.hess(y)).trace() + op.drift(y).dot(&f.grad(y));
    let grad_lf = fd_gradient(&lf, x, fd_step(x));
    let t_f_lf = (s.matrix() * grad_lf).dot(&f.grad(x));

    0.5 * l_t - t_f_lf
}

/// Exact squared 2-Wasserstein distance between equal-size uniform clouds by
/// enumerating all assignments. Only for tiny `N`.
pub fn w2_brute_force(cost: &Matrix) -> f64 {
    let n = cost.nrows();
    assert!(n <= 9, "brute force is factorial; keep N small");
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    permute(&mut perm, 0, &mut |p| {
        let total: f64 = p.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum();
        if total < best {
            best = total;
        }
    });
    (best / n as f64).sqrt()
}

fn permute(items: &mut Vec<usize>, k: usize, visit: &mut dyn FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, visit);
        items.swap(k, i);
    }
}

/// Closed-form squared W₂ between Gaussians:
/// `‖μ₁−μ₂‖² + tr(C₁ + C₂ − 2 (C₂^{1/2} C₁ C₂^{1/2})^{1/2})`.
pub fn bures_wasserstein_sq(m1: &Point, c1: &Matrix, m2: &Point, c2: &Matrix) -> f64 {
    let root2 = crate::linalg::psd_sqrt(c2);
    let inner = &root2 * c1 * &root2;
    let cross = crate::linalg::psd_sqrt(&inner);
    (m1 - m2).norm_squared() + (c1 + c2 - cross * 2.0).trace()
}

/// Gauss-Hermite nodes and weights for the weight `e^{−t²}` (Golub-Welsch).
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut jacobi = Matrix::zeros(n, n);
    for k in 1..n {
        let b = (k as f64 / 2.0).sqrt();
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let eig = jacobi.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let node = eig.eigenvalues[i];
            let w = std::f64::consts::PI.sqrt() * eig.eigenvectors[(0, i)].powi(2);
            (node, w)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs.into_iter().unzip()
}

/// `E[f(Z)]` for `Z ~ N(0, diag(variances))` by tensorized Gauss-Hermite
/// quadrature with `nodes` points per axis.
pub fn gaussian_expectation_quadrature(
    f: &dyn Fn(&Point) -> f64,
    variances: &[f64],
    nodes: usize,
) -> f64 {
    let d = variances.len();
    let (t, w) = gauss_hermite(nodes);
    let norm = std::f64::consts::PI.powf(-(d as f64) / 2.0);
    let mut idx = vec![0usize; d];
    let mut total = 0.0;
    let mut point = Point::zeros(d);
    loop {
        let mut weight = 1.0;
        for (axis, &i) in idx.iter().enumerate() {
            weight *= w[i];
            point[axis] = (2.0 * variances[axis]).sqrt() * t[i];
        }
        total += weight * f(&point);

        // odometer increment
        let mut axis = 0;
        loop {
            if axis == d {
                return total * norm;
            }
            idx[axis] += 1;
            if idx[axis] < nodes {
                break;
            }
            idx[axis] = 0;
            axis += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testfn::{sample_function, FamilyKind, FunctionFamily};

    #[test]
    fn fd_derivatives_match_analytic_families() {
        let points: Vec<Point> = crate::sampling::ball_points(2, 1.0, 12);
        for kind in FamilyKind::ALL {
            let f = sample_function(&FunctionFamily::default_for(kind), 2, 314);
            for x in &points {
                let h = fd_step(x);
                let val = |y: &Point| f.value(y);
                let g_fd = fd_gradient(&val, x, h);
                let g = f.grad(x);
                assert!(
                    (g_fd - &g).amax() / (1.0 + g.amax()) < 1e-4,
                    "gradient mismatch for {:?}",
                    kind
                );
                let h_fd = fd_hessian(&val, x, h);
                let hs = f.hess(x);
                assert!(
                    (h_fd - &hs).amax() / (1.0 + hs.amax()) < 1e-4,
                    "hessian mismatch for {:?}",
                    kind
                );
                let t_fd = fd_third(&val, x, h, 10.0 * h);
                let t = f.third(x).unwrap();
                for i in 0..2 {
                    for j in 0..2 {
                        for k in 0..2 {
                            let err = (t_fd.get(i, j, k) - t.get(i, j, k)).abs()
                                / (1.0 + t.get(i, j, k).abs());
                            assert!(err < 1e-4, "third mismatch for {:?}: {err}", kind);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn hermite_quadrature_integrates_moments() {
        // E[z⁴] = 3σ⁴ under N(0, σ²).
        let v = gaussian_expectation_quadrature(&|x: &Point| x[0].powi(4), &[2.0], 8);
        assert!((v - 3.0 * 4.0).abs() < 1e-10);
        // Characteristic function: E[cos(ωz)] = e^{−ω²σ²/2}.
        let omega = 1.3;
        let v = gaussian_expectation_quadrature(&|x: &Point| (omega * x[0]).cos(), &[1.0], 48);
        assert!((v - (-omega * omega / 2.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn bures_identical_gaussians_is_zero() {
        let c = Matrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let m = Point::zeros(2);
        let d = bures_wasserstein_sq(&m, &c, &m, &c);
        assert!(d.abs() < 1e-10);
    }

    #[test]
    fn brute_force_matches_hand_example() {
        // N = 2 on the line: X = {0, 1}, Y = {0.1, 0.9} → W₂ = 0.1.
        let cost = Matrix::from_row_slice(2, 2, &[0.01, 0.81, 0.81, 0.01]);
        assert!((w2_brute_force(&cost) - 0.1).abs() < 1e-12);
    }
}
