//! Analytic test-function families with exact derivatives to third order.
//!
//! Every verification in this crate runs over sampled instances of these
//! families. The derivative stacks are exact (no automatic differentiation),
//! which keeps the nested finite-difference oracle genuinely independent.

use std::f64::consts::TAU;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::poly::Poly;
use crate::sampling::substream;
use crate::{Matrix, Point};

/// Symmetric rank-3 derivative tensor, stored dense.
#[derive(Clone, Debug)]
pub struct Tensor3 {
    dim: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(dim: usize) -> Self {
        Tensor3 {
            dim,
            data: vec![0.0; dim * dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.dim + j) * self.dim + k]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        self.data[(i * self.dim + j) * self.dim + k] = v;
    }

    /// Contraction over the first index: `M_jk = Σ_i T_ijk v_i`.
    pub fn contract_vec(&self, v: &Point) -> Matrix {
        let d = self.dim;
        let mut m = Matrix::zeros(d, d);
        for j in 0..d {
            for k in 0..d {
                let mut s = 0.0;
                for i in 0..d {
                    s += self.get(i, j, k) * v[i];
                }
                m[(j, k)] = s;
            }
        }
        m
    }

    /// Contraction over the first two indices: `w_k = Σ_ij A_ij T_ijk`.
    pub fn contract_mat(&self, a: &Matrix) -> Point {
        let d = self.dim;
        let mut w = Point::zeros(d);
        for k in 0..d {
            let mut s = 0.0;
            for i in 0..d {
                for j in 0..d {
                    s += a[(i, j)] * self.get(i, j, k);
                }
            }
            w[k] = s;
        }
        w
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    Linear,
    Quadratic,
    Polynomial,
    Trigonometric,
    GaussianBump,
}

impl FamilyKind {
    pub const ALL: [FamilyKind; 5] = [
        FamilyKind::Linear,
        FamilyKind::Quadratic,
        FamilyKind::Polynomial,
        FamilyKind::Trigonometric,
        FamilyKind::GaussianBump,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            FamilyKind::Linear => "linear",
            FamilyKind::Quadratic => "quadratic",
            FamilyKind::Polynomial => "polynomial",
            FamilyKind::Trigonometric => "trigonometric",
            FamilyKind::GaussianBump => "gaussian_bump",
        }
    }

    fn stream_id(&self) -> u64 {
        match self {
            FamilyKind::Linear => 1,
            FamilyKind::Quadratic => 2,
            FamilyKind::Polynomial => 3,
            FamilyKind::Trigonometric => 4,
            FamilyKind::GaussianBump => 5,
        }
    }
}

/// Sampling description of one family.
#[derive(Clone, Debug)]
pub struct FunctionFamily {
    pub kind: FamilyKind,
    pub coeff_range: f64,
    /// Whether sampled instances approximate smooth compactly supported
    /// functions (bumps do; polynomials and trig waves do not).
    pub compact_support: bool,
}

impl FunctionFamily {
    pub fn default_for(kind: FamilyKind) -> Self {
        FunctionFamily {
            kind,
            coeff_range: 1.0,
            compact_support: matches!(kind, FamilyKind::GaussianBump),
        }
    }
}

type ValueFn = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(&Point) -> Point + Send + Sync>;
type HessFn = Arc<dyn Fn(&Point) -> Matrix + Send + Sync>;
type ThirdFn = Arc<dyn Fn(&Point) -> Tensor3 + Send + Sync>;

/// Smooth scalar function with exact derivatives to order three.
#[derive(Clone)]
pub struct TestFunction {
    dim: usize,
    family: FamilyKind,
    value: ValueFn,
    grad: GradFn,
    hess: HessFn,
    third: Option<ThirdFn>,
    poly: Option<Arc<Poly>>,
}

impl std::fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TestFunction")
            .field("dim", &self.dim)
            .field("family", &self.family)
            .finish()
    }
}

impl TestFunction {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn family(&self) -> FamilyKind {
        self.family
    }

    pub fn value(&self, x: &Point) -> f64 {
        (self.value)(x)
    }

    pub fn grad(&self, x: &Point) -> Point {
        (self.grad)(x)
    }

    pub fn hess(&self, x: &Point) -> Matrix {
        (self.hess)(x)
    }

    pub fn has_third(&self) -> bool {
        self.third.is_some()
    }

    pub fn third(&self, x: &Point) -> Option<Tensor3> {
        self.third.as_ref().map(|t| t(x))
    }

    /// Exact polynomial representation, when the family has one.
    pub fn poly(&self) -> Option<&Poly> {
        self.poly.as_deref()
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Self::from_poly(Poly::constant(dim, c), FamilyKind::Linear)
    }

    pub fn linear(u: &Point, c: f64) -> Self {
        let dim = u.len();
        let mut p = Poly::constant(dim, c);
        for i in 0..dim {
            p = p.add(&Poly::variable(dim, i).scale(u[i]));
        }
        Self::from_poly(p, FamilyKind::Linear)
    }

    /// `f(z) = ½ zᵀQz + uᵀz + c` (Q is symmetrized).
    pub fn quadratic(q: &Matrix, u: &Point, c: f64) -> Self {
        let dim = u.len();
        assert_eq!(q.nrows(), dim);
        let qs = crate::linalg::sym(q);
        let mut p = Poly::constant(dim, c);
        for i in 0..dim {
            p = p.add(&Poly::variable(dim, i).scale(u[i]));
            for j in 0..dim {
                let m = Poly::variable(dim, i).mul(&Poly::variable(dim, j)).scale(0.5 * qs[(i, j)]);
                p = p.add(&m);
            }
        }
        Self::from_poly(p, FamilyKind::Quadratic)
    }

    /// Wrap an exact polynomial; all derivatives are exact partials.
    pub fn from_poly(p: Poly, family: FamilyKind) -> Self {
        let dim = p.dim();
        let grad_p: Arc<Vec<Poly>> = Arc::new(p.gradient());
        let hess_p: Arc<Vec<Poly>> = Arc::new(
            (0..dim)
                .flat_map(|i| (0..dim).map(move |j| (i, j)))
                .map(|(i, j)| grad_p[i].partial(j))
                .collect(),
        );
        let third_p: Arc<Vec<Poly>> = Arc::new(
            (0..dim * dim)
                .flat_map(|ij| (0..dim).map(move |k| (ij, k)))
                .map(|(ij, k)| hess_p[ij].partial(k))
                .collect(),
        );
        let p = Arc::new(p);

        let value = {
            let p = p.clone();
            Arc::new(move |x: &Point| p.eval(x)) as ValueFn
        };
        let grad = {
            let g = grad_p.clone();
            Arc::new(move |x: &Point| Point::from_iterator(dim, g.iter().map(|q| q.eval(x)))) as GradFn
        };
        let hess = {
            let h = hess_p.clone();
            Arc::new(move |x: &Point| {
                Matrix::from_fn(dim, dim, |i, j| h[i * dim + j].eval(x))
            }) as HessFn
        };
        let third = {
            let t = third_p.clone();
            Arc::new(move |x: &Point| {
                let mut out = Tensor3::zeros(dim);
                for i in 0..dim {
                    for j in 0..dim {
                        for k in 0..dim {
                            out.set(i, j, k, t[(i * dim + j) * dim + k].eval(x));
                        }
                    }
                }
                out
            }) as ThirdFn
        };

        TestFunction {
            dim,
            family,
            value,
            grad,
            hess,
            third: Some(third),
            poly: Some(p),
        }
    }

    /// Sum of sinusoids `Σ_r A_r sin(ω_r·z + φ_r)`.
    pub fn trig(dim: usize, terms: Vec<(f64, Point, f64)>) -> Self {
        assert!(terms.iter().all(|(_, w, _)| w.len() == dim));
        let terms = Arc::new(terms);

        let value = {
            let t = terms.clone();
            Arc::new(move |x: &Point| {
                t.iter().map(|(a, w, phi)| a * (w.dot(x) + phi).sin()).sum()
            }) as ValueFn
        };
        let grad = {
            let t = terms.clone();
            Arc::new(move |x: &Point| {
                let mut g = Point::zeros(x.len());
                for (a, w, phi) in t.iter() {
                    g += w * (a * (w.dot(x) + phi).cos());
                }
                g
            }) as GradFn
        };
        let hess = {
            let t = terms.clone();
            Arc::new(move |x: &Point| {
                let d = x.len();
                let mut h = Matrix::zeros(d, d);
                for (a, w, phi) in t.iter() {
                    let s = -a * (w.dot(x) + phi).sin();
                    for i in 0..d {
                        for j in 0..d {
                            h[(i, j)] += s * w[i] * w[j];
                        }
                    }
                }
                h
            }) as HessFn
        };
        let third = {
            let t = terms.clone();
            Arc::new(move |x: &Point| {
                let d = x.len();
                let mut out = Tensor3::zeros(d);
                for (a, w, phi) in t.iter() {
                    let c = -a * (w.dot(x) + phi).cos();
                    for i in 0..d {
                        for j in 0..d {
                            for k in 0..d {
                                let v = out.get(i, j, k) + c * w[i] * w[j] * w[k];
                                out.set(i, j, k, v);
                            }
                        }
                    }
                }
                out
            }) as ThirdFn
        };

        TestFunction {
            dim,
            family: FamilyKind::Trigonometric,
            value,
            grad,
            hess,
            third: Some(third),
            poly: None,
        }
    }

    /// `f(z) = A exp(−‖z − c‖² / (2w²))`.
    pub fn gaussian_bump(amp: f64, center: Point, width: f64) -> Self {
        assert!(width > 0.0);
        let dim = center.len();
        let c = Arc::new(center);
        let w2 = width * width;

        let val = {
            let c = c.clone();
            move |x: &Point| {
                let y = x - c.as_ref();
                amp * (-y.norm_squared() / (2.0 * w2)).exp()
            }
        };
        let value = Arc::new(val.clone()) as ValueFn;
        let grad = {
            let c = c.clone();
            let val = val.clone();
            Arc::new(move |x: &Point| {
                let y = x - c.as_ref();
                -(y / w2) * val(x)
            }) as GradFn
        };
        let hess = {
            let c = c.clone();
            let val = val.clone();
            Arc::new(move |x: &Point| {
                let d = x.len();
                let y = x - c.as_ref();
                let g = val(x);
                Matrix::from_fn(d, d, |i, j| {
                    let kron = if i == j { 1.0 } else { 0.0 };
                    (-kron / w2 + y[i] * y[j] / (w2 * w2)) * g
                })
            }) as HessFn
        };
        let third = {
            let c = c.clone();
            Arc::new(move |x: &Point| {
                let d = x.len();
                let y = x - c.as_ref();
                let g = val(x);
                let mut out = Tensor3::zeros(d);
                for i in 0..d {
                    for j in 0..d {
                        for k in 0..d {
                            let kron = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
                            let v = ((kron(i, j) * y[k] + kron(i, k) * y[j] + kron(j, k) * y[i])
                                / (w2 * w2)
                                - y[i] * y[j] * y[k] / (w2 * w2 * w2))
                                * g;
                            out.set(i, j, k, v);
                        }
                    }
                }
                out
            }) as ThirdFn
        };

        TestFunction {
            dim,
            family: FamilyKind::GaussianBump,
            value,
            grad,
            hess,
            third: Some(third),
            poly: None,
        }
    }

    /// Pointwise product, with derivatives assembled by the Leibniz rule.
    /// Requires polynomial representations on both sides (the only use is
    /// squaring polynomial-like functions in identity checks).
    pub fn product(&self, other: &TestFunction) -> Option<TestFunction> {
        let (pa, pb) = (self.poly()?, other.poly()?);
        Some(TestFunction::from_poly(pa.mul(pb), FamilyKind::Polynomial))
    }

    pub fn square(&self) -> Option<TestFunction> {
        self.product(self)
    }

    /// `f − c`, same family (derivatives unchanged).
    pub fn sub_constant(&self, c: f64) -> TestFunction {
        let mut out = self.clone();
        let inner = self.value.clone();
        out.value = Arc::new(move |x: &Point| inner(x) - c);
        out.poly = self
            .poly
            .as_ref()
            .map(|p| Arc::new(p.sub(&Poly::constant(self.dim, c))));
        out
    }

    /// `α·f + β·g` for same-dimension functions; family tag degrades to the
    /// more general of the two polynomial tags when available.
    pub fn linear_combination(alpha: f64, f: &TestFunction, beta: f64, g: &TestFunction) -> Option<TestFunction> {
        if f.dim != g.dim {
            return None;
        }
        if let (Some(pf), Some(pg)) = (f.poly(), g.poly()) {
            return Some(TestFunction::from_poly(
                pf.scale(alpha).add(&pg.scale(beta)),
                FamilyKind::Polynomial,
            ));
        }
        let dim = f.dim;
        let (fv, gv) = (f.value.clone(), g.value.clone());
        let (fg, gg) = (f.grad.clone(), g.grad.clone());
        let (fh, gh) = (f.hess.clone(), g.hess.clone());
        let third = match (&f.third, &g.third) {
            (Some(ft), Some(gt)) => {
                let (ft, gt) = (ft.clone(), gt.clone());
                Some(Arc::new(move |x: &Point| {
                    let a = ft(x);
                    let b = gt(x);
                    let mut out = Tensor3::zeros(x.len());
                    for i in 0..x.len() {
                        for j in 0..x.len() {
                            for k in 0..x.len() {
                                out.set(i, j, k, alpha * a.get(i, j, k) + beta * b.get(i, j, k));
                            }
                        }
                    }
                    out
                }) as ThirdFn)
            }
            _ => None,
        };
        Some(TestFunction {
            dim,
            family: FamilyKind::Polynomial,
            value: Arc::new(move |x: &Point| alpha * fv(x) + beta * gv(x)),
            grad: Arc::new(move |x: &Point| fg(x) * alpha + gg(x) * beta),
            hess: Arc::new(move |x: &Point| fh(x) * alpha + gh(x) * beta),
            third,
            poly: None,
        })
    }
}

/// Draw one function from a family, deterministically in `(family, dim, seed)`.
pub fn sample_function(family: &FunctionFamily, dim: usize, seed: u64) -> TestFunction {
    assert!(dim >= 1, "dimension must be at least 1");
    let mut rng = substream(seed, family.kind.stream_id() * 1009 + dim as u64);
    let r = family.coeff_range;
    match family.kind {
        FamilyKind::Linear => {
            let u = Point::from_iterator(dim, (0..dim).map(|_| rng.gen_range(-r..=r)));
            let c = rng.gen_range(-r..=r);
            TestFunction::linear(&u, c)
        }
        FamilyKind::Quadratic => {
            let q = Matrix::from_fn(dim, dim, |_, _| rng.gen_range(-r..=r));
            let u = Point::from_iterator(dim, (0..dim).map(|_| rng.gen_range(-r..=r)));
            let c = rng.gen_range(-r..=r);
            TestFunction::quadratic(&q, &u, c)
        }
        FamilyKind::Polynomial => {
            let n_terms = rng.gen_range(4..=8);
            let mut p = Poly::constant(dim, rng.gen_range(-r..=r));
            for _ in 0..n_terms {
                let total: u32 = rng.gen_range(1..=4);
                let mut exps = vec![0u32; dim];
                for _ in 0..total {
                    let i = rng.gen_range(0..dim);
                    exps[i] += 1;
                }
                p = p.add(&Poly::monomial(dim, &exps, rng.gen_range(-r..=r)));
            }
            TestFunction::from_poly(p, FamilyKind::Polynomial)
        }
        FamilyKind::Trigonometric => {
            let n_terms = rng.gen_range(1..=3);
            let terms = (0..n_terms)
                .map(|_| {
                    let a = rng.gen_range(-r..=r);
                    let w = Point::from_iterator(dim, (0..dim).map(|_| rng.gen_range(-2.0..=2.0)));
                    let phi = rng.gen_range(0.0..TAU);
                    (a, w, phi)
                })
                .collect();
            TestFunction::trig(dim, terms)
        }
        FamilyKind::GaussianBump => {
            let amp = rng.gen_range(0.5..=2.0) * r;
            let center = Point::from_iterator(dim, (0..dim).map(|_| rng.gen_range(-1.0..=1.0)));
            let width = rng.gen_range(0.7..=1.5);
            TestFunction::gaussian_bump(amp, center, width)
        }
    }
}
