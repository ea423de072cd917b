//! Sparse multivariate polynomials with exact calculus.
//!
//! Used for the polynomial test-function family, for exact Gaussian moments
//! in the Poincaré check, and for exact propagation of polynomials through
//! linear-Gaussian dynamics in the H¹ decay check.

use std::collections::BTreeMap;

use crate::{Matrix, Point};

/// Polynomial in `dim` variables, stored as exponent-vector → coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly {
    dim: usize,
    terms: BTreeMap<Vec<u32>, f64>,
}

impl Poly {
    pub fn zero(dim: usize) -> Self {
        Poly {
            dim,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        let mut p = Poly::zero(dim);
        if c != 0.0 {
            p.terms.insert(vec![0; dim], c);
        }
        p
    }

    pub fn variable(dim: usize, i: usize) -> Self {
        assert!(i < dim);
        let mut exp = vec![0; dim];
        exp[i] = 1;
        let mut p = Poly::zero(dim);
        p.terms.insert(exp, 1.0);
        p
    }

    pub fn monomial(dim: usize, exps: &[u32], coeff: f64) -> Self {
        assert_eq!(exps.len(), dim);
        let mut p = Poly::zero(dim);
        if coeff != 0.0 {
            p.terms.insert(exps.to_vec(), coeff);
        }
        p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u32>, &f64)> {
        self.terms.iter()
    }

    pub fn degree(&self) -> u32 {
        self.terms
            .keys()
            .map(|e| e.iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }

    fn insert(&mut self, exp: Vec<u32>, c: f64) {
        if c == 0.0 {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(exp) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if *o.get() == 0.0 {
                    o.remove();
                }
            }
        }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        assert_eq!(self.dim, other.dim);
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.insert(e.clone(), *c);
        }
        out
    }

    pub fn scale(&self, s: f64) -> Poly {
        let mut out = Poly::zero(self.dim);
        for (e, c) in &self.terms {
            out.insert(e.clone(), c * s);
        }
        out
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.scale(-1.0))
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        assert_eq!(self.dim, other.dim);
        let mut out = Poly::zero(self.dim);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let exp: Vec<u32> = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
                out.insert(exp, ca * cb);
            }
        }
        out
    }

    pub fn eval(&self, x: &Point) -> f64 {
        assert_eq!(x.len(), self.dim);
        self.terms
            .iter()
            .map(|(e, c)| {
                c * e
                    .iter()
                    .enumerate()
                    .map(|(i, &k)| x[i].powi(k as i32))
                    .product::<f64>()
            })
            .sum()
    }

    /// Partial derivative with respect to variable `i`.
    pub fn partial(&self, i: usize) -> Poly {
        let mut out = Poly::zero(self.dim);
        for (e, c) in &self.terms {
            if e[i] == 0 {
                continue;
            }
            let mut exp = e.clone();
            exp[i] -= 1;
            out.insert(exp, c * e[i] as f64);
        }
        out
    }

    pub fn gradient(&self) -> Vec<Poly> {
        (0..self.dim).map(|i| self.partial(i)).collect()
    }

    /// Expectation under the centered Gaussian with diagonal covariance
    /// `diag(variances)`: each monomial factorizes into one-dimensional
    /// moments `E[z^k] = (k-1)!! σ^k` for even `k`, zero otherwise.
    pub fn gaussian_moment_diag(&self, variances: &[f64]) -> f64 {
        assert_eq!(variances.len(), self.dim);
        self.terms
            .iter()
            .map(|(e, c)| {
                let mut m = *c;
                for (i, &k) in e.iter().enumerate() {
                    m *= gaussian_moment_1d(k, variances[i]);
                    if m == 0.0 {
                        break;
                    }
                }
                m
            })
            .sum()
    }

    /// Exact conditional expectation through an affine-Gaussian map:
    /// returns the polynomial `z ↦ E[ f(F z + G) ]` where `G ~ N(0, C)`.
    pub fn gaussian_affine_image(&self, f_map: &Matrix, cov: &Matrix) -> Poly {
        let d = self.dim;
        assert_eq!(f_map.nrows(), d);
        assert_eq!(f_map.ncols(), d);
        assert_eq!(cov.nrows(), d);

        // Linear forms ℓ_i(z) = Σ_k F_ik z_k.
        let lin: Vec<Poly> = (0..d)
            .map(|i| {
                let mut p = Poly::zero(d);
                for k in 0..d {
                    p.insert(
                        {
                            let mut e = vec![0; d];
                            e[k] = 1;
                            e
                        },
                        f_map[(i, k)],
                    );
                }
                p
            })
            .collect();

        let mut out = Poly::zero(d);
        for (exps, coeff) in &self.terms {
            // Expand Π_i (ℓ_i + g_i)^{m_i} over all binomial splits and take
            // the Gaussian expectation of the g-part by Wick's theorem.
            let splits = enumerate_splits(exps);
            for split in splits {
                let mut weight = *coeff;
                let mut z_poly = Poly::constant(d, 1.0);
                let mut g_indices: Vec<usize> = Vec::new();
                for i in 0..d {
                    let (m, j) = (exps[i], split[i]);
                    weight *= binomial(m, j);
                    for _ in 0..j {
                        g_indices.push(i);
                    }
                    for _ in 0..(m - j) {
                        z_poly = z_poly.mul(&lin[i]);
                    }
                }
                let g_moment = wick_moment(&g_indices, cov);
                if g_moment == 0.0 || weight == 0.0 {
                    continue;
                }
                out = out.add(&z_poly.scale(weight * g_moment));
            }
        }
        out
    }
}

fn gaussian_moment_1d(k: u32, variance: f64) -> f64 {
    if k % 2 == 1 {
        return 0.0;
    }
    let mut m = 1.0;
    let mut i = k as i64 - 1;
    while i > 0 {
        m *= i as f64;
        i -= 2;
    }
    m * variance.powi((k / 2) as i32)
}

fn binomial(n: u32, k: u32) -> f64 {
    let mut r = 1.0;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r
}

/// All componentwise splits `0 ≤ j ≤ m` of an exponent vector.
fn enumerate_splits(exps: &[u32]) -> Vec<Vec<u32>> {
    let mut acc = vec![Vec::new()];
    for &m in exps {
        let mut next = Vec::with_capacity(acc.len() * (m as usize + 1));
        for prefix in &acc {
            for j in 0..=m {
                let mut s = prefix.clone();
                s.push(j);
                next.push(s);
            }
        }
        acc = next;
    }
    acc
}

/// `E[g_{i1} g_{i2} ... g_{ik}]` for a centered Gaussian vector with
/// covariance `cov`, by summing over all pairings.
fn wick_moment(indices: &[usize], cov: &Matrix) -> f64 {
    if indices.is_empty() {
        return 1.0;
    }
    if indices.len() % 2 == 1 {
        return 0.0;
    }
    let first = indices[0];
    let rest = &indices[1..];
    let mut total = 0.0;
    for (pos, &other) in rest.iter().enumerate() {
        let mut remaining: Vec<usize> = Vec::with_capacity(rest.len() - 1);
        remaining.extend_from_slice(&rest[..pos]);
        remaining.extend_from_slice(&rest[pos + 1..]);
        total += cov[(first, other)] * wick_moment(&remaining, cov);
    }
    total
}
