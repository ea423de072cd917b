//! Deterministic point generation: low-discrepancy sequences for region
//! sweeps and counter-based RNG substreams for particle simulation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::Point;

/// Independent RNG substream for one logical unit of work (one particle,
/// one replicate). Streams with the same `seed` but different `index` are
/// statistically independent and reproducible regardless of scheduling.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Additive-recurrence low-discrepancy sequence in the unit cube, using the
/// generalized golden ratio per dimension.
pub struct R2Sequence {
    alphas: Vec<f64>,
    state: Vec<f64>,
}

impl R2Sequence {
    pub fn new(dim: usize) -> Self {
        // φ_d is the unique positive root of x^{d+1} = x + 1.
        let mut phi = 1.5f64;
        for _ in 0..64 {
            phi = (1.0 + phi).powf(1.0 / (dim as f64 + 1.0));
        }
        let alphas: Vec<f64> = (1..=dim).map(|k| (1.0 / phi.powi(k as i32)).fract()).collect();
        R2Sequence {
            state: vec![0.5; dim],
            alphas,
        }
    }
}

impl Iterator for R2Sequence {
    type Item = Vec<f64>;

    fn next(&mut self) -> Option<Vec<f64>> {
        for (s, a) in self.state.iter_mut().zip(&self.alphas) {
            *s = (*s + *a).fract();
        }
        Some(self.state.clone())
    }
}

/// `count` quasi-random points in the closed ball of the given radius,
/// obtained by filtering the R2 sequence on the enclosing cube. For high
/// dimensions (where the ball occupies a vanishing cube fraction) the points
/// fall back to seeded Gaussian directions with radial stratification.
pub fn ball_points(dim: usize, radius: f64, count: usize) -> Vec<Point> {
    assert!(dim >= 1 && radius > 0.0);
    if dim <= 8 {
        let mut out = Vec::with_capacity(count);
        for u in R2Sequence::new(dim) {
            let p = Point::from_iterator(dim, u.iter().map(|v| (2.0 * v - 1.0) * radius));
            if p.norm() <= radius {
                out.push(p);
            }
            if out.len() == count {
                break;
            }
        }
        out
    } else {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = substream(0x9e3779b97f4a7c15, dim as u64);
        (0..count)
            .map(|k| {
                let mut dir = Point::from_iterator(dim, (0..dim).map(|_| {
                    let v: f64 = StandardNormal.sample(&mut rng);
                    v
                }));
                let n = dir.norm();
                if n > 0.0 {
                    dir /= n;
                }
                let r = radius * ((k as f64 + 0.5) / count as f64).powf(1.0 / dim as f64);
                dir * r
            })
            .collect()
    }
}
