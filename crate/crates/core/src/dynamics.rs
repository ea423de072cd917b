//! Euler-Maruyama simulation of the diffusion generated by `L`: single
//! paths, synchronously coupled pairs, particle ensembles, and the exact
//! linear-Gaussian oracle used as ground truth for quadratic potentials.
//!
//! Noise convention: the generator contains `tr(A ∇²)`, so the SDE noise
//! matrix satisfies `σ σᵀ = 2A` (fixed by the zero-drift moment test in the
//! test suite, not by assertion). For the kinetic Fokker-Planck operator this
//! puts coefficient `√2` on the velocity Brownian motion, which is exactly
//! what makes `e^{−V(x)−‖v‖²/2}` stationary.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::operator::{DiffusionOperator, MetricForm};
use crate::sampling::substream;
use crate::{CoreError, Matrix, Point, Result};

/// Diffusion operator paired with a noise matrix reproducing its generator.
#[derive(Clone)]
pub struct SdeSystem {
    op: DiffusionOperator,
    noise: Matrix,
}

impl SdeSystem {
    pub fn new(op: DiffusionOperator, noise: Matrix) -> Result<Self> {
        if noise.nrows() != op.dim() {
            return Err(CoreError::dim("SdeSystem noise rows", op.dim(), noise.nrows()));
        }
        let target = op.diffusion() * 2.0;
        let got = &noise * noise.transpose();
        if (got - target).amax() > 1e-10 {
            return Err(CoreError::InvalidInput(
                "noise matrix must satisfy σσᵀ = 2·diffusion".into(),
            ));
        }
        Ok(SdeSystem { op, noise })
    }

    /// Build the noise matrix as the PSD square root of `2A`, dropping
    /// null columns (degenerate directions receive no noise).
    pub fn from_operator(op: DiffusionOperator) -> Result<Self> {
        let root = linalg::psd_sqrt(&(op.diffusion() * 2.0));
        let cols: Vec<usize> = (0..root.ncols())
            .filter(|&c| root.column(c).norm() > 1e-12)
            .collect();
        let noise = if cols.is_empty() {
            Matrix::zeros(op.dim(), 0)
        } else {
            let mut m = Matrix::zeros(op.dim(), cols.len());
            for (k, &c) in cols.iter().enumerate() {
                m.column_mut(k).copy_from(&root.column(c));
            }
            m
        };
        SdeSystem::new(op, noise)
    }

    pub fn operator(&self) -> &DiffusionOperator {
        &self.op
    }

    pub fn noise(&self) -> &Matrix {
        &self.noise
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn noise_dim(&self) -> usize {
        self.noise.ncols()
    }
}

fn check_finite(state: &Point, context: &'static str) -> Result<()> {
    for (i, v) in state.iter().enumerate() {
        if !v.is_finite() {
            return Err(CoreError::NonFinite { index: i, context });
        }
    }
    Ok(())
}

/// One explicit step: `z ← z + b(z)·dt + σ·ΔW` with a caller-supplied
/// Gaussian increment of variance `dt` per component.
pub fn step_euler_maruyama(
    sys: &SdeSystem,
    state: &Point,
    dt: f64,
    noise_increment: &Point,
) -> Result<Point> {
    if dt <= 0.0 {
        return Err(CoreError::InvalidInput("dt must be positive".into()));
    }
    if noise_increment.len() != sys.noise_dim() {
        return Err(CoreError::dim("noise increment", sys.noise_dim(), noise_increment.len()));
    }
    let next = state + sys.op.drift(state) * dt + &sys.noise * noise_increment;
    check_finite(&next, "step_euler_maruyama")?;
    Ok(next)
}

fn gaussian_increment<R: Rng>(rng: &mut R, k: usize, dt: f64) -> Point {
    let scale = dt.sqrt();
    Point::from_iterator(k, (0..k).map(|_| {
        let z: f64 = rng.sample(StandardNormal);
        z * scale
    }))
}

fn steps_for(t_end: f64, dt: f64) -> Result<usize> {
    if t_end < 0.0 || dt <= 0.0 {
        return Err(CoreError::InvalidInput("need t_end ≥ 0 and dt > 0".into()));
    }
    let steps = (t_end / dt).round();
    if (steps * dt - t_end).abs() > 1e-9 * (1.0 + t_end) {
        return Err(CoreError::InvalidInput(format!(
            "dt = {dt} does not divide t_end = {t_end}"
        )));
    }
    Ok(steps as usize)
}

/// Evolve one state with the RNG substream `(seed, stream)`.
pub fn evolve_point(
    sys: &SdeSystem,
    z0: &Point,
    t_end: f64,
    dt: f64,
    seed: u64,
    stream: u64,
) -> Result<Point> {
    let steps = steps_for(t_end, dt)?;
    let mut rng = substream(seed, stream);
    let k = sys.noise_dim();
    let mut z = z0.clone();
    for _ in 0..steps {
        let dw = gaussian_increment(&mut rng, k, dt);
        z = step_euler_maruyama(sys, &z, dt, &dw)?;
    }
    Ok(z)
}

/// Weighted particle cloud (uniform weights) standing in for a probability
/// measure, with the RNG provenance of how it was produced.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeedProvenance {
    pub seed: u64,
    pub dt: Option<f64>,
    pub t: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Ensemble {
    particles: Vec<Point>,
    provenance: SeedProvenance,
}

impl Ensemble {
    pub fn from_points(particles: Vec<Point>, provenance: SeedProvenance) -> Result<Self> {
        if particles.is_empty() {
            return Err(CoreError::InvalidInput("ensemble needs at least one particle".into()));
        }
        let d = particles[0].len();
        if particles.iter().any(|p| p.len() != d) {
            return Err(CoreError::dim("ensemble particles", d, 0));
        }
        Ok(Ensemble {
            particles,
            provenance,
        })
    }

    /// `N` samples of `N(mean, cov)` drawn from per-particle substreams.
    pub fn gaussian(n: usize, mean: &Point, cov: &Matrix, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(CoreError::InvalidInput("ensemble needs at least one particle".into()));
        }
        let d = mean.len();
        let root = linalg::psd_sqrt(cov);
        let particles: Vec<Point> = (0..n)
            .map(|i| {
                let mut rng = substream(seed, i as u64);
                let z = Point::from_iterator(d, (0..d).map(|_| {
                    let v: f64 = rng.sample(StandardNormal);
                    v
                }));
                mean + &root * z
            })
            .collect();
        Ensemble::from_points(
            particles,
            SeedProvenance {
                seed,
                dt: None,
                t: None,
            },
        )
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.particles[0].len()
    }

    pub fn particles(&self) -> &[Point] {
        &self.particles
    }

    pub fn provenance(&self) -> &SeedProvenance {
        &self.provenance
    }

    pub fn weight(&self) -> f64 {
        1.0 / self.particles.len() as f64
    }

    pub fn mean(&self) -> Point {
        let mut m = Point::zeros(self.dim());
        for p in &self.particles {
            m += p;
        }
        m / self.particles.len() as f64
    }

    pub fn covariance(&self) -> Matrix {
        let mean = self.mean();
        let d = self.dim();
        let mut c = Matrix::zeros(d, d);
        for p in &self.particles {
            let y = p - &mean;
            c += &y * y.transpose();
        }
        c / (self.particles.len() as f64 - 1.0).max(1.0)
    }

    /// Flat text table: provenance comments, then one row per particle.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# seed={}", self.provenance.seed));
        if let Some(dt) = self.provenance.dt {
            out.push_str(&format!(" dt={dt}"));
        }
        if let Some(t) = self.provenance.t {
            out.push_str(&format!(" t={t}"));
        }
        out.push('\n');
        for p in &self.particles {
            let row: Vec<String> = p.iter().map(|v| format!("{v:.17e}")).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut provenance = SeedProvenance {
            seed: 0,
            dt: None,
            t: None,
        };
        let mut particles = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                for token in rest.split_whitespace() {
                    if let Some((key, value)) = token.split_once('=') {
                        match key {
                            "seed" => provenance.seed = value.parse().unwrap_or(0),
                            "dt" => provenance.dt = value.parse().ok(),
                            "t" => provenance.t = value.parse().ok(),
                            _ => {}
                        }
                    }
                }
                continue;
            }
            let row: std::result::Result<Vec<f64>, _> =
                line.split(',').map(|tok| tok.trim().parse::<f64>()).collect();
            let row = row.map_err(|e| CoreError::InvalidInput(format!("bad ensemble row: {e}")))?;
            particles.push(Point::from_column_slice(&row));
        }
        Ensemble::from_points(particles, provenance)
    }
}

/// Push an ensemble forward by time `t_end`. Each particle consumes its own
/// substream keyed by `(seed, particle index)`, so the result is bit-for-bit
/// reproducible and independent of scheduling. Running two ensembles with the
/// same seed couples them synchronously (particle `i` shares noise across the
/// two runs); different seeds give independent noise.
pub fn evolve_ensemble(
    sys: &SdeSystem,
    ens: &Ensemble,
    t_end: f64,
    dt: f64,
    seed: u64,
) -> Result<Ensemble> {
    if ens.dim() != sys.dim() {
        return Err(CoreError::dim("evolve_ensemble", sys.dim(), ens.dim()));
    }
    if t_end == 0.0 {
        return Ok(ens.clone());
    }
    let particles: Result<Vec<Point>> = ens
        .particles
        .par_iter()
        .enumerate()
        .map(|(i, z0)| evolve_point(sys, z0, t_end, dt, seed, i as u64))
        .collect();
    Ensemble::from_points(
        particles?,
        SeedProvenance {
            seed,
            dt: Some(dt),
            t: Some(t_end),
        },
    )
}

/// Trajectories from several starting points driven by common noise: the
/// returned grid is `result[start][stream]`, and for each stream index all
/// starting points consume identical increments. This realizes pathwise
/// derivative estimates with common random numbers.
pub fn evolve_starts_common_noise(
    sys: &SdeSystem,
    starts: &[Point],
    n_streams: usize,
    t_end: f64,
    dt: f64,
    seed: u64,
) -> Result<Vec<Vec<Point>>> {
    let steps = steps_for(t_end, dt)?;
    let k = sys.noise_dim();
    let per_stream: Result<Vec<Vec<Point>>> = (0..n_streams)
        .into_par_iter()
        .map(|stream| {
            let mut rng = substream(seed, stream as u64);
            let mut states: Vec<Point> = starts.to_vec();
            for _ in 0..steps {
                let dw = gaussian_increment(&mut rng, k, dt);
                for z in states.iter_mut() {
                    *z = step_euler_maruyama(sys, z, dt, &dw)?;
                }
            }
            Ok(states)
        })
        .collect();
    let per_stream = per_stream?;
    let mut out = vec![Vec::with_capacity(n_streams); starts.len()];
    for stream_states in per_stream {
        for (s, z) in stream_states.into_iter().enumerate() {
            out[s].push(z);
        }
    }
    Ok(out)
}

/// Twisted distance between two synchronously coupled trajectories, recorded
/// along the way.
#[derive(Clone, Debug)]
pub struct CoupledRun {
    pub times: Vec<f64>,
    pub dist_series: Vec<f64>,
    pub metric: MetricForm,
}

/// Drive two copies of the SDE with identical noise and record the induced
/// distance between them. For linear drift the difference process is
/// deterministic: the noise cancels exactly.
pub fn run_coupled(
    sys: &SdeSystem,
    z1: &Point,
    z2: &Point,
    t_end: f64,
    dt: f64,
    s: &MetricForm,
    seed: u64,
) -> Result<CoupledRun> {
    if z1.len() != sys.dim() || z2.len() != sys.dim() {
        return Err(CoreError::dim("run_coupled", sys.dim(), z1.len().max(z2.len())));
    }
    let steps = steps_for(t_end, dt)?;
    let k = sys.noise_dim();
    let mut rng = substream(seed, 0);
    let mut a = z1.clone();
    let mut b = z2.clone();
    let mut times = Vec::with_capacity(steps + 1);
    let mut dist_series = Vec::with_capacity(steps + 1);
    times.push(0.0);
    dist_series.push(s.induced_distance(&a, &b));
    for step in 1..=steps {
        let dw = gaussian_increment(&mut rng, k, dt);
        a = step_euler_maruyama(sys, &a, dt, &dw)?;
        b = step_euler_maruyama(sys, &b, dt, &dw)?;
        times.push(step as f64 * dt);
        dist_series.push(s.induced_distance(&a, &b));
    }
    Ok(CoupledRun {
        times,
        dist_series,
        metric: s.clone(),
    })
}

/// Exact first and second moments of the linear SDE `dZ = JZ dt + σ dB`:
/// `mean(t) = e^{tJ} mean₀` and the covariance solving
/// `Ċ = JC + CJᵀ + σσᵀ`, via the block-exponential Gramian.
pub fn linear_oracle_moments(
    j: &Matrix,
    noise: &Matrix,
    mean0: &Point,
    cov0: &Matrix,
    t: f64,
) -> Result<(Point, Matrix)> {
    if t < 0.0 {
        return Err(CoreError::InvalidInput("time must be nonnegative".into()));
    }
    let q = noise * noise.transpose();
    let (f, gram) = linalg::linear_flow_and_gramian(j, &q, t);
    let mean = &f * mean0;
    let cov = &f * cov0 * f.transpose() + gram;
    Ok((mean, linalg::sym(&cov)))
}
