//! Pointwise check of `T₂(f) ≥ ρ T(f)` over sampled test functions, with the
//! analytic evaluation cross-validated against the nested finite-difference
//! oracle on every trial.

use rand::Rng;
use rayon::prelude::*;

use crate::operator::{t2_form, DiffusionOperator, MetricForm};
use crate::oracles;
use crate::sampling::substream;
use crate::testfn::{sample_function, FamilyKind, FunctionFamily};
use crate::{Point, Result};

use super::{Provenance, Verdict, VerificationReport};

const MARGIN_TOL: f64 = 1e-8;
const ORACLE_REL_TOL: f64 = 1e-4;

fn sample_point(dim: usize, radius: f64, rng: &mut impl Rng) -> Point {
    use rand_distr::StandardNormal;
    let dir = Point::from_iterator(dim, (0..dim).map(|_| {
        let v: f64 = rng.sample(StandardNormal);
        v
    }));
    let norm = dir.norm().max(1e-12);
    let r: f64 = rng.gen_range(0.0f64..1.0).powf(1.0 / dim as f64) * radius;
    dir * (r / norm)
}

/// Sample `(test function, point)` pairs across all analytic families and
/// report the worst margin `T₂(f)(x) − ρ·T(f)(x)`.
pub fn check_t2_inequality(
    op: &DiffusionOperator,
    s: &MetricForm,
    rho: f64,
    trials: usize,
    seed: u64,
) -> Result<VerificationReport> {
    let dim = op.dim();
    struct Trial {
        margin: f64,
        oracle_rel_dev: f64,
        family: FamilyKind,
    }

    let results: Result<Vec<Trial>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let kind = FamilyKind::ALL[trial % FamilyKind::ALL.len()];
            let fam = FunctionFamily::default_for(kind);
            let f = sample_function(&fam, dim, seed.wrapping_add(trial as u64));
            let mut rng = substream(seed ^ 0xa5a5_5a5a, trial as u64);
            let x = sample_point(dim, 2.0, &mut rng);

            let t2 = t2_form(op, s, &f, &x)?;
            let t = s.t_quad(&f, &x)?;
            let fd = oracles::t2_fd_oracle(op, s, &f, &x);
            Ok(Trial {
                margin: t2 - rho * t,
                oracle_rel_dev: (t2 - fd).abs() / (1.0 + t2.abs()),
                family: kind,
            })
        })
        .collect();
    let results = results?;

    let mut margin = f64::INFINITY;
    let mut witness = None;
    let mut worst_oracle = 0.0f64;
    for (i, trial) in results.iter().enumerate() {
        if trial.margin < margin {
            margin = trial.margin;
            witness = Some((i, trial.family));
        }
        worst_oracle = worst_oracle.max(trial.oracle_rel_dev);
    }

    let mut provenance = Provenance::with_tolerance(MARGIN_TOL);
    provenance.seeds = vec![seed];
    provenance.note("trials", trials);
    provenance.note("rho", rho);
    provenance.note("oracle_rel_dev_max", format!("{worst_oracle:.3e}"));
    provenance.note("oracle_rel_tol", ORACLE_REL_TOL);
    if let Some((idx, family)) = witness {
        provenance.note("witness_trial", idx);
        provenance.note("witness_family", family.name());
    }

    let verdict = if margin >= -MARGIN_TOL && worst_oracle <= ORACLE_REL_TOL {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(VerificationReport {
        check_name: "t2_inequality".to_string(),
        verdict,
        margin,
        series: Vec::new(),
        provenance,
    })
}
