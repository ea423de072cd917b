//! Scenario schema, resolution, and execution.

use std::path::Path;

use serde::{Deserialize, Serialize};

use twistbound_core::dynamics::{Ensemble, SdeSystem};
use twistbound_core::kfp::{self, KfpParams, PotentialSpec};
use twistbound_core::lyapunov::{self, LyapunovCandidate};
use twistbound_core::operator::{expansion_rate, DiffusionOperator, MetricForm};
use twistbound_core::sigma::{self, SigmaCertificate, SigmaOptions, SigmaOutcome};
use twistbound_core::testfn::{sample_function, FamilyKind, FunctionFamily, TestFunction};
use twistbound_core::verify::{
    check_fixed_point, check_gradient_bound_batch, check_h1_decay, check_poincare,
    check_t2_inequality, check_wasserstein_contraction, gamma_vs_t_ratio, GradientBoundConfig,
    H1Params, Verdict, VerificationReport, WassersteinConfig,
};
use twistbound_core::{Matrix, Point};

fn default_n() -> usize {
    1
}
fn default_slack() -> f64 {
    0.05
}
fn default_sigma_samples() -> usize {
    100
}
fn default_sigma_radius() -> f64 {
    5.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case", tag = "kind")]
pub enum OperatorSpec {
    /// Kinetic Fokker-Planck with `V = ω²‖x‖²/2` on `ℝ²ⁿ`.
    KfpQuadratic {
        omega: f64,
        #[serde(default = "default_n")]
        n: usize,
    },
    /// Kinetic Fokker-Planck with `V = ω²‖x‖²/2 + ε Σ cos(xᵢ)`.
    KfpPerturbed {
        omega: f64,
        eps: f64,
        #[serde(default = "default_n")]
        n: usize,
    },
    /// `∂²/∂v² + v ∂/∂x`: velocity diffusion, free transport, no confinement.
    Kolmogorov,
    /// Linear drift `z ↦ Jz` with unit diffusion.
    Ou { matrix: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case", tag = "source")]
pub enum CertificateSpec {
    ClosedForm {
        #[serde(default = "default_slack")]
        slack: f64,
    },
    SigmaSearch {
        #[serde(default = "default_sigma_samples")]
        samples: usize,
        #[serde(default = "default_sigma_radius")]
        radius: f64,
    },
    UserSupplied { matrix: Vec<Vec<f64>>, rate: f64 },
}

impl Default for CertificateSpec {
    fn default() -> Self {
        CertificateSpec::ClosedForm {
            slack: default_slack(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Assumption,
    T2,
    GradientBound,
    Wasserstein,
    Poincare,
    H1,
}

fn default_particles() -> usize {
    500
}
fn default_dt() -> f64 {
    1e-3
}
fn default_times() -> Vec<f64> {
    vec![0.5, 1.0, 2.0, 5.0]
}
fn default_gradient_times() -> Vec<f64> {
    vec![0.5, 1.0]
}
fn default_seed() -> u64 {
    42
}
fn default_trials() -> usize {
    500
}
fn default_replicates() -> usize {
    10
}
fn default_quad_nodes() -> usize {
    24
}
fn default_b_weight() -> f64 {
    1.0
}
fn default_t_burn() -> f64 {
    10.0
}
fn default_gradient_functions() -> usize {
    6
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    #[serde(default = "default_particles")]
    pub n_particles: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_times")]
    pub times: Vec<f64>,
    #[serde(default = "default_gradient_times")]
    pub gradient_times: Vec<f64>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_quad_nodes")]
    pub quad_nodes: usize,
    #[serde(default = "default_b_weight")]
    pub b_weight: f64,
    #[serde(default = "default_t_burn")]
    pub t_burn: f64,
    #[serde(default = "default_gradient_functions")]
    pub gradient_functions: usize,
}

impl Default for Numerics {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub operator: OperatorSpec,
    #[serde(default)]
    pub certificate: CertificateSpec,
    pub checks: Vec<CheckKind>,
    #[serde(default)]
    pub numerics: Numerics,
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum CertificateRecord {
    KfpClosedForm(KfpParams),
    SigmaSearch {
        certificate: SigmaCertificate,
        induced_rate: f64,
    },
    /// Identity metric with a rate read off the drift Jacobian.
    JacobianRate { rate: f64 },
    UserSupplied { rate: f64 },
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Summary {
    pub pass: usize,
    pub fail: usize,
    pub inconclusive: usize,
    pub degenerate: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScenarioReport {
    pub name: String,
    pub certificate: CertificateRecord,
    pub checks: Vec<VerificationReport>,
    pub summary: Summary,
    pub config: ScenarioConfig,
}

impl ScenarioReport {
    pub fn any_failed(&self) -> bool {
        self.summary.fail > 0
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization")
    }

    /// Long-format series table: `check,time,value,stderr,seed`.
    pub fn to_series_csv(&self) -> String {
        let mut out = String::from("check,time,value,stderr,seed\n");
        for report in &self.checks {
            for p in &report.series {
                out.push_str(&format!(
                    "{},{:.17e},{:.17e},{:.17e},{}\n",
                    report.check_name, p.time, p.value, p.stderr, p.seed
                ));
            }
        }
        out
    }
}

/// Configuration or validation problem; maps to exit code 2.
#[derive(Debug)]
pub struct SchemaError(pub String);

impl std::fmt::Display for SchemaError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for SchemaError {}

/// Runtime failure of a check or certificate stage; maps to exit code 1.
#[derive(Debug)]
pub struct RunError(pub String);

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for RunError {}

pub fn parse_config(text: &str) -> Result<ScenarioConfig, SchemaError> {
    let config: ScenarioConfig =
        toml::from_str(text).map_err(|e| SchemaError(format!("config schema violation: {e}")))?;
    validate(&config)?;
    Ok(config)
}

fn validate(config: &ScenarioConfig) -> Result<(), SchemaError> {
    if config.name.is_empty() || !config.name.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '-') {
        return Err(SchemaError(
            "scenario name must be a nonempty identifier (alphanumeric, '_', '-')".into(),
        ));
    }
    if config.checks.is_empty() {
        return Err(SchemaError("at least one check must be requested".into()));
    }
    let quadratic_kfp = matches!(config.operator, OperatorSpec::KfpQuadratic { .. });
    for check in &config.checks {
        match check {
            CheckKind::Poincare | CheckKind::H1 if !quadratic_kfp => {
                return Err(SchemaError(format!(
                    "check {check:?} requires the kfp_quadratic operator (exact invariant measure)"
                )));
            }
            _ => {}
        }
    }
    if config.numerics.times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SchemaError("numerics.times must be strictly increasing".into()));
    }
    if let OperatorSpec::Ou { matrix } = &config.operator {
        let n = matrix.len();
        if n == 0 || matrix.iter().any(|row| row.len() != n) {
            return Err(SchemaError("ou.matrix must be square and nonempty".into()));
        }
    }
    Ok(())
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> Matrix {
    let n = rows.len();
    Matrix::from_fn(n, rows[0].len(), |i, j| rows[i][j])
}

struct Resolved {
    op: DiffusionOperator,
    metric: MetricForm,
    rate: f64,
    record: CertificateRecord,
    potential: Option<PotentialSpec>,
}

fn resolve(config: &ScenarioConfig) -> Result<Resolved, RunError> {
    let (op, potential): (DiffusionOperator, Option<PotentialSpec>) = match &config.operator {
        OperatorSpec::KfpQuadratic { omega, n } => {
            let pot = PotentialSpec::quadratic(*n, *omega);
            (kfp::build_operator(&pot).map_err(run_err)?, Some(pot))
        }
        OperatorSpec::KfpPerturbed { omega, eps, n } => {
            let pot = PotentialSpec::perturbed_cosine(*n, *omega, *eps);
            (kfp::build_operator(&pot).map_err(run_err)?, Some(pot))
        }
        OperatorSpec::Kolmogorov => (DiffusionOperator::kolmogorov(), None),
        OperatorSpec::Ou { matrix } => {
            let j = rows_to_matrix(matrix);
            let d = j.nrows();
            (
                DiffusionOperator::linear_drift(j, Matrix::identity(d, d)).map_err(run_err)?,
                None,
            )
        }
    };
    let dim = op.dim();

    let resolved = match (&config.certificate, &potential) {
        (CertificateSpec::ClosedForm { slack }, Some(pot)) => {
            let (m, big_m) = pot.hessian_bounds();
            let params = kfp::solve_kfp_params(m, big_m, *slack).map_err(run_err)?;
            let metric = params.metric_form(pot.n());
            Resolved {
                rate: params.rho,
                record: CertificateRecord::KfpClosedForm(params),
                metric,
                op,
                potential,
            }
        }
        (CertificateSpec::ClosedForm { .. }, None) => {
            // Identity metric; certify from the drift Jacobian's symmetric
            // part on a sample (negative rate means growth bound only).
            let metric = MetricForm::identity(dim);
            let sample = twistbound_core::sampling::ball_points(dim, 5.0, 64);
            let k = expansion_rate(&op, &metric, &sample).map_err(run_err)?;
            Resolved {
                rate: -k,
                record: CertificateRecord::JacobianRate { rate: -k },
                metric,
                op,
                potential,
            }
        }
        (CertificateSpec::SigmaSearch { samples, radius }, _) => {
            let points = twistbound_core::sampling::ball_points(dim, *radius, *samples);
            let jacobians: Vec<Matrix> = points.iter().map(|z| op.drift_jacobian(z)).collect();
            let outcome =
                sigma::find_sigma(&jacobians, &SigmaOptions::default()).map_err(run_err)?;
            let cert = match outcome {
                SigmaOutcome::Certificate(c) => c,
                SigmaOutcome::Infeasible(report) => {
                    return Err(RunError(format!(
                        "sigma search infeasible: best residual eigenvalue {:.6e} after {} iterations",
                        report.best_phi, report.iterations
                    )));
                }
            };
            let sigma_matrix = cert.sigma_matrix();
            let metric = MetricForm::new(sigma_matrix.clone()).map_err(run_err)?;
            let lam_max = twistbound_core::linalg::max_eig(&sigma_matrix);
            let induced_rate = cert.rate_a / lam_max;
            Resolved {
                rate: induced_rate,
                record: CertificateRecord::SigmaSearch {
                    certificate: cert,
                    induced_rate,
                },
                metric,
                op,
                potential,
            }
        }
        (CertificateSpec::UserSupplied { matrix, rate }, _) => {
            let metric = MetricForm::new(rows_to_matrix(matrix)).map_err(run_err)?;
            Resolved {
                rate: *rate,
                record: CertificateRecord::UserSupplied { rate: *rate },
                metric,
                op,
                potential,
            }
        }
    };
    Ok(resolved)
}

fn run_err(e: twistbound_core::CoreError) -> RunError {
    RunError(e.to_string())
}

fn initial_ensembles(dim: usize, n: usize, seed: u64) -> Result<(Ensemble, Ensemble), RunError> {
    let mut mean_mu = Point::zeros(dim);
    let mut mean_nu = Point::zeros(dim);
    mean_mu[0] = 2.0;
    mean_nu[0] = -2.0;
    let mu = Ensemble::gaussian(n, &mean_mu, &Matrix::identity(dim, dim), seed ^ 0x11)
        .map_err(run_err)?;
    let nu = Ensemble::gaussian(n, &mean_nu, &(Matrix::identity(dim, dim) * 1.5), seed ^ 0x22)
        .map_err(run_err)?;
    Ok((mu, nu))
}

fn sample_battery(dim: usize, kinds: &[FamilyKind], count: usize, seed: u64) -> Vec<TestFunction> {
    (0..count)
        .map(|i| {
            let kind = kinds[i % kinds.len()];
            sample_function(&FunctionFamily::default_for(kind), dim, seed + 1000 + i as u64)
        })
        .collect()
}

/// Run every requested check and assemble the scenario report.
pub fn run_scenario_config(config: &ScenarioConfig) -> Result<ScenarioReport, RunError> {
    let resolved = resolve(config)?;
    let num = &config.numerics;
    let dim = resolved.op.dim();
    let mut checks: Vec<VerificationReport> = Vec::new();

    for check in &config.checks {
        match check {
            CheckKind::Assumption => {
                let cand = LyapunovCandidate::one_plus_norm_sq(dim);
                let sample = twistbound_core::sampling::ball_points(dim, 20.0, 10_000);
                let assumption =
                    lyapunov::check_assumption(&cand, &resolved.op, &resolved.metric, &sample)
                        .map_err(run_err)?;
                let mut provenance = twistbound_core::verify::Provenance::with_tolerance(0.0);
                provenance.note("c_hat", format!("{:.12e}", assumption.c_hat));
                provenance.note("sample_size", assumption.sample_size);
                provenance.note("scope", &assumption.scope_note);
                provenance.note("compact_sublevels", assumption.compact_sublevels);
                checks.push(VerificationReport {
                    check_name: "assumption".to_string(),
                    verdict: match assumption.verdict {
                        lyapunov::AssumptionVerdict::Pass => Verdict::Pass,
                        lyapunov::AssumptionVerdict::Fail => Verdict::Fail,
                    },
                    margin: assumption.c_hat,
                    series: Vec::new(),
                    provenance,
                });
            }
            CheckKind::T2 => {
                checks.push(
                    check_t2_inequality(
                        &resolved.op,
                        &resolved.metric,
                        resolved.rate,
                        num.trials,
                        num.seed,
                    )
                    .map_err(run_err)?,
                );
            }
            CheckKind::GradientBound => {
                let sys = SdeSystem::from_operator(resolved.op.clone()).map_err(run_err)?;
                let fs = sample_battery(
                    dim,
                    &[FamilyKind::Linear, FamilyKind::Quadratic],
                    num.gradient_functions,
                    num.seed,
                );
                let points = vec![Point::zeros(dim), {
                    let mut p = Point::zeros(dim);
                    p[0] = 1.0;
                    p
                }];
                for (ti, &t) in num.gradient_times.iter().enumerate() {
                    let cfg = GradientBoundConfig {
                        t,
                        dt: num.dt,
                        n_streams: num.n_particles,
                        seed: num.seed + ti as u64,
                        ..Default::default()
                    };
                    let mut report = check_gradient_bound_batch(
                        &sys,
                        &resolved.metric,
                        -resolved.rate,
                        &fs,
                        &points,
                        &cfg,
                    )
                    .map_err(run_err)?;
                    report.check_name = format!("gradient_bound_t{t}");
                    checks.push(report);
                }
            }
            CheckKind::Wasserstein => {
                let sys = SdeSystem::from_operator(resolved.op.clone()).map_err(run_err)?;
                let (mu, nu) = initial_ensembles(dim, num.n_particles, num.seed)?;
                let cfg = WassersteinConfig {
                    times: num.times.clone(),
                    dt: num.dt,
                    seed: num.seed,
                    replicates: num.replicates,
                    coupled: true,
                };
                checks.push(
                    check_wasserstein_contraction(
                        &sys,
                        &resolved.metric,
                        -resolved.rate,
                        &mu,
                        &nu,
                        &cfg,
                    )
                    .map_err(run_err)?,
                );
                if resolved.rate > 0.0 {
                    checks.push(
                        check_fixed_point(
                            &sys,
                            &resolved.metric,
                            resolved.rate,
                            &nu,
                            num.t_burn,
                            &num.times,
                            num.dt,
                            num.seed ^ 0x77,
                            num.replicates.min(5),
                        )
                        .map_err(run_err)?,
                    );
                }
            }
            CheckKind::Poincare => {
                let pot = resolved.potential.as_ref().expect("validated quadratic potential");
                let mut fns = sample_battery(dim, &[FamilyKind::Polynomial], 20, num.seed);
                fns.extend(sample_battery(dim, &[FamilyKind::Trigonometric], 5, num.seed + 71));
                checks.push(
                    check_poincare(pot, &resolved.metric, resolved.rate, &fns, num.quad_nodes)
                        .map_err(run_err)?,
                );
            }
            CheckKind::H1 => {
                let pot = resolved.potential.as_ref().expect("validated quadratic potential");
                let a_gamma = gamma_vs_t_ratio(resolved.op.diffusion(), &resolved.metric)
                    .map_err(run_err)?;
                if resolved.rate <= 0.0 {
                    return Err(RunError(
                        "H¹ decay requires a strictly positive certified rate".into(),
                    ));
                }
                let c_poincare = a_gamma / resolved.rate;
                let c_prime = H1Params::max_rate(resolved.rate, c_poincare);
                let h1 = H1Params::new(resolved.rate, 0.0, num.b_weight, c_poincare, c_prime)
                    .map_err(run_err)?;
                let fs = sample_battery(
                    dim,
                    &[FamilyKind::Linear, FamilyKind::Quadratic],
                    6,
                    num.seed + 13,
                );
                let mut times = vec![0.0];
                times.extend(num.times.iter().copied());
                for (fi, f) in fs.iter().enumerate() {
                    let mut report =
                        check_h1_decay(pot, &resolved.metric, &h1, f, &times).map_err(run_err)?;
                    report.check_name = format!("h1_decay_f{fi}");
                    checks.push(report);
                }
            }
        }
    }

    checks.sort_by(|a, b| a.check_name.cmp(&b.check_name));
    let mut summary = Summary::default();
    for c in &checks {
        match c.verdict {
            Verdict::Pass => summary.pass += 1,
            Verdict::Fail => summary.fail += 1,
            Verdict::Inconclusive => summary.inconclusive += 1,
            Verdict::Degenerate => summary.degenerate += 1,
        }
    }

    Ok(ScenarioReport {
        name: config.name.clone(),
        certificate: resolved.record,
        checks,
        summary,
        config: config.clone(),
    })
}

/// Parse and run a scenario from TOML text.
pub fn run_scenario_str(text: &str) -> Result<ScenarioReport, Box<dyn std::error::Error>> {
    let config = parse_config(text)?;
    Ok(run_scenario_config(&config)?)
}

/// Parse and run a scenario config file.
pub fn run_scenario(path: &Path) -> Result<ScenarioReport, Box<dyn std::error::Error>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| SchemaError(format!("cannot read {}: {e}", path.display())))?;
    run_scenario_str(&text)
}

/// Write `<name>.report.json` and `<name>.series.csv` into `out_dir`.
pub fn write_outputs(report: &ScenarioReport, out_dir: &Path) -> std::io::Result<(std::path::PathBuf, std::path::PathBuf)> {
    std::fs::create_dir_all(out_dir)?;
    let json_path = out_dir.join(format!("{}.report.json", report.name));
    let csv_path = out_dir.join(format!("{}.series.csv", report.name));
    std::fs::write(&json_path, report.to_json())?;
    std::fs::write(&csv_path, report.to_series_csv())?;
    Ok((json_path, csv_path))
}

pub const BUILTIN_KFP_QUADRATIC_DEMO: &str = r#"
name = "kfp_quadratic_demo"
checks = ["assumption", "t2", "gradient_bound", "wasserstein", "poincare", "h1"]

[operator]
kind = "kfp_quadratic"
omega = 1.0

[certificate]
source = "closed_form"
slack = 0.05


[numerics]
n_particles = 500
dt = 0.001
times = [0.5, 1.0, 2.0, 5.0]
seed = 42
"#;

pub const BUILTIN_KFP_PERTURBED_DEMO: &str = r#"
name = "kfp_perturbed_demo"
checks = ["assumption", "t2", "gradient_bound", "wasserstein"]

[operator]
kind = "kfp_perturbed"
omega = 1.0
eps = 0.1

[certificate]
source = "closed_form"
slack = 0.05


[numerics]
n_particles = 400
dt = 0.001
times = [0.5, 1.0, 2.0]
seed = 42
"#;

pub const BUILTIN_KOLMOGOROV_DEMO: &str = r#"
name = "kolmogorov_demo"
checks = ["assumption", "t2", "gradient_bound"]

[operator]
kind = "kolmogorov"


[numerics]
n_particles = 400
dt = 0.001
gradient_times = [0.5, 1.0]
seed = 42
"#;

/// Operator description reused by the `find-sigma` config.
pub type OperatorSpecForSigma = OperatorSpec;

/// Assemble the Jacobian sample for a Σ-search: either explicit matrices or
/// an operator sampled on a quasi-random ball.
pub fn sigma_jacobians(
    explicit: &[Vec<Vec<f64>>],
    operator: &Option<OperatorSpec>,
    samples: Option<usize>,
    radius: Option<f64>,
) -> Result<Vec<Matrix>, Box<dyn std::error::Error>> {
    if !explicit.is_empty() {
        return Ok(explicit.iter().map(|rows| rows_to_matrix(rows)).collect());
    }
    let spec = operator.as_ref().ok_or_else(|| {
        Box::new(SchemaError(
            "find-sigma config needs either 'jacobians' or an [operator] table".into(),
        )) as Box<dyn std::error::Error>
    })?;
    let config = ScenarioConfig {
        name: "sigma".into(),
        operator: spec.clone(),
        certificate: CertificateSpec::default(),
        checks: vec![CheckKind::T2],
        numerics: Numerics::default(),
    };
    let resolved = resolve(&config)?;
    let points = twistbound_core::sampling::ball_points(
        resolved.op.dim(),
        radius.unwrap_or(default_sigma_radius()),
        samples.unwrap_or(default_sigma_samples()),
    );
    Ok(points.iter().map(|z| resolved.op.drift_jacobian(z)).collect())
}

pub fn builtin_names() -> Vec<&'static str> {
    vec!["kfp_quadratic_demo", "kfp_perturbed_demo", "kolmogorov_demo"]
}

pub fn builtin_scenario(name: &str) -> Option<&'static str> {
    match name {
        "kfp_quadratic_demo" => Some(BUILTIN_KFP_QUADRATIC_DEMO),
        "kfp_perturbed_demo" => Some(BUILTIN_KFP_PERTURBED_DEMO),
        "kolmogorov_demo" => Some(BUILTIN_KOLMOGOROV_DEMO),
        _ => None,
    }
}
