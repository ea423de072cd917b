//! Scenario runner: parse a strict TOML config describing an operator, a
//! certificate source and a set of checks; run everything; emit a
//! deterministic JSON report plus a long-format CSV of time series.
//!
//! Reports contain no timestamps, so rerunning an identical config produces
//! byte-identical output.

pub mod scenario;

pub use scenario::{
    builtin_scenario, builtin_names, run_scenario, run_scenario_str, write_outputs, CertificateRecord,
    CheckKind, ScenarioConfig, ScenarioReport,
};

/// Exit code contract: 0 = all checks passed (inconclusive allowed, flagged),
/// 1 = a check failed or the certificate stage was infeasible,
/// 2 = config schema violation.
pub const EXIT_OK: u8 = 0;
pub const EXIT_CHECK_FAILED: u8 = 1;
pub const EXIT_SCHEMA: u8 = 2;
