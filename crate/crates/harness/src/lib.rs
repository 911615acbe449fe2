//! Benchmarks, attack drills and reports across the seven storage
//! approaches, run against an in-process deployment.

pub mod attack;
pub mod bench;
pub mod drill;
pub mod env;
pub mod report;

pub use attack::{
    compromise_app_host, ransom, sever_data_host, AttackError, AttackScenario, AttackTarget, RansomStats,
    Severance,
};
pub use bench::{bench_store, resilience, run_benchmark, BenchParams, CostReport};
pub use drill::{run_recovery_drill, DataSafety, DrillReport, Outcome, Verdict};
pub use env::{EnvOptions, Environment, ROWS_PREFIX};
pub use report::{check, emit_report, parse_rows, Format, ReportError};
