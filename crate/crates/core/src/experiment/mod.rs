//! Config-driven sweeps over codebook mixtures, the invariant suite, and the
//! artifacts they write (JSON record, versioned CSV, log).

mod config;
mod run;
mod verify;

pub use config::{
    CascadeSpec, CodebookSpec, ExperimentConfig, FamiliesSpec, FamilySpec, GridPoint, HypothesisSpec, InstanceSpec,
    LearnerSpec, OutputSpec, RuleKind, SweepSpec, OUT_DIR_ENV,
};
pub use run::{
    coverage_allowance, evaluate_point, run, to_csv, to_log, write_artifacts, Check, Instance, PointError, RowChecks,
    Summary, SweepOutput, SweepRow, CSV_VERSION, SOUNDNESS_TOL,
};
pub use verify::{index_joint, verify, VerifyReport};

/// Process exit codes of the command-line tool.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const INVARIANT: i32 = 2;
    pub const RESOURCE: i32 = 3;
}
