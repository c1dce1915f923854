//! Vector-valued S-metric spaces and Jungck-type common fixed point iteration.

pub mod catalog;
pub mod checker;
pub mod convergence;
pub mod error;
pub mod expr;
pub mod lattice;
pub mod problem;
pub mod report;
pub mod smetric;
pub mod solver;
pub mod space;


pub use convergence::{
    certify_geometric_rate, contraction_ratio, is_v_cauchy, is_v_convergent, read_trace, write_trace,
    ConvergenceVerdict, OrbitTrace, RateCertificate,
};
pub use error::{Error, InversionFailure, Result};
pub use expr::{Expr, MapSpec};
pub use lattice::{decreases_to_zero, tail_supremum, DominatingSequence, LatticeElement};
pub use problem::{MetricConfig, ProblemFile, ProblemFileError, ProblemSpec, RunOptions, TheoremMode};
pub use report::SCHEMA_VERSION;
pub use smetric::{check_symmetry, validate_axioms, AxiomCVariant, AxiomReport, SMetricSpec, SymmetryReport};

pub use space::{BoxSampler, CarrierBox, FixedSample, Point, Sampler};
pub use solver::{jungck_step, multi_start, residuals, solve, SolveOptions, SolveReport, UniquenessReport};
pub use checker::{
    check_applicability, check_commutes, check_continuity, check_range_containment, estimate_q, CheckReport,
    CommuteCheck, ContinuityReport, QEstimate, RangeCheck,
};
pub use catalog::ENTRIES as CATALOG;
