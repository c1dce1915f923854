//! Shared fixtures for the criterion benchmarks.

use jungck_core::{catalog, ProblemSpec};

/// A builtin problem that is known to carry maps.
pub fn builtin(name: &str) -> ProblemSpec {
    catalog::load(name)
        .expect("builtin exists")
        .expect("builtin parses")
        .problem
        .expect("builtin has maps")
}
