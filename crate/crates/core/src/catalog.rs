//! Builtin problem files.

use crate::problem::{ProblemFile, ProblemFileError};

pub const EXAMPLE_1_9: &str = include_str!("../../../catalog/example_1_9.toml");
pub const EXAMPLE_2_5: &str = include_str!("../../../catalog/example_2_5.toml");
pub const EXAMPLE_2_6: &str = include_str!("../../../catalog/example_2_6.toml");

/// `(name, TOML text)` for every builtin entry.
pub const ENTRIES: [(&str, &str); 3] = [
    ("example_1_9", EXAMPLE_1_9),
    ("example_2_5", EXAMPLE_2_5),
    ("example_2_6", EXAMPLE_2_6),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    ENTRIES.iter().map(|(n, _)| *n)
}

pub fn source(name: &str) -> Option<&'static str> {
    ENTRIES.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn load(name: &str) -> Option<Result<ProblemFile, ProblemFileError>> {
    source(name).map(ProblemFile::parse)
}
