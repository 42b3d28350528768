//! File formats, self-test suites and command-line plumbing on top of `plmforge-core`.

pub mod formats;
pub mod input;
pub mod suites;
