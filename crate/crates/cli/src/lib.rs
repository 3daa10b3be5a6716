//! Command-line harness for the optimizer: builtin objectives, tuning runs
//! and paired comparisons.

pub mod app;
pub mod compare;
pub mod objectives;
