//! Scenario files, experiment orchestration, noise injection, the invariant
//! suite and report assembly behind the `fracwave` command line.

pub mod cli;
pub mod error;
pub mod noise;
pub mod oracle;
pub mod recipe;
pub mod report;
pub mod run;
pub mod scenario;
pub mod verify;

pub use error::{HarnessError, Result, SchemaIssue};
pub use recipe::Recipe;
pub use scenario::Scenario;
