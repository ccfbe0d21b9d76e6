//! Batch experiments over the directional Haar operator library.
//!
//! Each subcommand of the `hrl` binary maps to one function in [`runs`]; the
//! result is a [`report::Report`] written as `<name>.json` plus CSV tables.

pub mod corpus;
pub mod report;
pub mod runs;
pub mod settings;

pub use report::{Report, Table};
pub use runs::{run_all, Experiment};
pub use settings::Settings;
