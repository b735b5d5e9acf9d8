//! Reproducible experiment pipeline around `regcert-core`: simulate data,
//! certify credible regions, compare with the asymptotic curves and a
//! brute-force oracle, and plot.
//!
//! Every CSV starts with a `#` line carrying the config hash and all seeds;
//! equal hashes give byte-identical CSVs.

// `!(x > 0.0)` is used deliberately so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bundle;
pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod plot;
pub mod table;

pub use commands::{run, Cli, Command};
pub use error::{CliError, Result};
