//! Uplink channel estimation for a STAR-RIS assisted two-user system.
//!
//! The crate covers both operating protocols of the surface:
//!
//! * time switching (TS), where the T and R users are trained in separate
//!   periods with a DFT transmission/reflection pattern, and
//! * energy splitting (ES), where both users are trained at once and the
//!   pilots, splitting ratios and (optionally phase-coupled) patterns are
//!   designed jointly,
//!
//! together with the ON/OFF and two-phase benchmarks, a seeded Monte Carlo
//! engine and the `starris` command-line harness.

pub mod channel;
pub mod cli;
pub mod error;
pub mod estimation;
pub mod matrixkit;
pub mod simulator;
pub mod training;

pub use error::{Error, Result};
