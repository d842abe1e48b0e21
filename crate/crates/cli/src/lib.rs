//! Command-line driver for single runs, Monte Carlo sweeps and reports.

pub mod commands;
pub mod config;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const RUNTIME: i32 = 1;
    pub const USAGE: i32 = 2;
}
