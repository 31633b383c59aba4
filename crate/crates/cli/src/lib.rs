//! Command-line runner: configuration, batch evaluation, run persistence,
//! leaderboards and meta-evaluation.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod leaderboard;
pub mod run;
pub mod table;
