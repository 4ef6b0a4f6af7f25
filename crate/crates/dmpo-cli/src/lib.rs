//! Library surface of the experiment CLI, reused by the binary and the
//! acceptance suite.

pub mod commands;
pub mod config;
pub mod verify;
