// Copyright 2026 The pinnctl Authors
// SPDX-License-Identifier: Apache-2.0

//! Command-line front end for `pinnctl-core`: run configuration, file
//! formats and subcommands.

pub mod cli;
pub mod commands;
pub mod config;
pub mod io;

pub use commands::{run, Outcome};
