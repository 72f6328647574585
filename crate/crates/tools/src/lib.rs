//! File formats, pipeline stages, rating server and command line for the
//! lesion analysis toolkit.

pub mod config;
pub mod error;
pub mod ledger;
pub mod manifest;
pub mod panels;

pub mod pipeline;
pub mod report;
pub mod runner;
pub mod server;

pub mod tables;
pub mod volume_io;

pub use error::{Error, Result};
