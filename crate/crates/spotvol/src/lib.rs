//! Realized-volatility forecasting pipeline for half-hourly electricity spot
//! prices: file formats, the remote rating provider, staged orchestration
//! with resumable artifacts, SVG reports and the command-line front end.

pub mod cli;
pub mod config;
pub mod error;
pub mod fixture;
pub mod io;
pub mod pipeline;
pub mod provider;
pub mod svg;

pub use config::PipelineConfig;
pub use error::{AppError, AppResult, ExitKind};
pub use pipeline::{Pipeline, RunManifest, RunOptions, Stage};
