//! Volatility forecasting models: HAR-family regressions, GARCH(1,1),
//! gradient-boosted trees, an LSTM and their residual-weighted ensemble.

pub mod ensemble;
pub mod garch;
pub mod gbt;
pub mod har;
pub mod hybrid;
pub mod lstm;

pub use ensemble::{combine, EnsembleModel, Weights};
pub use garch::{fit_garch, GarchModel};
pub use gbt::{fit_gbt, GbtModel, GbtParams, TreeNode};
pub use har::{fit_har, HarModel, HarVariant};
pub use hybrid::{fit_hybrid, HybridConfig, HybridModel, KernelChoice, ValidationSummary};
pub use lstm::{fit_lstm, LstmModel, LstmParams, SequenceSet};
