//! Online mid-price forecasting on limit order book event streams.
//!
//! The crate covers the whole pipeline: book ingestion and a synthetic
//! generator ([`lob`]), kernel features and scaling ([`features`]), feature
//! importance ([`importance`]), a small dense network engine ([`nn`]), the
//! epsilon-greedy online agent ([`agent`]), rolling-window baselines
//! ([`baselines`]) and evaluation ([`eval`]).

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod baselines;
pub mod error;
pub mod eval;
pub mod features;
pub mod importance;
pub mod lob;
pub mod nn;
pub mod seed;

pub use agent::{AlpeAgent, AlpeConfig, Horizon};
pub use baselines::{Forecaster, ForecasterSpec, ModelId};
pub use error::{Error, Result};
pub use eval::{DatasetVariant, ForecastRecord, RunResult, StockSummary};
pub use features::{FeatureMatrix, FeatureSet, FeatureSpec, FeatureVector};
pub use importance::{ImportanceMethod, ImportanceVector};
pub use lob::{LobEvent, SyntheticStreamConfig};
