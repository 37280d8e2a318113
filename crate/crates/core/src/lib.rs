//! Shapley-based modality attribution and self-consistency checks for
//! vision-language decoders.
//!
//! The engine masks prompt words and image patches, asks a backend for the
//! probability of each generated token, and turns those probabilities into
//! per-token Shapley values. On top of that it computes modality shares
//! (T-SHAP / V-SHAP), CC-SHAP self-consistency between answers and
//! explanations, six edit-based consistency tests and foil-benchmark scores.

pub mod bridge;
pub mod ccshap;
pub mod consistency;
pub mod error;
pub mod mmshap;
pub mod mock;
pub mod runner;
pub mod session;
pub mod shapley;
pub mod tasks;
pub mod text;
pub mod types;

pub use bridge::{Backend, Bridge};
pub use error::{Error, Result};
pub use session::Session;
pub use types::{
    AggregatedAttribution, AttributionMatrix, CoalitionMask, ConsistencyRecord, GenerationEpisode, MeasureKind,
    ModalityScore, MultimodalInput, Outcome, RatioMatrix, Verdict,
};
