//! Document-level event extraction: a CRF entity tagger over a sentence
//! Transformer, per-type event queries, a heterogeneous event graph and a
//! type-aware record decoder, trained jointly on a small autodiff engine.

pub mod analysis;
pub mod autodiff;
pub mod checkpoint;
pub mod corpus;
pub mod crf;
pub mod decoder;
pub mod eagn;
pub mod encoder;
pub mod ere;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod model;
pub mod nn;
pub mod optim;
pub mod params;
pub mod tensor;
pub mod train;

pub use corpus::{Document, EventRecord, EventSchema, GeneratorConfig};
pub use error::{Result, SeaError};
pub use eval::{evaluate, MetricsReport};
pub use model::{Ablation, ModelConfig, SeaModel};
pub use train::{train, TrainConfig, TrainOutcome};
