//! Joint knowledge-graph and text embedding.
//!
//! Entities, relations and words share one vector space. A translation
//! model is trained on KG triples while a convolutional sentence encoder is
//! trained on distantly labeled sentences; entity mentions in text are the
//! entity vectors themselves, so both objectives move the same rows.

pub mod align;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod exec;
pub mod params;
pub mod skipgram;
pub mod synthetic;
pub mod train;
pub mod transe;
pub mod vocab;

pub use error::{Error, Result};
pub use exec::Execution;
pub use params::{Checkpoint, ConvParams, Dims, EmbeddingBank};
pub use train::{joint_train, TrainConfig, TrainHistory};
pub use transe::Norm;
pub use vocab::{
    AlignedSentence, EntityId, RelationClass, RelationClasses, RelationId, Triple, TripleStore, Vocabulary, WordId,
};
