//! Neural relation extraction from distantly supervised entity-pair bags,
//! with sentence-level direct supervision feeding the attention weights.

pub mod bag_encoder;
pub mod checkpoint;
pub mod cli;
pub mod dataset;
pub mod diff;
pub mod embeddings;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod manifest;
pub mod model;
pub mod sentence_encoder;
pub mod training;

pub use error::{Error, Result};
