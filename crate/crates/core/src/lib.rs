//! Canonicalization of open knowledge base triples.
//!
//! Noun phrases and relation phrases are clustered into synonym groups by
//! fusing two views of each phrase: a fact view learned from the triple
//! graph with a translational embedding model, and a context view learned
//! from the sentences the triples were extracted from. The number of
//! clusters is estimated from the data with a log-distortion jump criterion.
//!
//! Numeric code is generic over [`Scalar`]; the `*64` / `*32` aliases below
//! fix the precision.

pub mod clustering;
pub mod config;
pub mod context_view;
pub mod data;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod fact_view;
pub mod kselect;
pub mod partition;
pub mod pipeline;
pub mod rng;
pub mod scalar;
pub mod seeds;
pub mod vector;

pub use data::{Dataset, Phrase, PhraseId, PhraseKind, PhraseTable, SourceText, Triple};
pub use embedding::{EmbeddingTable, View, WordVectors};
pub use error::{Error, Result};
pub use partition::{Clustering, GoldLabels};
pub use scalar::Scalar;
pub use seeds::SeedPairSet;
pub use vector::Norm;

pub type EmbeddingTable64 = EmbeddingTable<f64>;
pub type EmbeddingTable32 = EmbeddingTable<f32>;
pub type WordVectors64 = WordVectors<f64>;
pub type WordVectors32 = WordVectors<f32>;
pub type KemParams64 = fact_view::KemParams<f64>;
pub type KemParams32 = fact_view::KemParams<f32>;
pub type EncoderParams64 = context_view::EncoderParams<f64>;
pub type EncoderParams32 = context_view::EncoderParams<f32>;
pub type FusionResult64 = clustering::FusionResult<f64>;
pub type FusionResult32 = clustering::FusionResult<f32>;
