//! Contrastive pre-training of track encoders from playlist metadata.
//!
//! The pipeline mines anchor/positive track pairs from playlists (random
//! co-occurrence, top co-occurrence, or alignment with Word2Vec track
//! embeddings), trains an MLP encoder with the NT-Xent objective, and
//! evaluates the learned representation on multi-label classification and
//! triplet similarity. Artist co-occurrence and SimCLR-style feature mixing
//! are available as baselines.

pub mod cli;
pub mod contrastive;
pub mod cooccur;
pub mod corpus;
pub mod downstream;
pub mod embed;
pub mod error;
pub mod gradcheck;
pub mod nn;
pub mod pairgen;
pub mod seed;
pub mod synth;

pub use error::{Error, Result};
