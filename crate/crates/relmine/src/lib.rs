//! Latent relation mining over survey-response graphs.
//!
//! The pipeline builds one relational graph per respondent, pretrains an
//! encoder with a masked edge-type task while a structure learner proposes
//! cross-topic question links, enriches the graphs with the mined links,
//! and trains a bi-modal detector: a graph classifier fused with a small
//! language model that receives the graph summary as a soft prefix.

pub mod bimodal;
pub mod checkpoint;
pub mod codebook;
pub mod config;
pub mod detector;
pub mod embed;
pub mod error;
pub mod exec;
pub mod gradcheck;
pub mod graph;
pub mod ingest;
pub mod lm;
pub mod metrics;
pub mod optim;
pub mod pipeline;
pub mod pretext;
pub mod prompt;
pub mod rgcn;
pub mod rgsl;
pub mod rng;
pub mod synth;
pub mod tape;

pub use error::{Error, Result};
