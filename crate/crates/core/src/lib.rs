//! Reference-less evaluation of data-to-text generation by question
//! generation and question answering.
//!
//! A hypothesis is scored against its structured input (or a reference text)
//! by asking questions in both directions and comparing the answers. See
//! [`scoring::qa_score`] for the entry point.

pub mod backends;
pub mod cache;
pub mod corpus_builder;
pub mod data_model;
pub mod dataset_io;
pub mod error;
pub mod explain;
pub mod meta_eval;
pub mod pipeline;
pub mod scoring;
pub mod signature;

pub use error::{Error, Result};
