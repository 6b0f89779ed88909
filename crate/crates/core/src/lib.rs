//! Context-aware, retrieval-augmented CGM forecasting.
//!
//! The pipeline runs in files: CSV cohorts ([`data`]) become windows, each
//! window gets a text summary ([`context`]), the multimodal encoder
//! ([`model`]) is pretrained and frozen, its fused embeddings fill a cosine
//! index ([`retrieval`]), and a retrieval adapter is fine-tuned on top.
//! [`train`] orchestrates the stages and evaluation.

pub mod context;
pub mod data;
pub mod dataset;
mod error;
pub mod model;
pub mod retrieval;
pub mod registry;
pub mod train;

pub use error::{CoreError, ErrorClass, Result};
