//! Multimodal spatiotemporal forecasting of cellular traffic.
//!
//! The crate covers the whole pipeline:
//!
//! - [`sim`]: a multicell/multiuser traffic simulator with mobility, handover,
//!   event bursts and synthetic textual/image features;
//! - [`data`]: CSV ingestion, min-max scaling, calendar one-hots, closeness /
//!   period windowing, geographic adjacency and growing-window fold plans;
//! - [`model`]: the forecaster (gated attention + GCN/CNN spatial streams per
//!   ST-block, two branches, linear output head);
//! - [`meta`]: bi-level meta-training with conjugate-gradient hypergradients,
//!   plus target fine-tuning;
//! - [`conformal`]: inductive and cross conformal intervals and their metrics;
//! - [`experiment`]: config-driven pipelines, reports and the CLI surface.
//!
//! Everything runs in `f64` on a small reverse-mode tape ([`numerics`]) and is
//! bit-reproducible for a given seed.

pub mod conformal;
pub mod data;
pub mod error;
pub mod experiment;
pub mod meta;
pub mod model;
pub mod numerics;
pub mod sim;

pub use error::{Error, Result};
