//! Cross-modal retrieval with product-quantized binary codes.
//!
//! Two small student heads (image and text) are trained to reproduce a
//! teacher's cross-modal similarity structure through a soft product
//! quantizer whose codebooks are shared by both modalities. Galleries are
//! then stored as packed codes and searched with per-query lookup tables.

pub mod config;
pub mod csvio;
pub mod error;
pub mod eval;
pub mod formats;
pub mod index;
pub mod labels;
pub mod numerics;
pub mod quantizer;
pub mod student;
pub mod synth;
pub mod targets;

pub use error::{Error, Result};
