//! Edge-side gateway for assistive visual question answering.
//!
//! Frames captured by blind and low-vision users are checked for capture
//! defects before any model is asked about them. Defective frames get a
//! concrete, sight-free reshoot directive; good frames are forwarded to a
//! pluggable multimodal answerer. The crate also carries the instruction
//! dataset tooling, ROUGE/BERTScore evaluation and a synthetic capture
//! simulator used to test that directives actually fix captures.

pub mod backend;
pub mod config;
pub mod dataset;
pub mod directive;
pub mod eval;
pub mod image;
pub mod pipeline;
pub mod quality;
pub mod sim;

pub use image::{ImageBuffer, ImageError};
pub use quality::{assess, BoundingBox, Category, FailureMode, QualityConfig, QualityReport};
