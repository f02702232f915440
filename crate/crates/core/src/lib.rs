//! Multi-view hand mesh priors and multi-modal fusion networks.
//!
//! The crate covers the full desk-scale pipeline: six-view mesh transforms
//! and deterministic rasterization ([`geometry`], [`render`]), projected-area
//! view-pair selection ([`viewselect`]), a small reverse-mode autodiff
//! substrate ([`tensor`]) with the encoder and fusion networks built on it
//! ([`encoders`], [`fusion`]), diffusion losses and a toy training loop
//! ([`diffusion`]), and evaluation statistics ([`metrics`]).

pub mod cli;
pub mod dataset;
pub mod diffusion;
pub mod encoders;
pub mod error;
pub mod fusion;
pub mod geometry;
pub mod metrics;
pub mod render;
pub mod seed;
pub mod tensor;
pub mod viewselect;

pub use error::{Error, ErrorKind, Result};
