//! EventMix augmentation for neuromorphic event streams.
//!
//! Pipeline: parse event files ([`io`]), slice them into frame tensors
//! ([`voxelize`]), build random 3-D masks ([`mask`]), mix sample pairs and
//! their labels ([`augment`], [`label`]) and write batches ([`dataset`]).

pub mod augment;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod event;
pub mod io;
pub mod label;
pub mod mask;
pub mod rng;
pub mod visualize;
pub mod voxelize;

pub use error::{Error, Result};
pub use event::{Event, EventStream, FrameTensor, MixedSample, Polarity, Provenance, SoftLabel};
