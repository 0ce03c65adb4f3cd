//! Cooperative training over simulated fading channels.
//!
//! This crate holds every algorithmic piece of the simulator: the fading
//! uplink/downlink channel, sparsification and quantization primitives, the
//! digital (separate source-channel coding) and analog (over-the-air
//! computation) link pipelines, a small softmax classifier with exact
//! gradients, and the protocol driver that runs Independent Learning,
//! Federated Learning, Federated Distillation and Hybrid Federated
//! Distillation for a configurable number of global iterations.
//!
//! The crate is `no_std` and only needs `alloc`. All randomness is drawn from
//! explicit, seeded streams so that every run is reproducible bit for bit.
//! File formats, configuration files and the command line live in the
//! `fedsim` crate.

#![cfg_attr(not(feature = "std"), no_std)]
// `!(x >= 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod analog;
pub mod channel;
pub mod compression;
pub mod config;
pub mod data;
pub mod digital;
mod error;
pub mod learning;
pub(crate) mod math;
pub mod metrics;
pub mod orchestrator;
pub mod rng;

pub use error::{Error, Result};
pub use num_complex::Complex64;
