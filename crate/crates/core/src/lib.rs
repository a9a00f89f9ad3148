//! Sine-activated neural fields trained by growing their
//! width, so that every width prefix is a working sub-network.
//!
//! This crate is `no_std` (it needs `alloc`) and holds all the numerics:
//! the network, its gradients, the training regimes, signal construction,
//! quality metrics and the chunked stream format. File and network IO live
//! in the `snf` crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod codec;
mod error;
pub mod loss;
pub mod metrics;
pub mod net;
pub mod optim;
pub mod signal;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use loss::{LossSpec, RegionMask};
pub use net::{ActivationConfig, GradientSet, GrowInit, StreamableNet, ValueMap};
pub use optim::{AdamState, TrainConfig};
pub use signal::SampledSignal;
pub use tensor::{Matrix, RngState};
