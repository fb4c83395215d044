//! Spread-spectrum image watermarking keyed by binary decimal sequences
//! (d-sequences), with host-interference rejection.
//!
//! The math is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix the common `f64` instantiations.

pub mod analysis;
pub mod channel;
pub mod dseq;
mod error;
pub mod imaging;
pub mod pgmio;
pub mod scalar;
pub mod sscore;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use sscore::Bit;

pub type Chips = dseq::ChipSequence<f64>;
pub type Params = sscore::EmbedParams<f64>;
pub type Stats = sscore::ModelStats<f64>;
pub type Signal = sscore::SignalVector<f64>;
pub type Image = imaging::FloatImage<f64>;
pub type Settings = imaging::EmbedSettings<f64>;
pub type Detect = imaging::DetectSettings<f64>;

pub type Chips32 = dseq::ChipSequence<f32>;
pub type Params32 = sscore::EmbedParams<f32>;
pub type Stats32 = sscore::ModelStats<f32>;
pub type Signal32 = sscore::SignalVector<f32>;
pub type Image32 = imaging::FloatImage<f32>;
