//! Weight-sampled 1D convolutional networks.
//!
//! Each layer learns one condensed filter from which all of its filters are
//! sampled as overlapping windows, optionally shared across channel groups.
//! The crate covers sampling geometry, a direct and an integral-image
//! convolution, tied-gradient training, cost accounting and 8-bit weight
//! quantization. It needs only `alloc`.

#![no_std]

extern crate alloc;

pub mod arch;
pub mod conv;
pub mod cost;
pub mod error;
pub mod nn;
pub mod quant;
pub mod sampling;

pub use arch::{LayerKind, LayerSpec, NetworkSpec, ResolvedLayer};
pub use conv::{conv_fast, conv_naive, FeatureMap, OpCounter};
pub use error::{Error, Result};
pub use nn::{Clip, Mode, Network, TrainHyper};
pub use sampling::{compactness, sample_filters, CondensedFilter, FilterBank, Padding, SamplingSpec};
