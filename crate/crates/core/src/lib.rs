// `!(x > 0.0)` style checks are deliberate: they reject NaN along with the range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod autoencoder;
pub mod calibration;
pub mod datagen;
pub mod error;
pub mod experiments;
pub mod forward;
pub mod io;
pub mod netcore;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
