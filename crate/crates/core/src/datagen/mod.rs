//! Synthetic multimodal training data.

pub mod dataset;
pub mod normalize;
pub mod simulator;

pub use dataset::{generate_dataset, Dataset, DatasetManifest, DensityProfile, Split, SplitFractions, Splits};
pub use normalize::{normalize_outputs, NormalizedOutputs, Standardizer};
pub use simulator::{MultimodalOutput, SimInput, Simulator, CORRELATED_PAIR, D_IN, D_S, POSITION_INPUT};
