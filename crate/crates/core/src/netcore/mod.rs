//! Dense-network engine shared by the encoder, decoder and forward model.

pub mod checkpoint;
pub mod dropout;
pub mod network;
pub mod tensor;

pub use dropout::{sample_mask, sample_mask_rows, DropoutMask};
pub use network::{
    Activation, AdamState, Backprop, DenseLayer, ForwardCache, Gradients, LayerGradients, NetworkParameters,
};
pub use tensor::Tensor2;
