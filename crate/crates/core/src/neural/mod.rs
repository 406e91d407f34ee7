//! Dense networks with hand-derived backpropagation, Adam, and weight clipping.

mod adam;
mod network;

pub use adam::{Adam, AdamConfig};
pub use network::{Activation, DenseLayer, ForwardTrace, Gradients, LayerGradient, Mlp};
