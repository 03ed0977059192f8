//! From-scratch dense networks: the 3D interpreter (heatmaps → parameter vector),
//! the bottleneck heatmap refiner, and their training loops.

mod dense;
mod normalizer;
mod train;
mod weights;

pub use dense::{Activation, DenseNet, ForwardCache, Gradients, Layer};
pub use normalizer::Normalizer;
pub use train::{
    finetune_through_projection, flatten_heatmaps, predict, projection_loss_gradient,
    train_interpreter, train_refiner,
    Interpreter, Refiner, TrainConfig, TrainReport,
};
pub use weights::{WeightsFile, REFINER_LAYOUT, WEIGHTS_MAGIC};

/// Backpropagates `loss_grad` (gradient of the loss w.r.t. the network output) for a
/// single input.
pub fn backward(net: &DenseNet, input: &[f64], loss_grad: &[f64]) -> crate::Result<Gradients> {
    net.backward(input, loss_grad)
}

/// Single-input forward pass.
pub fn forward(net: &DenseNet, input: &[f64]) -> crate::Result<Vec<f64>> {
    net.forward(input)
}
