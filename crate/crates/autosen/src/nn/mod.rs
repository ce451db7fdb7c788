//! Neural network engine: layers, losses, optimizer, gradient checking, and
//! checkpoint serialization. All math is f64, single-threaded, with fixed
//! accumulation order, so a given seed reproduces runs bit for bit.

mod adam;
mod checkpoint;
mod conv;
mod grad_check;
mod layer;
mod loss;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{load_stacks, save_stacks};
pub use conv::{Conv2d, ConvTranspose2d};
pub use grad_check::{check_gradients, check_gradients_against, GradCheckConfig, GradCheckReport};
pub use layer::{accumulate_grads, scale_grads, zero_grads_like, Dense, Layer, LayerGrads, LayerStack, Tape};
pub use loss::{cross_entropy_loss, mse_loss, softmax};
