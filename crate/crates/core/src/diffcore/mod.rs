//! Minimal differentiable substrate: dense arrays, a reverse-mode tape,
//! leaky-rectifier MLPs, an adaptive-moment optimizer, finite-difference
//! gradient checks and a parameter container format.

mod adam;
pub mod checkpoint;
mod gradcheck;
mod mlp;
mod tape;
mod tensor;

pub use adam::{Adam, AdamConfig, DEFAULT_LEARNING_RATE};
pub use gradcheck::{finite_diff_check, relative_error, GradCheckReport, SCALE_FLOOR};
pub use mlp::{BoundMlp, Mlp, MlpSpec, ParamArray, LEAKY_SLOPE};
pub use tape::{Gradients, Tape, Var, VjpFn};
pub use tensor::Tensor;
