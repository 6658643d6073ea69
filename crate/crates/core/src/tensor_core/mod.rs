//! Dense tensors, reverse-mode differentiation, parameters and checkpoints.

pub mod checkpoint;
pub mod double;
pub mod gradcheck;
pub mod graph;
pub mod nn;
pub mod params;
pub mod tensor;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use double::DoubleF64;
pub use gradcheck::{grad_check, GradCheckReport, Objective};
pub use graph::{Graph, Var};
pub use nn::{ffn_forward, linear_forward};
pub use params::{ParamEntry, ParameterStore};
pub use tensor::{softmax, Axis, DType, Scalar, Tensor};
