//! Small f64 tensor library with reverse-mode autodiff.
//!
//! Everything runs on the CPU in double precision so that gradients can be
//! validated against central finite differences and runs are bit-reproducible
//! for a fixed seed. Graphs are rebuilt per step (define-by-run) and parameter
//! tensors live outside the graph in a [`params::ParamSet`].

pub mod gradcheck;
pub mod graph;
pub mod init;
pub mod optim;
pub mod params;
pub mod rng;

pub use graph::{Grads, Graph, TensorId};
pub use optim::Adam;
pub use params::{Param, ParamSet};
