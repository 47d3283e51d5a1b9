pub mod bat;
pub mod encoder;
pub mod error;
pub mod frontend;
pub mod numerics;
pub mod optim;
pub mod params;
pub mod rng;
pub mod runtime;
pub mod transducer;
pub mod verify;

pub use error::{Error, Result};
pub use numerics::{DType, Graph, Scalar, Tensor, Var};
pub use runtime::{Model, ModelConfig};
