pub mod autodiff;
pub mod capsule;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod gradcheck;
pub mod io;
pub mod model;
pub mod optim;
pub mod params;
pub mod prediction;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod training;

pub use autodiff::{Gradients, Graph, Var};
pub use config::{Ablations, TrainConfig};
pub use error::{Error, Result};
pub use model::{build_model, Model};
pub use rng::Rng64;
pub use tensor::Tensor;
