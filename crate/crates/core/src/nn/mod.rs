//! A small deterministic neural-network engine: layer specs, parameters,
//! forward/backward passes, cross-entropy, Adam/SGD and FLOP counting.

mod flops;
mod layers;
mod model;
mod optim;
mod params;
mod spec;


pub use flops::{count_flops, model_flops, FlopCount};
pub use model::{argmax_rows, backward, cross_entropy, forward, infer, Mode, Trace};
pub use optim::{Optimizer, OptimizerKind};
pub use params::{LayerParams, Params};
pub use spec::{LayerSpec, ModelSpec};
