//! Dense arrays, seeded random streams, the gradient tape and AdamW.

mod matrix;
mod optim;
mod rng;
mod tape;

pub use matrix::DenseMatrix;
pub use optim::{AdamW, AdamWConfig, ParamSet};
pub use rng::{SeededRng, Stream};
pub use tape::{Gradients, Tape, Var};
