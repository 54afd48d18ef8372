pub mod corpus;
pub mod cot;
pub mod dpo;
pub mod error;
pub mod eval;
mod jsonl;
pub mod model;
pub mod pipeline;
pub mod rulejudge;
pub mod scalar;
pub mod schema;
pub mod selection;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use schema::{BinaryLabel, Dataset, Example, Label, Tier};

pub type Checkpoint = model::Checkpoint<f64>;
pub type Checkpoint32 = model::Checkpoint<f32>;
