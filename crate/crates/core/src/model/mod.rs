//! Small encoder–decoder relevance model.
//!
//! Stand-in for a generative LLM: it maps a tokenised (query, title) pair
//! to an output sequence of optional reasoning tokens, one label token and
//! EOS. Small enough to train on a CPU in seconds, but the training,
//! decoding and preference machinery around it is the real thing.

mod checkpoint;
mod decode;
mod network;
mod tokenizer;
mod train;
mod vocab;

pub use checkpoint::{Checkpoint, Dims, Layout};
pub use decode::{is_well_formed, Beam, OutputSeq};
pub use network::SeqExample;
pub use tokenizer::{InputForm, Tokenizer, UNK};
pub(crate) use train::sgd;
pub use train::{label_examples, train, train_on_dataset, Hyper, TrainOutcome};
pub use vocab::{CotToken, OutToken};

pub const DEFAULT_EMBED: usize = 32;
pub const DEFAULT_HIDDEN: usize = 64;
/// Total output length including EOS.
pub const DEFAULT_MAX_LEN: usize = 6;
