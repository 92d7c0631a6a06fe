//! Multi-attention recurrent network for multimodal sequences.
//!
//! Each modality gets its own long-short term hybrid memory cell
//! ([`lsthm`]); after every step a multi-attention block ([`mab`]) looks at
//! the concatenated hidden state, extracts `K` attention-weighted views of
//! it and compresses them into a cross-view code that every cell reads on
//! the next step. All networks run on a small reverse-mode tape
//! ([`tape`]) so every gradient can be checked against finite differences
//! ([`gradcheck`]).

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod lsthm;
pub mod mab;
pub mod mlp;
pub mod model;
pub mod optim;
pub mod params;
pub mod tape;
pub mod tensor;

pub use data::{DatasetSplit, MultimodalSequence};
pub use error::{Error, Result};
pub use mab::AttentionTrace;
pub use mlp::{Activation, MlpSpec};
pub use model::{ForwardResult, Marn, MarnConfig, NetConfig, Task, Variant};
pub use params::{ParamId, ParamStore};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
