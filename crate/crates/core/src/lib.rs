//! Word-emphasis selection for short texts.
//!
//! The crate trains and runs a compact sequence labeler that scores how
//! strongly each word of a short text deserves visual emphasis: character
//! CNN and word embeddings feed a BiLSTM, optionally joined by a
//! part-of-speech embedding and additive attention, topped by two
//! time-distributed sigmoid layers.
//!
//! Everything numeric runs on a small reverse-mode autodiff runtime
//! ([`graph`]) so the full model can be trained, gradient-checked, and
//! serialized without external ML frameworks.

pub mod augment;
pub mod bundle;
pub mod corpus;
pub mod error;
pub mod graph;
pub mod heatmap;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod postag;
pub mod rng;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use graph::{Activation, Graph, ParamId, ParamStore, Var};
pub use tensor::{Scalar, Tensor};
