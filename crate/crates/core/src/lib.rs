//! Core of a desk-scale framework for low-resource translation through a
//! pivot language.
//!
//! Everything here is pure computation over in-memory values: tensors and
//! reverse-mode autodiff, a small encoder-decoder Transformer with canonical
//! parameter names, grafting and freezing, the training objectives, synthetic
//! triangular corpora with BPE, beam-search decoding and BLEU. File formats,
//! configuration and orchestration live in the `forge` crate.
//!
//! The crate is `no_std` + `alloc` unless the `std` feature is enabled; `std`
//! only switches the math and matrix kernels to their platform-accelerated
//! implementations.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod error;
pub mod functional;
pub mod graph;
pub mod kernels;
pub mod scalar;
pub mod tensor;
pub mod vocab;
pub mod model;
pub mod decode;
pub mod surgery;
pub mod optim;
pub mod eval;
pub mod train;
pub mod corpus;

pub use error::{Error, Result};
pub use graph::{Graph, Var};
pub use scalar::Scalar;
pub use tensor::Tensor;
