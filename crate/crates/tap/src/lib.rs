//! All-in-one adverse-weather image restoration with task-aware prompts.
//!
//! A single restoration backbone (a five-stage windowed-attention U-Net with
//! a soft physical reconstruction head) is pretrained across rain, snow,
//! haze and raindrop degradations, then adapted per task by tuning small
//! attention-level prompts while the backbone stays frozen. Prompts are
//! factorized into task-specific heads and a task-shared tail, and a
//! multi-positive contrastive term aligns head similarity with inter-task
//! relatedness.
//!
//! Everything runs on a self-contained `f64` tensor engine with
//! reverse-mode differentiation ([`tensor`]), on procedurally generated
//! paired datasets ([`synth`]), so the full pipeline is deterministic and
//! testable on a laptop.
//!
//! The `examples/` directory has one runnable program per capability; the
//! `tap` binary exposes the same pipeline as subcommands
//! (`synth | pretrain | tune | eval | analyze | params`).

// pub mod config;
pub mod error;
// pub mod eval;
// pub mod loss;
// pub mod model;
// pub mod prompt;
// pub mod run;
pub mod synth;
pub mod tensor;
// pub mod train;
pub mod util;

pub use error::{Result, TapError};
pub use tensor::Tensor;
