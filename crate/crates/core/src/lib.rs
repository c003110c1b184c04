//! Noise-informed CycleGAN speech enhancement.
//!
//! The crate covers the full loop: synthesizing a paired noisy corpus,
//! training cycle-consistent generators with frame-wise noise labels,
//! enhancing audio with a trained checkpoint, and scoring the result with
//! objective speech-quality metrics. Everything is CPU-only `f32`/`f64`
//! code with deterministic, seed-reproducible behavior end to end.

pub mod autodiff;
pub mod cli;
pub mod conditioning;
pub mod data;
pub mod dsp;
pub mod losses;
pub mod metrics;
pub mod models;
pub mod rng;
pub mod training;
