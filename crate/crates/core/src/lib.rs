//! Deep reinforcement learning from pixels with continuous actions.
//!
//! The crate bundles a small reverse-mode network library ([`netlib`]), an
//! attention-capable shared feature network ([`featnet`]), two software-rendered
//! control tasks ([`envs`]), replay and hindsight relabeling ([`buffers`]), the
//! SAC / PPO / IPG agents ([`algos`]) and the experiment driver ([`harness`]).

pub mod algos;
pub mod buffers;
pub mod envs;
pub mod error;
pub mod featnet;
pub mod harness;
pub mod image;
pub mod netlib;
mod rngstate;

pub use error::{Error, Result};
