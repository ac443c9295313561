//! Core algorithms for step-aware group-relative policy optimization (Step-GRPO)
//! over a tabular softmax policy.
//!
//! The crate is `no_std` (with `alloc`) and holds everything that does not touch
//! the filesystem or a terminal:
//!
//! - [`toylang`]: a tiny token alphabet and a synthetic arithmetic-chain task
//!   generator, so the whole pipeline runs at desk scale.
//! - [`policy`]: the generative-policy contract, a differentiable last-token +
//!   position-bucket softmax policy, and scripted test policies.
//! - [`rollout`]: dynamic truncated rollout: pause at trigger tokens, induce a
//!   tentative answer, exit early once the answer is confident enough.
//! - [`stepseg`]: semantic step counting/segmentation and semantic density.
//! - [`reward`]: the step-aware relative reward with its correct-only group
//!   baseline and the ablation switches.
//! - [`grpo`]: group-standardized advantages, the clipped importance-weighted
//!   objective with an exact KL penalty, and its analytic gradient.
//!
//! IO, file formats, the training loop, and the CLI live in the companion
//! `stepgrpo` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod grpo;
pub mod policy;
pub mod reward;
pub mod rollout;
pub mod seeds;
pub mod stepseg;
pub mod toylang;

pub use policy::{Policy, PolicyParams, PolicySnapshot};
pub use rollout::{Completion, RolloutConfig, TerminalReason};
pub use toylang::{Task, TokenId, Vocab};
