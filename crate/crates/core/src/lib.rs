//! Iterative environment grounding for visual policy transfer.
//!
//! Trains an image-based policy in a fully instrumented source environment
//! that has been "grounded" in a pixels-only target environment: a learned
//! visual transformation restyles source observations into the target
//! domain and a learned action transformation compensates for dynamics
//! differences. Grounding and policy training alternate so that both the
//! transformations and the policy improve from iteration to iteration.

pub mod action;
pub mod datasets;
pub mod env;
pub mod error;
pub mod grounded;
pub mod models;
pub mod nd;
pub mod orchestrator;
pub mod policy;
pub mod visual;

pub use error::{Error, Result};
