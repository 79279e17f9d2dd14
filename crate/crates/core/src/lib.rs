//! Multi-granular concept extraction for knowledge-graph completion.
//!
//! The pipeline runs in three stages over an entity's abstract text:
//!
//! 1. a pointer-style head scores every token as a possible concept start
//!    and end ([`pointer_head`]); spans are ranked by the sum of the two
//!    boundary probabilities and may overlap or nest ([`decoder`]);
//! 2. a random forest over five span features keeps or drops each
//!    candidate ([`selector`]);
//! 3. a rule-based pruner removes known error classes ([`pruner`]).
//!
//! [`hearst`] provides a pattern baseline, [`evaluator`] implements the
//! EC/NC accounting used to compare systems, and [`pipeline`] wires the
//! stages to the on-disk formats used by the `granule` CLI.

pub mod annotation;
pub mod corpus;
pub mod decoder;
pub mod error;
pub mod evaluator;
pub mod hearst;
pub mod io;
pub mod lexicon;
pub mod pipeline;
pub mod pointer_head;
pub mod pruner;
pub mod selector;
pub mod synthetic;

pub use error::{Error, Result};
