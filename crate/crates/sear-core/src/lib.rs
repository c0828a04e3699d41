//! Core pipeline for a desk-scale social-engineering simulation study.
//!
//! The crate is organized around the three stages of the pipeline plus the
//! shared domain model and the survey analytics that evaluate it:
//!
//! - [`model`] — domain types, validation, and their canonical JSON shape.
//! - [`context`] — stage 1: band-energy speaker attribution, transcript
//!   segmentation, and social-context frame synthesis.
//! - [`rag`] — stage 2: the role database, vector store, role identification,
//!   and ranked social-profile generation.
//! - [`agent`] — stage 3: strategy selection by confidence score and the
//!   staged reasoning-interaction loop.
//! - [`backends`] — pluggable text-generation backends and simulated target
//!   personas.
//! - [`survey`] — questionnaire schema and the aggregate statistics
//!   (Likert counts and means, top-two-box fractions, trust shift).
//!
//! Everything here is deterministic: identical inputs produce bit-identical
//! outputs. IO, file formats, and the CLI live in the companion crate.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod agent;
pub mod backends;
pub mod context;
pub mod hash;
pub mod model;
pub mod rag;
pub mod survey;
pub mod text;
