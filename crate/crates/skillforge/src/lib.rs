//! Instruction-tuning data pipeline built around explicit skill catalogs.
//!
//! The crate covers the full loop: extract a catalog of named skills from a
//! teacher model (seed-dataset-agnostic or seed-dataset-dependent), sample
//! random k-tuples of skills, run a multi-turn generate/critique/refine
//! protocol to produce (instruction, response) pairs, optionally corrupt a
//! fraction of responses for quality ablations, serialize everything as
//! deterministic JSONL, and score model outputs with a pairwise judge plus a
//! length-controlled win-rate model.
//!
//! Every sampling decision is driven by named [`rng`] streams derived from a
//! single run seed, so runs are reproducible byte-for-byte regardless of
//! worker-pool size or retry timing.

pub mod catalog;
pub mod config;
pub mod dataset;
pub mod generator;
pub mod judge;
pub mod mixer;
mod pool;
pub mod provider;
pub mod quality;
pub mod rng;
pub mod template;
