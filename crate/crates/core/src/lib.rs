//! Synthetic visual-logic puzzle generation.
//!
//! The crate is organised along the pipeline that produces a dataset:
//!
//! * [`rule`]: rule genomes, the eight-class taxonomy and format validation.
//! * [`dsl`]: the executable rule-program language interpreted by the renderer.
//! * [`evolution`]: island-model mutation, crossover and migration.
//! * [`dedup`]: embedding-space near-duplicate removal and rubric filtering.
//! * [`render`]: deterministic rasterisation of image groups in three styles.
//! * [`qc`]: perceptual hashing, blank detection and gradient energy checks.
//! * [`assembly`]: puzzle construction strategies and sheet composition.
//! * [`dataset`]: attribute records, difficulty bins, sampling and manifests.
//! * [`providers`]: request/response contracts for AI-backed services plus stubs.
//! * [`pipeline`]: configuration, stage runners and checkpoints used by the CLI.

pub mod assembly;
pub mod dataset;
pub mod dedup;
pub mod dsl;
pub mod evolution;
pub mod image_buf;
pub mod par;
pub mod pipeline;
pub mod providers;
pub mod qc;
pub mod render;
pub mod rule;
pub mod seed;

pub use image_buf::ImageBuf;
pub use rule::{CanonicalClass, Rule, RuleClass, ScoreTriple};
