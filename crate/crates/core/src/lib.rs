//! Cross-modal retrieve-and-rerank engine.
//!
//! This crate holds the algorithmic half of the project: a planted-alignment
//! corpus generator, a small shared-trunk encoder with bi-encoder and
//! cross-encoder heads, triplet/BCE training with in-batch hard negatives and
//! AdamW, an exact brute-force cosine index, the three retrieval strategies
//! (bi-encoder, cross-encoder, cooperative retrieve-and-rerank with score
//! fusion), and a Recall@M / mean-Recall evaluation harness.
//!
//! Everything here is pure computation over `alloc` collections; the crate is
//! `no_std`-compatible. File formats, the CLI, and wall-clock benchmarking
//! live in the companion `cmrr-cli` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod corpus;
pub mod error;
pub mod eval;
pub mod index;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod train;
pub mod vecmath;

pub use error::Error;

/// Result alias used across the crate.
pub type Result<T> = core::result::Result<T, Error>;
