//! Core building blocks for a multilingual retrieval-augmented generation
//! harness. Everything in this crate is pure computation over in-memory data:
//! no IO, no clocks, no threads, so results are reproducible byte-for-byte.
//!
//! The crate is `no_std` + `alloc` so the same chunking, scoring, and prompt
//! logic can run inside constrained embedded targets or server-side tooling
//! unchanged.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod chunk;
pub mod lang;
pub mod langid;
pub mod metrics;
pub mod normalize;
pub mod prompt;
pub mod topk;
