//! Meta-evaluation harness for LLM-based pairwise instruction-following judges.
//!
//! The crate evaluates *LLM-evaluators* — combinations of a base LLM (a
//! [`backend`]) and an evaluation [`protocol`] — against human preference
//! annotations. Every protocol run compares two candidate outputs for an
//! instruction in both presentation orders, so position bias cancels out of
//! the reported accuracy.
//!
//! The main pieces:
//!
//! * [`data`] — datasets of pairwise preference instances and the canonical
//!   preference semantics shared by everything else.
//! * [`backend`] — pluggable generation layer: an HTTP chat-completions
//!   client, deterministic mocks for testing, a content-addressed response
//!   cache, and retry policies.
//! * [`template`] — prompt templates with named slots, stored as plain text
//!   files under `templates/`.
//! * [`parse`] — deterministic extraction of a verdict from raw judge text.
//! * [`protocol`] — the registry of 18 evaluation protocols and the stage
//!   engine that executes them.
//! * [`metrics`] — swap-averaged accuracy, Krippendorff's alpha
//!   self-agreement, rank correlation, improvement and significance
//!   statistics.
//! * [`runner`] — plans and executes the (backend x protocol x dataset x
//!   instance x direction) job matrix with caching and resumability.
//! * [`report`] — turns result collections into tables and plot data.
//!
//! # Quick start
//!
//! ```
//! use metajudge::backend::mock::MockJudge;
//! use metajudge::data::Dataset;
//! use metajudge::protocol::{registry, EngineConfig};
//!
//! let dataset = Dataset::synthetic("demo", 4, 7);
//! let judge = MockJudge::oracle(&dataset);
//! let base = registry().get("base").unwrap();
//! let cfg = EngineConfig::default();
//! for instance in dataset.instances() {
//!     let pair = base.evaluate_pair(&judge, instance, &cfg).unwrap();
//!     assert_eq!(pair.forward.verdict.canonical, instance.gold.as_canonical());
//!     assert_eq!(pair.reversed.verdict.canonical, instance.gold.as_canonical());
//! }
//! ```
//!
//! Runnable examples live in `examples/`; see the README for the list.

pub mod backend;
pub mod data;
pub mod metrics;
pub mod parse;
pub mod protocol;
pub mod report;
pub mod runner;
pub mod template;

pub use data::{CanonicalChoice, Dataset, Direction, Instance, LocalChoice, Verdict};
