//! Retrieval-augmented reaction condition recommendation.
//!
//! The crate turns a bank of reaction embeddings into a train-only precedent
//! index, converts retrieved neighbors into per-role condition probabilities
//! (catalyst / solvent / reagent), fuses them with learned-head probabilities
//! under a frozen convex rule, and evaluates the result with absent-class
//! accounting, top-k accuracy, paired bootstrap intervals, and leakage audits.
//!
//! Module map:
//!
//! - [`model`] — role vocabularies, reaction records, distributions, the
//!   absent-class (class 0) remapping protocol.
//! - [`smiles`] — minimal SMILES tokenizer, atom-map stripping, token shingles.
//! - [`fingerprint`] — differential reaction fingerprints over token shingles.
//! - [`container`] — named-section binary container used by index and weight
//!   files.
//! - [`ingest`] — reaction TSV parsing, embedding-bank binary format,
//!   head-probability files, deterministic train-derived splits.
//! - [`reprkernel`] — forward-only representation math: biased cross-attention,
//!   difference/sum decomposition, gated stream fusion.
//! - [`index`] — exact top-k inner-product search over unit-normalized keys.
//! - [`recommend`] — neighbor voting, hybrid fusion, matched baselines, and
//!   the end-to-end recommendation call.
//! - [`eval`] — top-k accuracy, absent/present audits, paired bootstrap,
//!   overlap-exclusion audits, validation-selected retrieval.
//! - [`synth`] — deterministic synthetic corpora used by the test and
//!   benchmark suites.

pub mod container;
pub mod error;
pub mod eval;
pub mod fingerprint;
pub mod hash;
pub mod index;
pub mod ingest;
pub mod linalg;
pub mod model;
pub mod parallel;
pub mod recommend;
pub mod reprkernel;
pub mod rng;
pub mod smiles;
pub mod synth;

pub use error::{DataError, Error, Result};
pub use model::{KeyKind, MultiHotTarget, ReactionRecord, RetrievalConfig, Role, RoleDistribution, RoleVocabulary, Split, Temperature};
