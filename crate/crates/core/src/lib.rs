//! Compile structured comic-page annotations into an accessibility script.
//!
//! The pipeline classifies every text element (sound effect, caption,
//! dialogue), re-identifies characters by clustering image embeddings,
//! infers character names and per-panel descriptions through recorded
//! chat-model conversations, and emits a deterministic Markdown script that
//! text-to-speech tooling can consume. The [`eval`] module measures each
//! stage against ground truth.
//!
//! Numerical code (PCA, HDBSCAN, cosine similarity) is generic over
//! [`Scalar`]; the aliases below fix the precision used by the pipeline.

pub mod annotations;
pub mod clustering;
pub mod describe;
pub mod eval;
pub mod geometry;
pub mod imaging;
pub mod llm;
pub mod naming;
pub mod pipeline;
pub mod scalar;
pub mod script;
pub mod textrole;

mod parallel;

pub use annotations::{parse_book, BookAnnotation, PageAnnotation};
pub use scalar::Scalar;
pub use script::{Script, SpeakerId};
pub use textrole::{RoleThresholds, TextRole};

/// Precision used for dimensionality reduction and density clustering.
pub type Real = f64;

/// A reduced character embedding at pipeline precision.
pub type ReducedPoint = clustering::ReducedPoint<Real>;

/// A fitted PCA projection at pipeline precision.
pub type Pca = clustering::Pca<Real>;
