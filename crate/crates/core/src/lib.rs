//! Weak-supervision text classification.
//!
//! A rule set compiled from a small line-oriented grammar assigns weak labels
//! to an unlabeled corpus. Documents are then featurized (mean word
//! embeddings, tf-idf, or LDA topic mixtures) and used to train a linear SVM,
//! a random forest, or a text CNN on the weak labels. The [`eval`] module
//! scores everything against held-out gold labels and runs the comparison,
//! featurizer and learning-curve experiments.

pub mod corpus;
pub mod embeddings;
pub mod error;
pub mod eval;
pub mod features;
pub mod gradcheck;
pub mod manifest;
pub mod models;
pub mod rng;
pub mod rules;
pub mod synth;

pub use corpus::{Document, TokenizedDocument};
pub use error::{Error, Result};
pub use rules::{ClassLabel, RuleSet, WeakLabel};
