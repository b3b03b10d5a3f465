//! Temporal-bias auditing for explainable Android malware classifiers.
//!
//! The crate builds temporally controlled variants of a labelled corpus,
//! trains five classifier families on them, explains every held-out
//! prediction, and measures how often features tied to a particular era
//! dominate those explanations.
//!
//! ```no_run
//! use tempaudit::corpus::{generate_synthetic, SynthSpec};
//! use tempaudit::harness::{run_experiment, ExperimentConfig, VariantRef};
//! use tempaudit::learners::ModelKind;
//! use tempaudit::variants::BuiltinVariant;
//!
//! let corpus = generate_synthetic(&SynthSpec::preset("default", 7).unwrap()).unwrap();
//! let cfg = ExperimentConfig {
//!     variants: vec![VariantRef::Builtin(BuiltinVariant::V4)],
//!     models: vec![ModelKind::Svm],
//!     ..Default::default()
//! };
//! for run in run_experiment(&cfg, &corpus).unwrap() {
//!     println!("{}", run.summary_line());
//! }
//! ```

pub mod audit;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod explainers;
pub mod harness;
pub mod learners;
pub mod seed;
pub mod variants;

pub use error::{Error, Result};
