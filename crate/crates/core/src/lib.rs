//! Fair synthetic tabular data from an autoregressive chain of CART trees.
//!
//! Typical use: load a [`Table`], fit a [`GeneratorModel`] with
//! [`fit_generator`], build a [`ResamplingPlan`] for the target tree with
//! [`build_plan`], draw rows with [`sample_synthetic`], and score them with
//! [`full_report`].

pub mod argen;
pub mod cart;
pub mod downstream;
mod error;
pub mod fairlift;
pub mod metrics;
pub mod rng;
pub mod tabular;

pub use argen::{fit_generator, sample_synthetic, GeneratorConfig, GeneratorModel, OrderingStrategy};
pub use cart::{CartTree, TreeParams};
pub use downstream::{fit_forest, Forest, ForestParams};
pub use error::{Error, Result};
pub use fairlift::{build_plan, expected_disc, ResamplingPlan};
pub use metrics::{full_report, EvalParams, EvalReport};
pub use tabular::{load_csv, write_csv, Column, ColumnKind, ColumnSpec, LoadOptions, Schema, Table};
