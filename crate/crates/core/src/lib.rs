//! Turn an enterprise tool catalog into a scenario-specific function-calling
//! training corpus, evaluate model call outputs, and merge LoRA adapters.
//!
//! The crate is organized along the pipeline stages:
//!
//! - [`catalog`]: load/validate tool catalogs, description-length variants
//! - [`gateway`]: prompt templates, OpenAI-compatible chat client, mock backend
//! - [`synthesis`]: seed question generation, augmentation, call extraction
//! - [`dataset`]: sample validation, dataset assembly, splits, train config
//! - [`parser`]: function-call text to AST and back
//! - [`eval`]: cascading structure/tool/parameter judgment and stage metrics
//! - [`analysis`]: tool-selection confusion matrices and per-tool P/R/F1
//! - [`merge`]: LoRA adapter weight merging (linear, cat, dare, svd, ties)

pub mod analysis;
pub mod catalog;
pub mod dataset;
pub mod det;
pub mod eval;
pub mod gateway;
pub mod merge;
pub mod parser;
pub mod synthesis;

pub use catalog::{Catalog, ParamSpec, ParamType, ToolSpec};
pub use parser::{CallInstruction, CallSyntaxForm, Literal, ParseOutcome};
