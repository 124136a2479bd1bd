//! Information-deficit sequence models for search sessions.
//!
//! Two tasks share one family of recurrent encoders: predicting which words
//! of the current query survive into the next one, and picking the next
//! query from a candidate list.

pub mod data;
pub mod encoders;
pub mod error;
pub mod math;
pub mod model;
pub mod pipeline;
pub mod retention;
pub mod run;
pub mod selection;
pub mod train;

pub use error::{Error, Result};
pub use model::{Ablation, ContextOrder, Model, ModelDims, Task};
