//! Log ingestion, sessions, filters, vocabulary, splits and examples.

pub mod examples;
pub mod log;
pub mod session;
pub mod split;
pub mod synthetic;
pub mod text;
pub mod vocab;
