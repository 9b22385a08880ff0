//! Contextual unsupervised sequential selection.

pub mod environment;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod glm;
pub mod policies;
