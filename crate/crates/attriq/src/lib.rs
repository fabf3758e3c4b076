//! Integrated Gradients attribution for small question-answering models,
//! the overstability test, and attribution-guided adversarial attacks.

pub mod autodiff;
pub mod datasets;
pub mod attribution;
pub mod models;
pub mod tableexec;
pub mod fixtures;
pub mod report;
pub mod robustness;
