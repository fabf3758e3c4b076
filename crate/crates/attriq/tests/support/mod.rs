//! Helpers shared by integration test targets; not every target uses all
//! of them.
#![allow(dead_code)]

pub mod exec_oracle;
pub mod render_fixtures;
