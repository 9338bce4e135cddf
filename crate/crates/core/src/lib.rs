#[macro_use]
mod macros;

pub mod autograd;
pub mod cli;
pub mod data;
pub mod evaluation;
pub mod experiment;
pub mod model;
pub mod training;
