//! Factor screening with double-selection LASSO.

pub mod alpha;
pub mod cli;
pub mod grid;
pub mod io;
pub mod panel;
pub mod pipeline;
pub mod portfolio;
pub mod report;
pub mod reglab;
pub mod rng;
pub mod synth;
