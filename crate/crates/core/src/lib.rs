//! Screenshot-to-HTML pipeline: grounding, layout planning, code generation,
//! placeholder image restoration and layout reward metrics.

pub mod backend;
pub mod geometry;
pub mod grounding;
pub mod raster;
pub mod canonical;
pub mod planning;
pub mod generation;
pub mod eval;
pub mod placeholder;
pub mod pipeline;
