//! Direct Assessment toolkit for machine-translation evaluation in
//! text-only and multimodal (speech) conditions.

pub mod assets;
pub mod campaign;
pub mod corpus;
pub mod hitgen;
pub mod qc;
pub mod ranking;
pub mod raster;
pub mod report;
pub mod seeds;
pub mod sim;
pub mod stats;
pub mod tts;
pub mod workdir;
