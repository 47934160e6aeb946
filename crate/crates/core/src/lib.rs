//! Toolkit for aligning and comparing historical map series.
//!
//! The crate covers the non-neural half of a map-change pipeline:
//!
//! * [`raster`] loads georeferenced sheets and rectifies them onto one pixel plane.
//! * [`field`] holds dense displacement fields and their warp/compose algebra.
//! * [`synth`] generates self-supervision triplets with exact ground-truth fields.
//! * [`instances`] stitches tiled instance predictions and aggregates building blocks.
//! * [`metrics`] implements SSIM, trimmed Chamfer distance, mV, triplet L1,
//!   Hungarian assignment and average precision.
//! * [`change`] matches instances across epochs and profiles change per block.
//! * [`network`] derives a street graph from block maps and ranks intersections
//!   by betweenness centrality.
//! * [`pipeline`] wires everything into a staged, deterministic batch run.
//!
//! Data-parallel loops run on rayon when the `parallel` feature (default) is on
//! and fall back to plain iterators otherwise. Results never depend on the
//! thread count.

pub mod change;
pub mod error;
pub mod field;
pub mod fixture;
pub mod geojson;
pub mod instances;
pub mod metrics;
pub mod network;
pub mod par;
pub mod pipeline;
pub mod raster;
pub mod synth;

pub use error::{Error, Result};
