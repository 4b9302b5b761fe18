pub mod camera;
pub mod bvh;
pub mod cdt;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod geom;
pub mod imageops;
pub mod layout;
pub mod mesh;
pub mod meshproc;
pub mod metrics;
pub mod plane2image;
pub mod pipeline;
pub mod planner;
pub mod post;
pub mod raster;
pub mod synth;
pub mod texturing;

pub use error::{Error, Result};
