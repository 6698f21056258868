//! Heightmap-based planning engine and benchmark harness for packing
//! irregular 3D objects into a fixed box.

pub mod config;
pub mod episode;
pub mod error;
pub mod heightmap;
pub mod hrl;
pub mod mesh;
pub mod nn;
pub mod shapes;
pub mod object;
pub mod orientation;
pub mod packing;
pub mod planners;
pub mod rewards;
pub mod runner;
pub mod stability;
pub mod sweep;
pub mod units;
pub mod voxel;

pub use error::{PackError, Result};
