//! Learned iterative mesh generation.
//!
//! A message passing network predicts a per-element sizing field on an
//! intermediate mesh; a sizing-driven Delaunay mesher turns that field into the
//! next mesh. Training imitates expert meshes through projected sizing labels
//! and a depth-stratified replay buffer.

pub mod buffer;
pub mod dataset;
pub mod error;
pub mod fem;
pub mod geometry;
pub mod graph;
pub mod mesh;
pub mod mesher;
pub mod metrics;
pub mod mpn;
pub mod projection;
pub mod rng;
pub mod trainer;

pub use error::{AmberError, Result};
pub use geometry::{GmmLoad, Point2, Polygon2};
pub use mesh::{ElementField, TriMesh};
