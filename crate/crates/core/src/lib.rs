//! Exact Euler Characteristic Transform for triangle meshes.

pub mod align;
pub mod cli;
pub mod ectp;
pub mod error;
pub mod linalg;
pub mod mesh;
pub mod metric;
pub mod real;
pub mod sphere;
pub mod transform;
