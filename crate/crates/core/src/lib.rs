//! Menger curvature of discrete planar measures, Cauchy transforms,
//! dyadic stopping-time decompositions and related experiments.

pub mod capacity;
pub mod corona;
pub mod curvature;
pub mod dyadic;
pub mod error;
pub mod generators;
pub mod geometry;
pub mod jones;
pub mod measure;
pub mod quadtree;
pub mod summation;
pub mod transport;

pub use error::{Error, Result};
