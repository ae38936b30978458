//! Forward electromagnetic scattering for 2D RF imaging: special functions,
//! scene construction, a method-of-moments solver for perfectly conducting
//! scatterers and a reproducible dataset factory built on top of it.

pub mod datagen;
pub mod em;
pub mod error;
pub mod geometry;
pub mod specfun;
pub mod validate;

pub use error::{Error, Result};
