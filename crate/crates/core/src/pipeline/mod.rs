//! Synthetic data, image conversion and file formats.

pub mod color;
pub mod io;
pub mod segment;
pub mod synthetic;
