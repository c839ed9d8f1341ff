//! Interface-operator toolkit.
//!
//! Solvers, encoders, and a Fourier neural operator for second-order
//! elliptic interface problems posed on varying domains: fields are
//! zero-extended to a fixed canvas cube, geometry enters the network as
//! characteristic or signed-distance channels, and a tailored finite point
//! method (TFPM) provides both reference solutions and a structured
//! reconstruction head that carries sub-cell detail on coarse grids.

pub mod analysis;
pub mod cli;
pub mod data;
pub mod encode;
pub mod error;
pub mod fdm;
pub mod fno;
pub mod geometry;
pub mod grid;
pub mod linalg;
pub mod problem;
pub mod tfpm;

pub use error::{Error, Result};
pub use grid::{ChannelTensor, GridSpec, Point};
