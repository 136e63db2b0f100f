//! Information Bottleneck analysis of color naming systems and neural
//! iterated learning simulations.

pub mod agents;
pub mod color;
pub mod error;
pub mod ib;
pub mod matrix;
pub mod nil;
pub mod random_model;
pub mod report;
pub mod seeds;
pub mod stats;
pub mod wcs;

pub use color::{Chip, ChipGrid, MeaningModel};
pub use error::{Error, Result};
pub use ib::{IBCurve, IBPoint, NamingSystem};
pub use matrix::Matrix;
