//! Generalized robustness of quantum channels, instruments and two-slot
//! supermaps, with witness-derived input-output games.

pub mod error;
pub mod free_sets;
pub mod games;
pub mod linalg;
pub mod objects;
pub mod report;
pub mod solver;
pub mod supermaps;

pub use error::{Error, Result};
