#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod corpus;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod model;
pub mod snapshot;
pub mod synthetic;
pub mod training;
pub mod transport;
pub mod verify;

pub use error::{Error, Result};
