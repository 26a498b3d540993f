#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod eval;
pub mod fuse;
pub mod gaussian;
pub mod geometry;
pub mod image;
pub mod io;
pub mod loss;
pub mod net;
pub mod pipeline;
pub mod render;
pub mod synth;

pub use error::{Error, Result};
pub use gaussian::{GaussianPrimitive, GaussianScene};
pub use geometry::{CameraPose, Intrinsics, Quat};
