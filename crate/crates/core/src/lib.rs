//! Output squeezing of a driven optomechanical cavity with several
//! mechanical modes and homodyne feedback onto the mechanics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod model;
pub mod optimize;
pub mod oracle;
pub mod poly;
pub mod response;
pub mod spectra;
pub mod stability;
pub mod table;

pub use error::{Error, Result};
