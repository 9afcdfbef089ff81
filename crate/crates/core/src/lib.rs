//! Lattice vector quantization, entropy modelling, rANS coding and
//! decoder-side latent refinement for analytic sources.

// `!(x > 0.0)` is used on purpose so that NaN lands in the error branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coder;
pub mod companding;
pub mod entropy_model;
pub mod error;
pub mod latent_shift;
pub mod lattice;
pub mod quadrature;
pub mod rd;
pub mod synthetic_codec;

pub use error::{Error, Result};
