//! Helmholtz problems on domains with a perforated wall and a thin resonator
//! strip, together with their limit systems as the perforation period shrinks.
//!
//! Bound checks are written as `!(x <= limit)` on purpose so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod effective;
pub mod error;
pub mod fem;
pub mod geometry;
pub mod harness;
pub mod io;
pub mod multiscale;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/geometry.md")]
    mod geometry {}
    #[doc = include_str!("../../../book/src/discretization.md")]
    mod discretization {}
    #[doc = include_str!("../../../book/src/effective.md")]
    mod effective {}
    #[doc = include_str!("../../../book/src/multiscale.md")]
    mod multiscale {}
    #[doc = include_str!("../../../book/src/studies.md")]
    mod studies {}
}
