//! Design and simulation of two-stage adaptive enrichment trials with a
//! time-to-event endpoint and a longitudinal biomarker.

// Guards are written `!(x > 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod design;
pub mod error;
pub mod estimators;
pub mod simdata;
pub mod study;
pub mod trial;
pub mod numerics;

pub use error::{Error, Result};
