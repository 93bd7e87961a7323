// Negated comparisons are how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod distributions;
pub mod error;
pub mod estimators;
pub mod mapio;
pub mod metrics;
pub mod pixel_select;
pub mod quadrature;
pub mod refine;
pub mod rng;
pub mod sampling;
pub mod sphere;
pub mod synth;

pub use error::{Error, Result};
pub use sphere::{Angle, UnitVector3, Vec3};

/// The guide's chapters, compiled so their code blocks run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/distributions.md")]
    mod distributions {}
    #[doc = include_str!("../../../book/src/sampling.md")]
    mod sampling {}
    #[doc = include_str!("../../../book/src/estimators.md")]
    mod estimators {}
    #[doc = include_str!("../../../book/src/uncertainty_metrics.md")]
    mod uncertainty_metrics {}
    #[doc = include_str!("../../../book/src/pixel_selection.md")]
    mod pixel_selection {}
    #[doc = include_str!("../../../book/src/refinement.md")]
    mod refinement {}
    #[doc = include_str!("../../../book/src/files_and_cli.md")]
    mod files_and_cli {}
    #[doc = include_str!("../../../README.md")]
    mod readme {}
}
