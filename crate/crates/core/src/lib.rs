//! Exact rational geometry toolkit for unit-distance forcing in Q^8.
//!
//! - [`exactq`]: arbitrary-precision rational scalars and points.
//! - [`isometry`]: bisector reflections and pair-to-pair transport.
//! - [`arith`]: four-square decompositions and rational isoceles triangles.
//! - [`config`]: the canonical forcing configurations with exact validation.
//! - [`witness`]: the recursive witness-set pipeline with interning,
//!   verification, size estimation and graph export.
//! - [`dcalc`]: symbolic derivation calculus for constructible distances,
//!   with rigorous interval evaluation.
//! - [`falsify`]: numerical stress-minimization harness that tries (and is
//!   expected to fail) to embed witness graphs while distorting the target
//!   distance.

pub mod arith;
pub mod config;
pub mod dcalc;
pub mod exactq;
pub mod falsify;
pub mod isometry;
pub mod witness;
