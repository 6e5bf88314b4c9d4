//! Spin-weighted spherical harmonic transforms, SO(3)-equivariant spherical
//! convolutions, forward passes of spin-weighted spherical CNNs, and the
//! spherical vector-field MNIST dataset generator.
//!
//! Modules:
//! - [`harmonics`]: Wigner Δ-table, Wigner-d/D matrices, pointwise SWSH
//!   evaluation (the ground-truth oracle for everything else).
//! - [`transform`]: equiangular grid, torus extension, quadrature weights,
//!   forward/inverse spin-weighted spherical harmonic transform.
//! - [`spectral`]: coefficient rotation, spin-weighted convolution and
//!   cross-correlation, bandlimiting.
//! - [`layers`]: anchored spectral filters, nonlinearities, batch norm,
//!   pooling, and the classifier / U-Net forward passes.
//! - [`data`]: MNIST ingestion, spherical projection, vector fields, and
//!   dataset generation with manifest + blob serialization.
//! - [`check`]: the named invariant suites behind the `check` CLI command.
//!
//! Channel- and sample-level loops run on rayon when the `parallel` feature
//! (default) is enabled; disable default features for a fully sequential
//! build. Both paths produce bit-identical results.

pub mod blob;
pub mod check;
pub mod data;
pub mod error;
pub mod spectral;
pub mod fft;
pub mod harmonics;
pub mod layers;
pub mod par;
pub mod testing;
pub mod transform;

pub use error::{Error, Result};
