//! Numerical laboratory for Ornstein-Uhlenbeck semigroups on finite-dimensional
//! state spaces: invariant Gaussian measures, the Mehler transition semigroup,
//! reduced 1D/2D generators, and L1 eigenfunctions over the open left half-plane.

pub mod builtins;
pub mod eigen;
pub mod error;
pub mod gauss;
pub mod lift;
pub mod model;
pub mod survey;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex<f64>;
/// Dense real matrix.
pub type Mat = nalgebra::DMatrix<f64>;
/// Dense real vector.
pub type Vec64 = nalgebra::DVector<f64>;
/// Dense complex vector.
pub type CVec = nalgebra::DVector<num_complex::Complex<f64>>;
