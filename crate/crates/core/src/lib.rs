//! Numerical laboratory for the fractional CR Yamabe problem: Heisenberg
//! group geometry, the Cayley transform to the CR sphere, spectral
//! intertwining operators, bubbles, bubbling sequences, Riesz kernels and a
//! symmetric critical-point search.

pub mod bubbling;
pub mod cayley;
pub mod commutator;
pub mod concentration;
pub mod energy;
pub mod error;
pub mod flow;
pub mod heisenberg;
pub mod quadrature;
pub mod riesz;
pub mod special;
pub mod spectral;
pub mod sphere;
pub mod symmetry;
pub mod verify;
pub mod zonal;

pub use error::{Error, Result};

/// Double-precision point of H^N.
pub type Point = heisenberg::HeisPoint<f64>;
/// Double-precision point of S^{2N+1}.
pub type SPoint = cayley::SpherePoint<f64>;
/// Double-precision conformal chart.
pub type Chart = cayley::ConformalChart<f64>;
