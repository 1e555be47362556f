//! Frequency-domain coupled mode theory for 2D circular microresonator
//! add/drop filters.
//!
//! Conventions: time dependence `e^{+iωt}`, propagation `e^{−iβz}`, TE
//! polarisation with principal component `E_y`, magnetic fields scaled by
//! the vacuum impedance. Lengths and wavelengths are in μm.

use num_complex::Complex64;

pub mod bendmode;
pub mod config;
pub mod coupler;
pub mod error;
pub mod output;
pub mod quad;
pub mod resonator;
pub mod specfun;
pub mod waveguide;

pub use error::{Error, Result};

/// TE field components `E_y`, `h_x = Z₀H_x`, `h_z = Z₀H_z`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FieldComponents {
    pub ey: Complex64,
    pub hx: Complex64,
    pub hz: Complex64,
}
