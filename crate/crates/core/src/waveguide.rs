//! Guided TE modes of the symmetric three-layer slab.
//!
//! The slab is centred at `x = 0` in its own frame. Modes are normalised to
//! unit power flux, `∫ (β/k) ψ² dx = 1`, so the bracket self-overlap is 2.
//! Magnetic fields are scaled by the vacuum impedance (`h = Z₀·H`), which
//! turns Maxwell's curl equations into `∇×E = −ik h`, `∇×h = ikεE`.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::FieldComponents;

/// Relative tolerance used when comparing wavelengths of two modes.
const WAVELENGTH_MATCH: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlabGeometry {
    pub core_index: f64,
    pub background_index: f64,
    pub width: f64,
}

impl SlabGeometry {
    pub fn new(core_index: f64, background_index: f64, width: f64) -> Result<Self> {
        let geometry = SlabGeometry {
            core_index,
            background_index,
            width,
        };
        geometry.validate()?;
        Ok(geometry)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.background_index.is_finite() && self.background_index >= 1.0) {
            return Err(Error::validation("background_index", "must be finite and >= 1"));
        }
        if !(self.core_index.is_finite() && self.core_index > self.background_index) {
            return Err(Error::validation(
                "core_index",
                "must exceed the background index",
            ));
        }
        if !(self.width.is_finite() && self.width > 0.0) {
            return Err(Error::validation("width", "must be positive"));
        }
        Ok(())
    }

    /// Half-width normalised frequency `V = k·(w/2)·√(n_s² − n_b²)`.
    pub fn v_number(&self, wavelength: f64) -> f64 {
        let k = 2.0 * PI / wavelength;
        k * 0.5 * self.width * (self.core_index.powi(2) - self.background_index.powi(2)).sqrt()
    }

    /// Number of guided TE modes, `⌊2V/π⌋ + 1`.
    pub fn mode_count(&self, wavelength: f64) -> usize {
        (2.0 * self.v_number(wavelength) / PI).floor() as usize + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StraightMode {
    pub order: usize,
    pub wavelength: f64,
    pub propagation_constant: f64,
    pub effective_index: f64,
    /// Transverse wavenumber inside the core.
    pub core_wavenumber: f64,
    /// Decay constant in the cladding.
    pub decay_constant: f64,
    /// Peak amplitude `A` of `A·cos(k_x x − qπ/2)` in the core.
    pub amplitude: f64,
    pub half_width: f64,
    pub geometry: SlabGeometry,
}

/// All guided TE modes, ordered by descending effective index.
pub fn find_slab_modes(geometry: &SlabGeometry, wavelength: f64) -> Result<Vec<StraightMode>> {
    geometry.validate()?;
    if !(wavelength.is_finite() && wavelength > 0.0) {
        return Err(Error::validation("wavelength", "must be positive"));
    }
    let k = 2.0 * PI / wavelength;
    let d = 0.5 * geometry.width;
    let v = geometry.v_number(wavelength);
    let count = geometry.mode_count(wavelength);
    let mut modes = Vec::with_capacity(count);
    for order in 0..count {
        let u = solve_phase(order, v)?;
        let kx = u / d;
        let kappa = (v * v - u * u).max(0.0).sqrt() / d;
        let beta = ((geometry.core_index * k).powi(2) - kx * kx).sqrt();
        let sign = if order % 2 == 0 { 1.0 } else { -1.0 };
        let edge = (u - order as f64 * FRAC_PI_2).cos();
        let integral = d + sign * (2.0 * u).sin() / (2.0 * kx) + edge * edge / kappa;
        let amplitude = 1.0 / (beta / k * integral).sqrt();
        modes.push(StraightMode {
            order,
            wavelength,
            propagation_constant: beta,
            effective_index: beta / k,
            core_wavenumber: kx,
            decay_constant: kappa,
            amplitude,
            half_width: d,
            geometry: *geometry,
        });
    }
    Ok(modes)
}

/// Phase function `u − qπ/2 − atan(√(V² − u²)/u)`, increasing in `u`.
fn phase_function(order: usize, v: f64, u: f64) -> f64 {
    u - order as f64 * FRAC_PI_2 - ((v * v - u * u).max(0.0).sqrt()).atan2(u)
}

fn phase_derivative(v: f64, u: f64) -> f64 {
    1.0 + 1.0 / (v * v - u * u).max(1e-300).sqrt()
}

fn solve_phase(order: usize, v: f64) -> Result<f64> {
    let mut lo = order as f64 * FRAC_PI_2;
    let mut hi = ((order + 1) as f64 * FRAC_PI_2).min(v);
    if !(phase_function(order, v, lo) <= 0.0 && phase_function(order, v, hi) >= 0.0) {
        return Err(Error::NoConvergence {
            what: format!("slab TE{order} dispersion bracket"),
            trace: format!("V = {v}, bracket [{lo}, {hi}]"),
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if phase_function(order, v, mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 * hi.max(1.0) {
            break;
        }
    }
    let mut u = 0.5 * (lo + hi);
    for _ in 0..3 {
        let f = phase_function(order, v, u);
        let step = f / phase_derivative(v, u);
        let next = u - step;
        if next > lo && next < hi {
            u = next;
        }
    }
    Ok(u)
}

impl StraightMode {
    /// Residual of the TE dispersion relation at this mode.
    pub fn dispersion_residual(&self) -> f64 {
        let u = self.core_wavenumber * self.half_width;
        let v = self.geometry.v_number(self.wavelength);
        phase_function(self.order, v, u)
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    /// Transverse profile `ψ(x)` and `dψ/dx`, `x` measured from the slab centre.
    pub fn profile(&self, x: f64) -> (f64, f64) {
        let d = self.half_width;
        let shift = self.order as f64 * FRAC_PI_2;
        if x.abs() <= d {
            let arg = self.core_wavenumber * x - shift;
            (
                self.amplitude * arg.cos(),
                -self.amplitude * self.core_wavenumber * arg.sin(),
            )
        } else {
            let side = x.signum();
            let edge = self.amplitude * (self.core_wavenumber * side * d - shift).cos();
            let tail = edge * (-self.decay_constant * (x.abs() - d)).exp();
            (tail, -side * self.decay_constant * tail)
        }
    }

    /// `E_y`, `h_x`, `h_z` at `(x, z)`, including the factor `e^{−iβz}`.
    pub fn field(&self, x: f64, z: f64) -> FieldComponents {
        let (psi, dpsi) = self.profile(x);
        let k = self.wavenumber();
        let phase = Complex64::from_polar(1.0, -self.propagation_constant * z);
        let ey = phase * psi;
        FieldComponents {
            ey,
            hx: -self.propagation_constant / k * ey,
            hz: Complex64::new(0.0, 1.0 / k) * phase * dpsi,
        }
    }

    /// `∫ ψ_self ψ_other dx` in closed form.
    pub fn profile_overlap(&self, other: &StraightMode) -> f64 {
        let d = self.half_width;
        let (ka, kb) = (self.core_wavenumber, other.core_wavenumber);
        let (sa, sb) = (self.order as f64 * FRAC_PI_2, other.order as f64 * FRAC_PI_2);
        // cos(ka x − sa)·cos(kb x − sb) = ½[cos((ka−kb)x − (sa−sb)) + cos((ka+kb)x − (sa+sb))]
        let symmetric = |p: f64, alpha: f64| {
            if p.abs() < 1e-14 {
                2.0 * d * alpha.cos()
            } else {
                2.0 * alpha.cos() * (p * d).sin() / p
            }
        };
        let core = 0.5
            * self.amplitude
            * other.amplitude
            * (symmetric(ka - kb, sa - sb) + symmetric(ka + kb, sa + sb));
        let kappa = self.decay_constant + other.decay_constant;
        let right = self.profile(d).0 * other.profile(d).0 / kappa;
        let left = self.profile(-d).0 * other.profile(-d).0 / kappa;
        core + right + left
    }
}

/// Bracket `∫ (−E_i h_{x,j}* − E_j* h_{x,i}) dx` of two straight modes at `z = 0`.
pub fn straight_overlap(mode_i: &StraightMode, mode_j: &StraightMode) -> Result<Complex64> {
    if (mode_i.wavelength - mode_j.wavelength).abs() > WAVELENGTH_MATCH * mode_i.wavelength {
        return Err(Error::WavelengthMismatch(mode_i.wavelength, mode_j.wavelength));
    }
    let k = mode_i.wavenumber();
    let weight = (mode_i.propagation_constant + mode_j.propagation_constant) / k;
    Ok(Complex64::new(weight * mode_i.profile_overlap(mode_j), 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper_slab() -> SlabGeometry {
        SlabGeometry::new(1.5, 1.0, 0.4).unwrap()
    }

    #[test]
    fn single_mode_at_four_hundred_nanometres() {
        let modes = find_slab_modes(&paper_slab(), 1.05).unwrap();
        assert_eq!(modes.len(), 1);
        let m = &modes[0];
        assert!(m.effective_index > 1.0 && m.effective_index < 1.5);
        assert!(m.dispersion_residual().abs() < 1e-12);
    }

    #[test]
    fn wide_slab_count_follows_v_number() {
        let geometry = SlabGeometry::new(1.5, 1.0, 1.2).unwrap();
        let modes = find_slab_modes(&geometry, 1.05).unwrap();
        assert_eq!(modes.len(), 3);
        for pair in modes.windows(2) {
            assert!(pair[0].effective_index > pair[1].effective_index);
        }
    }

    #[test]
    fn degenerate_index_rejected() {
        assert!(SlabGeometry::new(1.0, 1.0, 0.4).is_err());
        assert!(SlabGeometry::new(1.5, 1.0, -0.4).is_err());
    }

    #[test]
    fn self_bracket_is_two_and_cross_vanishes() {
        let geometry = SlabGeometry::new(1.5, 1.0, 1.2).unwrap();
        let modes = find_slab_modes(&geometry, 1.05).unwrap();
        for a in &modes {
            for b in &modes {
                let o = straight_overlap(a, b).unwrap();
                if a.order == b.order {
                    assert!((o.re - 2.0).abs() < 1e-12, "{o}");
                } else {
                    assert!(o.norm() < 1e-12, "{o}");
                }
            }
        }
    }

    #[test]
    fn mismatched_wavelengths_rejected() {
        let a = find_slab_modes(&paper_slab(), 1.05).unwrap()[0];
        let b = find_slab_modes(&paper_slab(), 1.04).unwrap()[0];
        assert!(matches!(
            straight_overlap(&a, &b),
            Err(Error::WavelengthMismatch(..))
        ));
    }

    #[test]
    fn field_relations_and_periodicity() {
        let m = find_slab_modes(&paper_slab(), 1.05).unwrap()[0];
        let centre = m.field(0.0, 0.0);
        assert!(centre.ey.im == 0.0 && centre.ey.re > 0.0);
        let period = 2.0 * PI / m.propagation_constant;
        let a = m.field(0.13, 0.7);
        let b = m.field(0.13, 0.7 + period);
        assert!((a.ey - b.ey).norm() < 1e-12);
        // Two decay lengths beyond the edge.
        let edge = m.profile(m.half_width).0;
        let far = m.profile(m.half_width + 2.0 / m.decay_constant).0;
        assert!((far / edge - (-2.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn profile_is_continuous_at_interfaces() {
        let geometry = SlabGeometry::new(1.5, 1.0, 1.2).unwrap();
        for m in find_slab_modes(&geometry, 1.05).unwrap() {
            for side in [-1.0, 1.0] {
                let x = side * m.half_width;
                let inner = m.profile(x * (1.0 - 1e-15));
                let outer = m.profile(x * (1.0 + 1e-15));
                let scale = m.amplitude * m.core_wavenumber.max(1.0);
                assert!((inner.0 - outer.0).abs() < 1e-10 * scale);
                assert!((inner.1 - outer.1).abs() < 1e-10 * scale);
            }
        }
    }
}
