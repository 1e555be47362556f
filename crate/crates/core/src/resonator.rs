//! The closed resonator: two couplers joined by cavity segments.
//!
//! Global frame: cavity centre at the origin. Coupler I sits at `+x` with
//! its straight waveguide carrying the input towards `+z`; its local frame is
//! the global one. Coupler II sits at `−x`; its local frame is the global
//! one rotated by π, so its straight waveguide carries light towards `−z`.
//! Cavity modes circulate towards increasing `θ = atan2(z, x)`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::bendmode::{find_bend_modes_by_order, find_bend_modes_with_extent, BendGeometry, BendMode};
use crate::coupler::{straight_modes, CouplerGeometry, CouplerNumerics, ScatteringMatrix, SolvedCoupler};
use crate::error::{Error, Result};
use crate::waveguide::{SlabGeometry, StraightMode};

/// Loop equations must hold to this relative accuracy.
pub const LOOP_RESIDUAL_LIMIT: f64 = 1e-12;
/// `I − G` with a smallest singular value below this (relative) is singular.
pub const SINGULAR_LOOP_RATIO: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ResonatorConfig {
    pub bend_geometry: BendGeometry,
    pub slab_geometry: SlabGeometry,
    pub gap1: f64,
    pub gap2: f64,
    pub coupler_numerics: CouplerNumerics,
    pub n_bend_modes: usize,
    pub n_straight_modes: usize,
    /// Explicit radial orders of the cavity modes; `None` means `0..N_b`.
    pub bend_orders: Option<Vec<usize>>,
}

impl ResonatorConfig {
    pub fn validate(&self) -> Result<()> {
        self.bend_geometry.validate()?;
        self.slab_geometry.validate()?;
        if !(self.gap1.is_finite() && self.gap1 > 0.0) {
            return Err(Error::validation("g1", "must be positive"));
        }
        if !(self.gap2.is_finite() && self.gap2 > 0.0) {
            return Err(Error::validation("g2", "must be positive"));
        }
        if self.n_bend_modes == 0 {
            return Err(Error::validation("n_bend_modes", "must be at least 1"));
        }
        if self.n_straight_modes == 0 {
            return Err(Error::validation("n_straight_modes", "must be at least 1"));
        }
        if let Some(orders) = &self.bend_orders {
            if orders.len() != self.n_bend_modes {
                return Err(Error::validation("bend_orders", "must list exactly n_bend_modes orders"));
            }
            let mut sorted = orders.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != orders.len() {
                return Err(Error::validation("bend_orders", "orders must be distinct"));
            }
        }
        self.couplers()?;
        segment_lengths(self)?;
        Ok(())
    }

    pub fn couplers(&self) -> Result<(CouplerGeometry, CouplerGeometry)> {
        let make = |gap: f64| CouplerGeometry::new(&self.bend_geometry, &self.slab_geometry, gap, &self.coupler_numerics);
        Ok((make(self.gap1)?, make(self.gap2)?))
    }
}

/// Cavity arcs outside the couplers, `(L1, L2)`, measured on the rim.
pub fn segment_lengths(config: &ResonatorConfig) -> Result<(f64, f64)> {
    let (c1, c2) = config.couplers()?;
    let (i1, o1) = c1.port_angles();
    let (i2, o2) = c2.port_angles();
    let r = config.bend_geometry.radius;
    let l1 = r * (PI + i2 - o1);
    let l2 = r * (PI + i1 - o2);
    if l1 < 0.0 || l2 < 0.0 {
        return Err(Error::Window("coupler windows overlap on the cavity rim".into()));
    }
    Ok((l1.max(0.0), l2.max(0.0)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopSolution {
    pub wavelength: f64,
    pub input_amplitudes: DVector<Complex64>,
    pub add_amplitudes: DVector<Complex64>,
    pub through_amplitudes: DVector<Complex64>,
    pub drop_amplitudes: DVector<Complex64>,
    pub a: DVector<Complex64>,
    pub b: DVector<Complex64>,
    pub c: DVector<Complex64>,
    pub d: DVector<Complex64>,
    /// Largest residual of the port and segment relations, relative to the
    /// largest amplitude.
    pub residual: f64,
}

fn propagator(modes: &[BendMode], length: f64) -> Result<DMatrix<Complex64>> {
    let phases: Vec<Complex64> = modes
        .iter()
        .map(|m| crate::bendmode::segment_phase(m, length))
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_diagonal(&DVector::from_vec(phases)))
}

/// Solves the port relations of both couplers together with the cavity
/// segment propagation for inputs `A` (through waveguide) and `C` (add).
pub fn solve_loop(
    s1: &ScatteringMatrix,
    s2: &ScatteringMatrix,
    bend_modes: &[BendMode],
    l1: f64,
    l2: f64,
    input: &DVector<Complex64>,
    add: &DVector<Complex64>,
) -> Result<LoopSolution> {
    let nb = bend_modes.len();
    let ns = input.len();
    if s1.n_bend != nb || s2.n_bend != nb || s1.n_straight != ns || s2.n_straight != ns || add.len() != ns {
        return Err(Error::validation("solve_loop", "inconsistent port dimensions"));
    }
    if (s1.wavelength - s2.wavelength).abs() > 1e-12 * s1.wavelength {
        return Err(Error::WavelengthMismatch(s1.wavelength, s2.wavelength));
    }
    for m in bend_modes {
        if (m.wavelength - s1.wavelength).abs() > 1e-12 * s1.wavelength {
            return Err(Error::WavelengthMismatch(s1.wavelength, m.wavelength));
        }
    }
    let p1 = propagator(bend_modes, l1)?;
    let p2 = propagator(bend_modes, l2)?;
    let (bb1, bs1, sb1, ss1) = (s1.bend_bend(), s1.bend_straight(), s1.straight_bend(), s1.straight_straight());
    let (bb2, bs2, sb2, ss2) = (s2.bend_bend(), s2.bend_straight(), s2.straight_bend(), s2.straight_straight());

    let gain = &p2 * &bb2 * &p1 * &bb1;
    let rhs = &p2 * (&bb2 * &p1 * &bs1 * input + &bs2 * add);
    let system = DMatrix::<Complex64>::identity(nb, nb) - gain;
    if system.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(Error::SingularLoop(s1.wavelength));
    }
    let sv = system.clone().svd(false, false).singular_values;
    if sv.min() <= SINGULAR_LOOP_RATIO * sv.max().max(1.0) {
        return Err(Error::SingularLoop(s1.wavelength));
    }
    let a = system.lu().solve(&rhs).ok_or(Error::SingularLoop(s1.wavelength))?;
    if a.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(Error::SingularLoop(s1.wavelength));
    }
    let b = &bb1 * &a + &bs1 * input;
    let through = &sb1 * &a + &ss1 * input;
    let c = &p1 * &b;
    let d = &bb2 * &c + &bs2 * add;
    let drop = &sb2 * &c + &ss2 * add;

    let scale = [input, add, &a, &b, &c, &d, &through, &drop]
        .iter()
        .flat_map(|v| v.iter().map(|x| x.norm()))
        .fold(0.0f64, f64::max);
    let residual = if scale == 0.0 {
        0.0
    } else {
        let closure = &a - &p2 * &d;
        closure.iter().map(|x| x.norm()).fold(0.0, f64::max) / scale
    };
    if residual > LOOP_RESIDUAL_LIMIT {
        return Err(Error::NoConvergence {
            what: "cavity loop solve".into(),
            trace: format!("relative residual {residual:.3e} at λ = {} μm", s1.wavelength),
        });
    }
    Ok(LoopSolution {
        wavelength: s1.wavelength,
        input_amplitudes: input.clone(),
        add_amplitudes: add.clone(),
        through_amplitudes: through,
        drop_amplitudes: drop,
        a,
        b,
        c,
        d,
        residual,
    })
}

// ==================================================================
// Device at one wavelength
// ==================================================================

/// Modes and solved couplers of the whole device at one wavelength.
#[derive(Debug, Clone)]
pub struct SolvedDevice {
    pub config: ResonatorConfig,
    pub wavelength: f64,
    pub bend_modes: Vec<BendMode>,
    pub straight_modes: Vec<StraightMode>,
    pub coupler1: Arc<SolvedCoupler>,
    pub coupler2: Arc<SolvedCoupler>,
    pub l1: f64,
    pub l2: f64,
}

impl SolvedDevice {
    pub fn solve(config: &ResonatorConfig, wavelength: f64) -> Result<Self> {
        Self::solve_with_extent(config, wavelength, 0.0)
    }

    /// As [`SolvedDevice::solve`], with bend tables reaching at least `radius`.
    pub fn solve_with_extent(config: &ResonatorConfig, wavelength: f64, radius: f64) -> Result<Self> {
        let inner = || -> Result<Self> {
            if !(wavelength.is_finite() && wavelength > 0.0) {
                return Err(Error::validation("wavelength", "must be positive"));
            }
            config.validate()?;
            let (g1, g2) = config.couplers()?;
            let extent = g1.required_table_radius().max(g2.required_table_radius()).max(radius);
            let bend_modes = match &config.bend_orders {
                Some(orders) => find_bend_modes_by_order(&config.bend_geometry, wavelength, orders, extent)?,
                None => find_bend_modes_with_extent(&config.bend_geometry, wavelength, config.n_bend_modes, extent)?,
            };
            let straight = straight_modes(&config.slab_geometry, wavelength, config.n_straight_modes)?;
            let coupler1 = Arc::new(SolvedCoupler::solve(&bend_modes, &straight, &g1)?);
            // Identical couplers share one solve.
            let coupler2 = if g2 == g1 {
                Arc::clone(&coupler1)
            } else {
                Arc::new(SolvedCoupler::solve(&bend_modes, &straight, &g2)?)
            };
            let (l1, l2) = segment_lengths(config)?;
            Ok(SolvedDevice {
                config: config.clone(),
                wavelength,
                bend_modes,
                straight_modes: straight,
                coupler1,
                coupler2,
                l1,
                l2,
            })
        };
        inner().map_err(|e| e.at_wavelength(wavelength))
    }

    pub fn solve_loop(&self, input: &DVector<Complex64>, add: &DVector<Complex64>) -> Result<LoopSolution> {
        solve_loop(
            &self.coupler1.scattering,
            &self.coupler2.scattering,
            &self.bend_modes,
            self.l1,
            self.l2,
            input,
            add,
        )
        .map_err(|e| e.at_wavelength(self.wavelength))
    }

    /// Unit power in the fundamental straight mode at the input, add port dark.
    pub fn unit_input(&self) -> (DVector<Complex64>, DVector<Complex64>) {
        let ns = self.straight_modes.len();
        let mut input = DVector::zeros(ns);
        input[0] = Complex64::new(1.0, 0.0);
        (input, DVector::zeros(ns))
    }
}

// ==================================================================
// Spectra
// ==================================================================

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumPoint {
    pub wavelength: f64,
    pub transmitted_power: Vec<f64>,
    pub dropped_power: Vec<f64>,
    /// `|b^p|²` per cavity mode.
    pub cavity_mode_powers: Vec<f64>,
    /// Radial order of each cavity mode column.
    pub cavity_mode_orders: Vec<usize>,
}

impl SpectrumPoint {
    pub fn from_solution(solution: &LoopSolution, orders: Vec<usize>) -> Self {
        SpectrumPoint {
            wavelength: solution.wavelength,
            transmitted_power: solution.through_amplitudes.iter().map(|v| v.norm_sqr()).collect(),
            dropped_power: solution.drop_amplitudes.iter().map(|v| v.norm_sqr()).collect(),
            cavity_mode_powers: solution.b.iter().map(|v| v.norm_sqr()).collect(),
            cavity_mode_orders: orders,
        }
    }

    pub fn total_dropped(&self) -> f64 {
        self.dropped_power.iter().sum()
    }

    pub fn total_transmitted(&self) -> f64 {
        self.transmitted_power.iter().sum()
    }
}

/// Wavelengths `λ_start + i·step` up to and including `λ_stop`.
pub fn wavelength_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(start.is_finite() && start > 0.0) {
        return Err(Error::validation("lambda_start", "must be positive"));
    }
    if !(stop.is_finite() && stop >= start) {
        return Err(Error::validation("lambda_stop", "must not be below lambda_start"));
    }
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::validation("lambda_step", "must be positive"));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| start + step * i as f64).collect())
}

/// One spectrum point with unit fundamental input and a dark add port.
pub fn spectrum_point(config: &ResonatorConfig, wavelength: f64) -> Result<SpectrumPoint> {
    let device = SolvedDevice::solve(config, wavelength)?;
    let (input, add) = device.unit_input();
    let solution = device.solve_loop(&input, &add)?;
    let orders = device.bend_modes.iter().map(|m| m.radial_order).collect();
    Ok(SpectrumPoint::from_solution(&solution, orders))
}

/// Spectrum over `[λ_start, λ_stop]`; points are computed in parallel on
/// the current rayon pool and assembled in wavelength order.
pub fn compute_spectrum(config: &ResonatorConfig, start: f64, stop: f64, step: f64) -> Result<Vec<SpectrumPoint>> {
    config.validate()?;
    let grid = wavelength_grid(start, stop, step)?;
    grid.par_iter().map(|&l| spectrum_point(config, l)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    Fundamental,
    HigherOrder,
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Classification::Fundamental => "fundamental",
            Classification::HigherOrder => "higher order",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Resonance {
    pub wavelength: f64,
    pub dropped_power: f64,
    /// Radial order of the cavity mode with the largest `|b^p|²` at the peak.
    pub dominant_order: usize,
    pub classification: Classification,
}

/// Vertex `(x, y)` of the parabola through three points.
pub fn parabolic_vertex(x: [f64; 3], y: [f64; 3]) -> (f64, f64) {
    let d1 = (y[1] - y[0]) / (x[1] - x[0]);
    let d2 = (y[2] - y[1]) / (x[2] - x[1]);
    let curvature = (d2 - d1) / (x[2] - x[0]);
    if curvature == 0.0 || !curvature.is_finite() {
        return (x[1], y[1]);
    }
    // y = y1 + d1·(t − x0)… written around the middle node.
    let slope_mid = d1 + curvature * (x[1] - x[0]);
    let shift = -slope_mid / (2.0 * curvature);
    let xv = x[1] + shift;
    let yv = y[1] + slope_mid * shift + curvature * shift * shift;
    (xv, yv)
}

/// Interior local maxima of the total dropped power.
pub fn find_resonances(spectrum: &[SpectrumPoint]) -> Result<Vec<Resonance>> {
    if spectrum.len() < 3 {
        return Err(Error::validation("spectrum", "at least three points are needed"));
    }
    let mut found = Vec::new();
    for i in 1..spectrum.len() - 1 {
        let (l, m, r) = (&spectrum[i - 1], &spectrum[i], &spectrum[i + 1]);
        let (yl, ym, yr) = (l.total_dropped(), m.total_dropped(), r.total_dropped());
        if !(ym > yl && ym >= yr) {
            continue;
        }
        let (wavelength, dropped_power) = parabolic_vertex([l.wavelength, m.wavelength, r.wavelength], [yl, ym, yr]);
        let dominant = m
            .cavity_mode_powers
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (p, &v)| if v > best.1 { (p, v) } else { best })
            .0;
        let dominant_order = m.cavity_mode_orders.get(dominant).copied().unwrap_or(dominant);
        found.push(Resonance {
            wavelength,
            dropped_power,
            dominant_order,
            classification: if dominant_order == 0 {
                Classification::Fundamental
            } else {
                Classification::HigherOrder
            },
        });
    }
    Ok(found)
}

// ==================================================================
// Field maps
// ==================================================================

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub z_min: f64,
    pub z_max: f64,
    pub nz: usize,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.nz == 0 {
            return Err(Error::validation("grid", "needs at least one point per axis"));
        }
        for (name, lo, hi, n) in [("x", self.x_min, self.x_max, self.nx), ("z", self.z_min, self.z_max, self.nz)] {
            if !(lo.is_finite() && hi.is_finite()) || (n > 1 && !(hi > lo)) {
                return Err(Error::validation("grid", format!("{name} range must be increasing")));
            }
        }
        Ok(())
    }

    pub fn xs(&self) -> Vec<f64> {
        axis(self.x_min, self.x_max, self.nx)
    }

    pub fn zs(&self) -> Vec<f64> {
        axis(self.z_min, self.z_max, self.nz)
    }
}

fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldMap {
    pub wavelength: f64,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    /// `E_y`, row-major with `z` outer and `x` inner.
    pub values: Vec<Complex64>,
}

impl FieldMap {
    pub fn at(&self, ix: usize, iz: usize) -> Complex64 {
        self.values[iz * self.x.len() + ix]
    }
}

/// Half-width of the square domain the field map may cover.
pub fn field_domain(config: &ResonatorConfig) -> Result<f64> {
    let (g1, g2) = config.couplers()?;
    Ok(g1.window.x_r.max(g2.window.x_r) + 2.0)
}

/// Straight-mode field of one external waveguide (local coordinates).
fn straight_field(modes: &[StraightMode], axis: f64, amplitudes: &DVector<Complex64>, plane: f64, x: f64, z: f64) -> Complex64 {
    let mut e = Complex64::default();
    for (q, m) in modes.iter().enumerate() {
        // Port amplitude refers to the plane; the mode field carries e^{−iβz}.
        let rephase = (Complex64::new(0.0, m.propagation_constant) * plane).exp();
        e += amplitudes[q] * rephase * m.field(x - axis, z).ey;
    }
    e
}

/// Bend superposition with amplitudes referring to rim angle `theta0`.
fn cavity_field(modes: &[BendMode], amplitudes: &DVector<Complex64>, r: f64, theta: f64, theta0: f64) -> Complex64 {
    let mut e = Complex64::default();
    for (p, m) in modes.iter().enumerate() {
        e += amplitudes[p] * m.field_polar(r, theta - theta0).ey;
    }
    e
}

/// Wraps an angle into `[lo, lo + 2π)`.
fn wrap(theta: f64, lo: f64) -> f64 {
    lo + (theta - lo).rem_euclid(2.0 * PI)
}

/// Evaluates `E_y` of a solved device anywhere in the field domain.
///
/// Past each output plane the straight amplitude is `B` (or `D`) minus the
/// part of the outgoing bend field that still projects onto the straight
/// mode at that `z`; the correction vanishes far downstream and makes the
/// field continuous across the output plane.
pub struct DeviceField<'a> {
    device: &'a SolvedDevice,
    solution: &'a LoopSolution,
    inputs1: DVector<Complex64>,
    inputs2: DVector<Complex64>,
    /// Outgoing bend coefficients in each coupler's local frame.
    outgoing1: DVector<Complex64>,
    outgoing2: DVector<Complex64>,
}

/// Everything about one coupler that depends on `z` only.
struct RowState {
    coefficients: Option<DVector<Complex64>>,
    straight: DVector<Complex64>,
    plane: f64,
}

impl<'a> DeviceField<'a> {
    pub fn new(device: &'a SolvedDevice, solution: &'a LoopSolution) -> Self {
        let rephase = |amplitudes: &DVector<Complex64>, theta: f64| {
            DVector::from_iterator(
                amplitudes.len(),
                device
                    .bend_modes
                    .iter()
                    .zip(amplitudes.iter())
                    .map(|(m, v)| v * (Complex64::new(0.0, 1.0) * m.angular_order * theta).exp()),
            )
        };
        DeviceField {
            device,
            solution,
            inputs1: stack(&solution.a, &solution.input_amplitudes),
            inputs2: stack(&solution.c, &solution.add_amplitudes),
            outgoing1: rephase(&solution.b, device.coupler1.geometry.port_angles().1),
            outgoing2: rephase(&solution.d, device.coupler2.geometry.port_angles().1),
        }
    }

    /// Row state of one coupler at local `z`.
    fn row_state(
        &self,
        coupler: &SolvedCoupler,
        inputs: &DVector<Complex64>,
        outgoing: &DVector<Complex64>,
        incoming_straight: &DVector<Complex64>,
        outgoing_straight: &DVector<Complex64>,
        z: f64,
    ) -> Result<RowState> {
        let (bend, straight) = (&self.device.bend_modes, &self.device.straight_modes);
        let w = coupler.geometry.window;
        if z >= w.z_i && z <= w.z_o {
            return Ok(RowState {
                coefficients: Some(coupler.coefficients(bend, straight, inputs, z)),
                straight: DVector::zeros(straight.len()),
                plane: 0.0,
            });
        }
        if z < w.z_i {
            return Ok(RowState {
                coefficients: None,
                straight: incoming_straight.clone(),
                plane: w.z_i,
            });
        }
        // Port amplitudes refer to z_o; the correction is rephased there too.
        let p = coupler.straight_projection(bend, straight, z)?;
        let correction = DVector::from_iterator(
            straight.len(),
            (&p * outgoing)
                .iter()
                .zip(straight.iter())
                .map(|(v, m)| v * (Complex64::new(0.0, -m.propagation_constant) * w.z_o).exp()),
        );
        Ok(RowState {
            coefficients: None,
            straight: outgoing_straight - correction,
            plane: w.z_o,
        })
    }

    /// `E_y` at the points `(x, z)` for all `x` in `xs`.
    pub fn row(&self, xs: &[f64], z: f64) -> Result<Vec<Complex64>> {
        let (device, solution) = (self.device, self.solution);
        let bend = &device.bend_modes;
        let straight = &device.straight_modes;
        let (c1, c2) = (&device.coupler1, &device.coupler2);
        let (w1, w2) = (c1.geometry.window, c2.geometry.window);
        let (i1, o1) = c1.geometry.port_angles();
        let (i2, o2) = c2.geometry.port_angles();
        let s1 = self.row_state(
            c1,
            &self.inputs1,
            &self.outgoing1,
            &solution.input_amplitudes,
            &solution.through_amplitudes,
            z,
        )?;
        let s2 = self.row_state(c2, &self.inputs2, &self.outgoing2, &solution.add_amplitudes, &solution.drop_amplitudes, -z)?;
        let (axis1, axis2) = (c1.geometry.straight_axis(), c2.geometry.straight_axis());

        let mut out = Vec::with_capacity(xs.len());
        for &x in xs {
            // Coupler regions extend outwards without bound; x_r only
            // truncates the overlap integrals.
            let in1 = s1.coefficients.is_some() && x >= w1.x_l;
            let in2 = !in1 && s2.coefficients.is_some() && -x >= w2.x_l;
            let mut e = Complex64::default();
            if in1 {
                e += c1.field(bend, straight, s1.coefficients.as_ref().unwrap(), x, z);
            } else if in2 {
                e += c2.field(bend, straight, s2.coefficients.as_ref().unwrap(), -x, -z);
            } else {
                let r = x.hypot(z);
                if r > 0.0 {
                    // Port planes are lines of constant z, so the outgoing
                    // segments are the bands beyond them.
                    let theta = wrap(z.atan2(x), 0.0);
                    let (amplitudes, origin, theta) = if z > w1.z_o {
                        (&solution.b, o1, theta)
                    } else if -z > w2.z_o {
                        (&solution.d, PI + o2, theta)
                    } else if x >= 0.0 {
                        (&solution.a, i1, wrap(theta, -PI))
                    } else {
                        (&solution.c, PI + i2, theta)
                    };
                    e += cavity_field(bend, amplitudes, r, theta, origin);
                }
            }
            if !in1 {
                e += straight_field(straight, axis1, &s1.straight, s1.plane, x, z);
            }
            if !in2 {
                e += straight_field(straight, axis2, &s2.straight, s2.plane, -x, -z);
            }
            out.push(e);
        }
        Ok(out)
    }

    pub fn at(&self, x: f64, z: f64) -> Result<Complex64> {
        Ok(self.row(&[x], z)?[0])
    }
}

/// `E_y` of the whole device for a solved loop.
pub fn compose_field_map(device: &SolvedDevice, solution: &LoopSolution, grid: &GridSpec) -> Result<FieldMap> {
    grid.validate()?;
    let limit = field_domain(&device.config)?;
    if grid.x_min.abs().max(grid.x_max.abs()).max(grid.z_min.abs()).max(grid.z_max.abs()) > limit {
        return Err(Error::validation(
            "grid",
            format!("must lie within |x|, |z| ≤ {limit} μm of the cavity centre"),
        ));
    }
    let field = DeviceField::new(device, solution);
    let xs = grid.xs();
    let zs = grid.zs();
    let mut values = Vec::with_capacity(xs.len() * zs.len());
    for &z in &zs {
        values.extend(field.row(&xs, z)?);
    }
    Ok(FieldMap {
        wavelength: device.wavelength,
        x: xs,
        z: zs,
        values,
    })
}

fn stack(bend: &DVector<Complex64>, straight: &DVector<Complex64>) -> DVector<Complex64> {
    DVector::from_iterator(bend.len() + straight.len(), bend.iter().chain(straight.iter()).copied())
}

/// Solves the device with tables covering `grid` and composes the map for
/// the given port inputs.
pub fn field_map(
    config: &ResonatorConfig,
    wavelength: f64,
    grid: &GridSpec,
    input: &DVector<Complex64>,
    add: &DVector<Complex64>,
) -> Result<(FieldMap, LoopSolution)> {
    grid.validate()?;
    let corner = grid.x_min.abs().max(grid.x_max.abs()).hypot(grid.z_min.abs().max(grid.z_max.abs()));
    let device = SolvedDevice::solve_with_extent(config, wavelength, corner + 0.5)?;
    let solution = device.solve_loop(input, add)?;
    let map = compose_field_map(&device, &solution, grid)?;
    Ok((map, solution))
}
