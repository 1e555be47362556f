//! Bent–straight waveguide couplers: overlap systems, coupled mode
//! integration and scattering matrices.
//!
//! Local frame: cavity centre at the origin, straight core at
//! `x ∈ [R + g, R + g + w_s]` carrying light towards `+z`. The window is
//! `[x_l, x_r] × [z_i, z_o]`. Bend port amplitudes refer to the rim angle
//! `θ = asin(z/R)`; straight port amplitudes to the plane `z`.
//!
//! With `M_ij = ⟨i;j⟩` and `F_ij = ∫(ε − ε_i)E_i E_j* dx`, the coefficients
//! obey `Mᵀ·C′ = −ik·Fᵀ·C`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::bendmode::{BendGeometry, BendMode};
use crate::error::{Error, Result};
use crate::quad::PanelRule;
use crate::waveguide::{SlabGeometry, StraightMode};

/// Gauss points per quadrature panel.
pub const PANEL_ORDER: usize = 8;
/// Largest accepted condition number of `M`.
pub const MAX_CONDITION: f64 = 1e10;
/// Largest accepted modal power fraction outside the window.
pub const MAX_TAIL_FRACTION: f64 = 1e-4;

/// User-facing window and step controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplerNumerics {
    /// Depth of the window inside the rim, `R − x_l`.
    pub window_inner: f64,
    /// Extent of the window beyond the straight core, `x_r − (R + g + w_s)`.
    pub window_outer: f64,
    /// `z_o = −z_i`; `None` selects `0.6·R`.
    pub window_half_length: Option<f64>,
    /// Quadrature panel width in x.
    pub x_step: f64,
    /// RK4 step in z.
    pub z_step: f64,
}

impl Default for CouplerNumerics {
    fn default() -> Self {
        CouplerNumerics {
            window_inner: f64::NAN,
            window_outer: 2.0,
            window_half_length: None,
            x_step: 0.1,
            z_step: 0.02,
        }
    }
}

impl CouplerNumerics {
    pub fn half_length(&self, radius: f64) -> f64 {
        self.window_half_length.unwrap_or(0.6 * radius)
    }

    pub fn inner(&self, radius: f64) -> f64 {
        if self.window_inner.is_nan() {
            radius
        } else {
            self.window_inner
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub x_l: f64,
    pub x_r: f64,
    pub z_i: f64,
    pub z_o: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplerGeometry {
    pub gap: f64,
    pub straight_core_span: (f64, f64),
    pub cavity_center: (f64, f64),
    pub window: Window,
    pub x_step: f64,
    pub z_step: f64,
    pub bend: BendGeometry,
    pub slab: SlabGeometry,
}

impl CouplerGeometry {
    pub fn new(bend: &BendGeometry, slab: &SlabGeometry, gap: f64, numerics: &CouplerNumerics) -> Result<Self> {
        if !(gap.is_finite() && gap > 0.0) {
            return Err(Error::validation("gap", "must be positive"));
        }
        let r = bend.radius;
        let core = (r + gap, r + gap + slab.width);
        let half = numerics.half_length(r);
        let geometry = CouplerGeometry {
            gap,
            straight_core_span: core,
            cavity_center: (0.0, 0.0),
            window: Window {
                x_l: r - numerics.inner(r),
                x_r: core.1 + numerics.window_outer,
                z_i: -half,
                z_o: half,
            },
            x_step: numerics.x_step,
            z_step: numerics.z_step,
            bend: *bend,
            slab: *slab,
        };
        geometry.validate()?;
        Ok(geometry)
    }

    pub fn validate(&self) -> Result<()> {
        self.bend.validate()?;
        self.slab.validate()?;
        let w = &self.window;
        let r = self.bend.radius;
        if !(self.x_step.is_finite() && self.x_step > 0.0) {
            return Err(Error::validation("x_step", "must be positive"));
        }
        if !(self.z_step.is_finite() && self.z_step > 0.0) {
            return Err(Error::validation("z_step", "must be positive"));
        }
        if !(w.x_l < r && w.x_l >= -r) {
            return Err(Error::Window(format!("x_l = {} must lie inside the cavity, in [−R, R)", w.x_l)));
        }
        if !(w.x_r > self.straight_core_span.1) {
            return Err(Error::Window(format!("x_r = {} must lie beyond the straight core", w.x_r)));
        }
        if !(w.z_i < 0.0 && w.z_o > 0.0) {
            return Err(Error::Window("need z_i < 0 < z_o".into()));
        }
        if w.z_o > r || -w.z_i > r {
            return Err(Error::Window(format!("|z| must not exceed the radius {r}")));
        }
        Ok(())
    }

    /// Rim angles `(θ_i, θ_o)` of the window ends.
    pub fn port_angles(&self) -> (f64, f64) {
        let r = self.bend.radius;
        ((self.window.z_i / r).asin(), (self.window.z_o / r).asin())
    }

    /// Centre of the straight core.
    pub fn straight_axis(&self) -> f64 {
        0.5 * (self.straight_core_span.0 + self.straight_core_span.1)
    }

    /// Radius the bend-mode tables must reach.
    pub fn required_table_radius(&self) -> f64 {
        let w = &self.window;
        w.x_r.hypot(w.z_o.abs().max(w.z_i.abs())) + 0.5
    }

    /// Cavity core intervals along the line at height `z`, clamped to `[x_l, R + g]`.
    fn core_breaks(&self, z: f64) -> [f64; 4] {
        let r = self.bend.radius;
        let r1 = self.bend.inner_radius();
        let outer = (r * r - z * z).max(0.0).sqrt();
        let inner = if self.bend.is_disk() { 0.0 } else { (r1 * r1 - z * z).max(0.0).sqrt() };
        let lo = self.window.x_l;
        let hi = self.straight_core_span.0;
        [-outer, -inner, inner, outer].map(|x| x.clamp(lo, hi))
    }
}

// ==================================================================
// Cross-section quadrature
// ==================================================================

#[derive(Debug, Clone, Copy, PartialEq)]
enum Medium {
    Background,
    Cavity,
    Straight,
}

/// Interface-aligned panels with node counts fixed over the window, so the
/// quadrature of every overlap is a smooth function of `z`.
#[derive(Debug, Clone)]
struct CrossSection {
    rule: PanelRule,
    panels: [usize; 7],
}

struct Nodes {
    x: Vec<f64>,
    w: Vec<f64>,
    medium: Vec<Medium>,
}

impl CrossSection {
    fn new(geometry: &CouplerGeometry) -> Self {
        let w = &geometry.window;
        let mut longest = [0.0f64; 7];
        let samples = 200;
        for s in 0..=samples {
            let z = w.z_i + (w.z_o - w.z_i) * s as f64 / samples as f64;
            let b = Self::breaks(geometry, z);
            for (i, l) in longest.iter_mut().enumerate() {
                *l = l.max(b[i + 1] - b[i]);
            }
        }
        let panels = longest.map(|l| ((l / geometry.x_step).ceil() as usize + 1).max(1));
        CrossSection {
            rule: PanelRule::new(PANEL_ORDER),
            panels,
        }
    }

    fn breaks(geometry: &CouplerGeometry, z: f64) -> [f64; 8] {
        let c = geometry.core_breaks(z);
        let (s0, s1) = geometry.straight_core_span;
        [geometry.window.x_l, c[0], c[1], c[2], c[3], s0, s1, geometry.window.x_r]
    }

    fn nodes(&self, geometry: &CouplerGeometry, z: f64) -> Nodes {
        let b = Self::breaks(geometry, z);
        let media = [
            Medium::Background,
            Medium::Cavity,
            Medium::Background,
            Medium::Cavity,
            Medium::Background,
            Medium::Straight,
            Medium::Background,
        ];
        let mut x = Vec::new();
        let mut w = Vec::new();
        let mut medium = Vec::new();
        for i in 0..7 {
            let before = x.len();
            self.rule.push(b[i], b[i + 1], self.panels[i], &mut x, &mut w);
            medium.resize(medium.len() + x.len() - before, media[i]);
        }
        Nodes { x, w, medium }
    }
}

// ==================================================================
// Overlaps
// ==================================================================

#[derive(Debug, Clone, PartialEq)]
pub struct OverlapSystem {
    pub m_matrix: DMatrix<Complex64>,
    pub f_matrix: DMatrix<Complex64>,
    pub z: f64,
}

fn check_wavelengths(bend: &[BendMode], straight: &[StraightMode]) -> Result<f64> {
    let reference = bend
        .first()
        .map(|m| m.wavelength)
        .or_else(|| straight.first().map(|m| m.wavelength))
        .ok_or_else(|| Error::validation("modes", "at least one mode is required"))?;
    for w in bend.iter().map(|m| m.wavelength).chain(straight.iter().map(|m| m.wavelength)) {
        if (w - reference).abs() > 1e-12 * reference {
            return Err(Error::WavelengthMismatch(reference, w));
        }
    }
    Ok(reference)
}

/// Reusable evaluator for one set of modes in one coupler.
struct Assembler<'a> {
    bend: &'a [BendMode],
    straight: &'a [StraightMode],
    geometry: &'a CouplerGeometry,
    section: CrossSection,
    k: f64,
}

impl<'a> Assembler<'a> {
    fn new(bend: &'a [BendMode], straight: &'a [StraightMode], geometry: &'a CouplerGeometry) -> Result<Self> {
        geometry.validate()?;
        let wavelength = check_wavelengths(bend, straight)?;
        Ok(Assembler {
            bend,
            straight,
            geometry,
            section: CrossSection::new(geometry),
            k: 2.0 * PI / wavelength,
        })
    }

    fn size(&self) -> usize {
        self.bend.len() + self.straight.len()
    }

    fn overlaps(&self, z: f64) -> OverlapSystem {
        let nodes = self.section.nodes(self.geometry, z);
        let n = self.size();
        let axis = self.geometry.straight_axis();
        let count = nodes.x.len();
        let mut e = vec![Complex64::default(); n * count];
        let mut h = vec![Complex64::default(); n * count];
        for (j, &x) in nodes.x.iter().enumerate() {
            for (i, mode) in self.bend.iter().enumerate() {
                let f = mode.field_local(x, z);
                e[i * count + j] = f.ey;
                h[i * count + j] = f.hx;
            }
            for (q, mode) in self.straight.iter().enumerate() {
                let f = mode.field(x - axis, z);
                let i = self.bend.len() + q;
                e[i * count + j] = f.ey;
                h[i * count + j] = f.hx;
            }
        }
        let g = &self.geometry;
        let bend_contrast = g.slab.core_index.powi(2) - g.slab.background_index.powi(2);
        let straight_contrast = g.bend.core_index.powi(2) - g.bend.background_index.powi(2);
        let mut m = DMatrix::zeros(n, n);
        let mut f = DMatrix::zeros(n, n);
        for i in 0..n {
            let (ei, hi) = (&e[i * count..(i + 1) * count], &h[i * count..(i + 1) * count]);
            let (contrast, medium) = if i < self.bend.len() {
                (bend_contrast, Medium::Straight)
            } else {
                (straight_contrast, Medium::Cavity)
            };
            for j in 0..n {
                let (ej, hj) = (&e[j * count..(j + 1) * count], &h[j * count..(j + 1) * count]);
                let mut mij = Complex64::default();
                let mut fij = Complex64::default();
                for p in 0..count {
                    let w = nodes.w[p];
                    mij += w * (-ei[p] * hj[p].conj() - ej[p].conj() * hi[p]);
                    if nodes.medium[p] == medium {
                        fij += w * ei[p] * ej[p].conj();
                    }
                }
                m[(i, j)] = mij;
                f[(i, j)] = fij * contrast;
            }
        }
        OverlapSystem {
            m_matrix: m,
            f_matrix: f,
            z,
        }
    }

    /// `K(z)` with `C′ = K·C`.
    fn system(&self, z: f64) -> Result<DMatrix<Complex64>> {
        let o = self.overlaps(z);
        if !all_finite(&o.m_matrix) || !all_finite(&o.f_matrix) {
            return Err(Error::NoConvergence {
                what: "overlap assembly".into(),
                trace: format!("non-finite overlap at z = {z} μm"),
            });
        }
        let singular = o.m_matrix.clone().svd(false, false).singular_values;
        let smax = singular.max();
        let smin = singular.min();
        let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if !(condition <= MAX_CONDITION) {
            return Err(Error::IllConditioned { z, condition });
        }
        let rhs = o.f_matrix.transpose() * Complex64::new(0.0, -self.k);
        o.m_matrix
            .transpose()
            .lu()
            .solve(&rhs)
            .ok_or(Error::IllConditioned { z, condition })
    }

    fn tail_check(&self) -> Result<()> {
        let w = &self.geometry.window;
        for mode in self.straight {
            let axis = self.geometry.straight_axis();
            let total = mode.profile_overlap(mode);
            let rule = PanelRule::new(PANEL_ORDER);
            let (mut xs, mut ws) = (Vec::new(), Vec::new());
            let (a, b) = (w.x_l - axis, w.x_r - axis);
            let d = mode.half_width;
            for (lo, hi) in [(a, -d), (-d, d), (d, b)] {
                rule.push(lo, hi, (((hi - lo) / 0.05).ceil() as usize).max(1), &mut xs, &mut ws);
            }
            let inside: f64 = xs.iter().zip(&ws).map(|(x, w)| w * mode.profile(*x).0.powi(2)).sum();
            let tail = 1.0 - inside / total;
            if tail > MAX_TAIL_FRACTION {
                return Err(Error::Window(format!(
                    "straight mode TE{} has {tail:.2e} of its power outside [x_l, x_r]",
                    mode.order
                )));
            }
        }
        if w.x_l > 0.0 {
            for mode in self.bend {
                let rule = PanelRule::new(PANEL_ORDER);
                let (mut xs, mut ws) = (Vec::new(), Vec::new());
                let r_end = self.geometry.bend.radius + 2.0;
                let panels = |l: f64| ((l / 0.05).ceil() as usize).max(1);
                rule.push(0.0, w.x_l, panels(w.x_l), &mut xs, &mut ws);
                let split = xs.len();
                rule.push(w.x_l, r_end, panels(r_end - w.x_l), &mut xs, &mut ws);
                let density: Vec<f64> = xs
                    .iter()
                    .zip(&ws)
                    .map(|(r, w)| if *r > 0.0 { w * mode.radial(*r).0.norm_sqr() / r } else { 0.0 })
                    .collect();
                let tail: f64 = density[..split].iter().sum();
                let total: f64 = density.iter().sum();
                if tail > MAX_TAIL_FRACTION * total {
                    return Err(Error::Window(format!(
                        "bend mode TE{} has {:.2e} of its power inside x_l",
                        mode.radial_order,
                        tail / total
                    )));
                }
            }
        }
        Ok(())
    }
}

fn all_finite(m: &DMatrix<Complex64>) -> bool {
    m.iter().all(|c| c.re.is_finite() && c.im.is_finite())
}

/// Overlap matrices `M`, `F` on the cross-section at height `z`.
pub fn assemble_overlaps(
    bend_modes: &[BendMode],
    straight_modes: &[StraightMode],
    geometry: &CouplerGeometry,
    z: f64,
) -> Result<OverlapSystem> {
    let assembler = Assembler::new(bend_modes, straight_modes, geometry)?;
    assembler.tail_check()?;
    Ok(assembler.overlaps(z))
}

// ==================================================================
// Integration
// ==================================================================

/// Transfer matrices `T(z)` with `C(z) = T(z)·C(z_i)` at every RK4 node.
#[derive(Debug, Clone, PartialEq)]
pub struct CmeSolution {
    pub z: Vec<f64>,
    pub transfer: Vec<DMatrix<Complex64>>,
}

impl CmeSolution {
    /// `T = T(z_o)`.
    pub fn total(&self) -> &DMatrix<Complex64> {
        self.transfer.last().expect("solution has at least one node")
    }

    /// Coefficients at `z`, cubic-free linear interpolation between RK4 nodes.
    pub fn coefficients_at(&self, z: f64, initial: &DVector<Complex64>) -> DVector<Complex64> {
        let n = self.z.len();
        let z0 = self.z[0];
        let h = (self.z[n - 1] - z0) / (n - 1) as f64;
        let pos = ((z - z0) / h).clamp(0.0, (n - 1) as f64);
        let i = (pos.floor() as usize).min(n - 2);
        let t = pos - i as f64;
        let a = &self.transfer[i] * initial;
        let b = &self.transfer[i + 1] * initial;
        a * Complex64::new(1.0 - t, 0.0) + b * Complex64::new(t, 0.0)
    }
}

fn integrate(assembler: &Assembler, z_step: f64) -> Result<CmeSolution> {
    let w = &assembler.geometry.window;
    let n = assembler.size();
    let steps = ((w.z_o - w.z_i) / z_step).ceil().max(1.0) as usize;
    let h = (w.z_o - w.z_i) / steps as f64;
    let mut t = DMatrix::<Complex64>::identity(n, n);
    let mut zs = vec![w.z_i];
    let mut transfer = vec![t.clone()];
    let mut k_start = assembler.system(w.z_i)?;
    let half = Complex64::new(0.5 * h, 0.0);
    let full = Complex64::new(h, 0.0);
    let sixth = Complex64::new(h / 6.0, 0.0);
    for s in 0..steps {
        let z = w.z_i + h * s as f64;
        let k_mid = assembler.system(z + 0.5 * h)?;
        let k_end = assembler.system(if s + 1 == steps { w.z_o } else { z + h })?;
        let k1 = &k_start * &t;
        let k2 = &k_mid * (&t + &k1 * half);
        let k3 = &k_mid * (&t + &k2 * half);
        let k4 = &k_end * (&t + &k3 * full);
        t += (k1 + (k2 + k3) * Complex64::new(2.0, 0.0) + k4) * sixth;
        zs.push(if s + 1 == steps { w.z_o } else { z + h });
        transfer.push(t.clone());
        k_start = k_end;
    }
    Ok(CmeSolution { z: zs, transfer })
}

/// Integrates the coupled mode equations over the window.
pub fn integrate_cme(
    bend_modes: &[BendMode],
    straight_modes: &[StraightMode],
    geometry: &CouplerGeometry,
) -> Result<CmeSolution> {
    let assembler = Assembler::new(bend_modes, straight_modes, geometry)?;
    assembler.tail_check()?;
    integrate(&assembler, geometry.z_step)
}

/// As [`integrate_cme`] with an explicit z step.
pub fn integrate_cme_with_step(
    bend_modes: &[BendMode],
    straight_modes: &[StraightMode],
    geometry: &CouplerGeometry,
    z_step: f64,
) -> Result<CmeSolution> {
    if !(z_step.is_finite() && z_step > 0.0) {
        return Err(Error::validation("z_step", "must be positive"));
    }
    let assembler = Assembler::new(bend_modes, straight_modes, geometry)?;
    integrate(&assembler, z_step)
}

// ==================================================================
// Scattering matrices
// ==================================================================

#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringMatrix {
    /// Bend ports first, then straight ports.
    pub entries: DMatrix<Complex64>,
    pub wavelength: f64,
    pub n_bend: usize,
    pub n_straight: usize,
}

impl ScatteringMatrix {
    pub fn bend_bend(&self) -> DMatrix<Complex64> {
        self.entries.view((0, 0), (self.n_bend, self.n_bend)).into_owned()
    }

    pub fn bend_straight(&self) -> DMatrix<Complex64> {
        self.entries.view((0, self.n_bend), (self.n_bend, self.n_straight)).into_owned()
    }

    pub fn straight_bend(&self) -> DMatrix<Complex64> {
        self.entries.view((self.n_bend, 0), (self.n_straight, self.n_bend)).into_owned()
    }

    pub fn straight_straight(&self) -> DMatrix<Complex64> {
        self.entries
            .view((self.n_bend, self.n_bend), (self.n_straight, self.n_straight))
            .into_owned()
    }

    pub fn max_singular_value(&self) -> f64 {
        if !all_finite(&self.entries) {
            return f64::INFINITY;
        }
        self.entries.clone().svd(false, false).singular_values.max()
    }
}

/// Row operator of the output projection: straight rows gain
/// `⟨b,p;s,q⟩/⟨s,q;s,q⟩` in the bend columns.
fn projection(o: &OverlapSystem, n_bend: usize) -> DMatrix<Complex64> {
    let n = o.m_matrix.nrows();
    let mut p = DMatrix::identity(n, n);
    for s in n_bend..n {
        for b in 0..n_bend {
            p[(s, b)] = o.m_matrix[(b, s)] / o.m_matrix[(s, s)];
        }
    }
    p
}

fn port_phases(bend: &[BendMode], straight: &[StraightMode], geometry: &CouplerGeometry) -> (DVector<Complex64>, DVector<Complex64>) {
    let (theta_i, theta_o) = geometry.port_angles();
    let w = &geometry.window;
    let i = Complex64::new(0.0, 1.0);
    let input = bend
        .iter()
        .map(|m| (i * m.angular_order * theta_i).exp())
        .chain(straight.iter().map(|m| (i * m.propagation_constant * w.z_i).exp()));
    let output = bend
        .iter()
        .map(|m| (-i * m.angular_order * theta_o).exp())
        .chain(straight.iter().map(|m| (-i * m.propagation_constant * w.z_o).exp()));
    (DVector::from_iterator(bend.len() + straight.len(), input), DVector::from_iterator(bend.len() + straight.len(), output))
}

/// `S = D_out·P·T·D_in`: projection at `z_o` for the straight outputs, raw
/// coefficients for the bend outputs, port phases at both planes.
pub fn apply_projection(
    transfer: &DMatrix<Complex64>,
    bend_modes: &[BendMode],
    straight_modes: &[StraightMode],
    geometry: &CouplerGeometry,
) -> Result<ScatteringMatrix> {
    let assembler = Assembler::new(bend_modes, straight_modes, geometry)?;
    let n = assembler.size();
    if transfer.nrows() != n || transfer.ncols() != n {
        return Err(Error::validation("transfer", format!("expected a {n}×{n} matrix")));
    }
    let o = assembler.overlaps(geometry.window.z_o);
    let p = projection(&o, bend_modes.len());
    let (d_in, d_out) = port_phases(bend_modes, straight_modes, geometry);
    let entries = DMatrix::from_diagonal(&d_out) * p * transfer * DMatrix::from_diagonal(&d_in);
    Ok(ScatteringMatrix {
        entries,
        wavelength: 2.0 * PI / assembler.k,
        n_bend: bend_modes.len(),
        n_straight: straight_modes.len(),
    })
}

/// A solved coupler: modes, geometry, trajectory and scattering matrix.
#[derive(Debug, Clone)]
pub struct SolvedCoupler {
    pub geometry: CouplerGeometry,
    pub solution: CmeSolution,
    pub scattering: ScatteringMatrix,
    /// `M` at the input and output planes.
    pub overlaps_in: DMatrix<Complex64>,
    pub overlaps_out: DMatrix<Complex64>,
}

impl SolvedCoupler {
    pub fn solve(bend: &[BendMode], straight: &[StraightMode], geometry: &CouplerGeometry) -> Result<Self> {
        let assembler = Assembler::new(bend, straight, geometry)?;
        assembler.tail_check()?;
        let solution = integrate(&assembler, geometry.z_step)?;
        let scattering = apply_projection(solution.total(), bend, straight, geometry)?;
        Ok(SolvedCoupler {
            geometry: *geometry,
            overlaps_in: assembler.overlaps(geometry.window.z_i).m_matrix,
            overlaps_out: assembler.overlaps(geometry.window.z_o).m_matrix,
            solution,
            scattering,
        })
    }

    /// Largest ratio of output to input power of the coupled-mode field,
    /// with power `½·C^H·conj(M)·C` on each plane. Unlike the port-amplitude
    /// matrix this accounts for the non-orthogonality of the bend modes on
    /// the oblique port planes.
    pub fn power_gain(&self) -> Result<f64> {
        let gram = |m: &DMatrix<Complex64>| {
            let g = m.map(|c| c.conj()) * Complex64::new(0.5, 0.0);
            (&g + g.adjoint()) * Complex64::new(0.5, 0.0)
        };
        let not_definite = || Error::NoConvergence {
            what: "port power form".into(),
            trace: "overlap matrix at a port plane is not positive definite".into(),
        };
        let l_in = gram(&self.overlaps_in).cholesky().ok_or_else(not_definite)?.l();
        let l_out = gram(&self.overlaps_out).cholesky().ok_or_else(not_definite)?.l();
        let inv = l_in.adjoint().try_inverse().ok_or_else(not_definite)?;
        let map = l_out.adjoint() * self.solution.total() * inv;
        if !all_finite(&map) {
            return Err(not_definite());
        }
        Ok(map.svd(false, false).singular_values.max())
    }

    /// Straight rows of the output projection evaluated at an arbitrary
    /// `z`: entry `(q, p)` is `M_pq / M_qq`.
    pub fn straight_projection(&self, bend: &[BendMode], straight: &[StraightMode], z: f64) -> Result<DMatrix<Complex64>> {
        let assembler = Assembler::new(bend, straight, &self.geometry)?;
        let p = projection(&assembler.overlaps(z), bend.len());
        Ok(p.view((bend.len(), 0), (straight.len(), bend.len())).into_owned())
    }

    /// Coefficients `C(z)` for port inputs `(a, A)` at the input plane.
    pub fn coefficients(
        &self,
        bend: &[BendMode],
        straight: &[StraightMode],
        inputs: &DVector<Complex64>,
        z: f64,
    ) -> DVector<Complex64> {
        let (d_in, _) = port_phases(bend, straight, &self.geometry);
        let initial = d_in.component_mul(inputs);
        self.solution.coefficients_at(z, &initial)
    }

    /// `E_y` of the coupled-mode superposition at local `(x, z)`.
    pub fn field(&self, bend: &[BendMode], straight: &[StraightMode], coefficients: &DVector<Complex64>, x: f64, z: f64) -> Complex64 {
        let axis = self.geometry.straight_axis();
        let mut e = Complex64::default();
        for (i, m) in bend.iter().enumerate() {
            e += coefficients[i] * m.field_local(x, z).ey;
        }
        for (q, m) in straight.iter().enumerate() {
            e += coefficients[bend.len() + q] * m.field(x - axis, z).ey;
        }
        e
    }
}

/// End-to-end coupler solve for `N_b` bend and `N_s` straight modes.
pub fn compute_scattering_matrix(
    bend_geometry: &BendGeometry,
    slab_geometry: &SlabGeometry,
    coupler_geometry: &CouplerGeometry,
    wavelength: f64,
    n_bend: usize,
    n_straight: usize,
) -> Result<ScatteringMatrix> {
    if coupler_geometry.bend != *bend_geometry || coupler_geometry.slab != *slab_geometry {
        return Err(Error::validation("coupler_geometry", "built for a different device"));
    }
    let bend = crate::bendmode::find_bend_modes_with_extent(
        bend_geometry,
        wavelength,
        n_bend,
        coupler_geometry.required_table_radius(),
    )?;
    let straight = straight_modes(slab_geometry, wavelength, n_straight)?;
    Ok(SolvedCoupler::solve(&bend, &straight, coupler_geometry)?.scattering)
}

/// The `count` lowest straight modes, or an error if fewer are guided.
pub fn straight_modes(slab: &SlabGeometry, wavelength: f64, count: usize) -> Result<Vec<StraightMode>> {
    let modes = crate::waveguide::find_slab_modes(slab, wavelength)?;
    if count == 0 || count > modes.len() {
        return Err(Error::validation(
            "n_straight_modes",
            format!("{count} requested, the straight waveguide guides {} at λ = {wavelength} μm", modes.len()),
        ));
    }
    Ok(modes.into_iter().take(count).collect())
}
