//! Test-only oracles shared by the integration targets: a double-double
//! ascending series for cylinder functions, a finite-difference slab solver
//! and a complex-plane scan for bend-mode roots.
#![allow(dead_code)]

use mrcmt::bendmode::BendGeometry;
use mrcmt::waveguide::SlabGeometry;
use num_complex::Complex64;
use std::f64::consts::PI;

// ==================================================================
// Double-double arithmetic
// ==================================================================

#[derive(Clone, Copy, Debug)]
struct Dd {
    hi: f64,
    lo: f64,
}

fn two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    Dd { hi: s, lo: err }
}

fn quick_two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    Dd { hi: s, lo: b - (s - a) }
}

impl Dd {
    fn new(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }
    fn add(self, o: Dd) -> Dd {
        let s = two_sum(self.hi, o.hi);
        let t = two_sum(self.lo, o.lo);
        let v = quick_two_sum(s.hi, s.lo + t.hi);
        quick_two_sum(v.hi, v.lo + t.lo)
    }
    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }
    fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }
    fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        quick_two_sum(p, e + (self.hi * o.lo + self.lo * o.hi))
    }
    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.sub(o.mul(Dd::new(q1)));
        let q2 = r.hi / o.hi;
        let r = r.sub(o.mul(Dd::new(q2)));
        let q3 = r.hi / o.hi;
        quick_two_sum(q1, q2).add(Dd::new(q3))
    }
    fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

#[derive(Clone, Copy, Debug)]
struct Cdd {
    re: Dd,
    im: Dd,
}

impl Cdd {
    fn from(c: Complex64) -> Cdd {
        Cdd { re: Dd::new(c.re), im: Dd::new(c.im) }
    }
    fn add(self, o: Cdd) -> Cdd {
        Cdd { re: self.re.add(o.re), im: self.im.add(o.im) }
    }
    fn mul(self, o: Cdd) -> Cdd {
        Cdd {
            re: self.re.mul(o.re).sub(self.im.mul(o.im)),
            im: self.re.mul(o.im).add(self.im.mul(o.re)),
        }
    }
    fn div(self, o: Cdd) -> Cdd {
        let den = o.re.mul(o.re).add(o.im.mul(o.im));
        let num = self.mul(Cdd { re: o.re, im: o.im.neg() });
        Cdd { re: num.re.div(den), im: num.im.div(den) }
    }
    fn norm_f64(self) -> f64 {
        self.re.to_f64().hypot(self.im.to_f64())
    }
    fn to_c64(self) -> Complex64 {
        Complex64::new(self.re.to_f64(), self.im.to_f64())
    }
}

// ==================================================================
// Oracle
// ==================================================================

/// Stirling series with upward shift, kept separate from the production gamma.
pub fn ln_gamma_stirling(z: Complex64) -> Complex64 {
    if z.re < 0.5 {
        return Complex64::new(PI, 0.0).ln() - (PI * z).sin().ln() - ln_gamma_stirling(1.0 - z);
    }
    let mut shift = Complex64::new(0.0, 0.0);
    let mut w = z;
    while w.norm() < 20.0 {
        shift += w.ln();
        w += 1.0;
    }
    let inv = 1.0 / w;
    let inv2 = inv * inv;
    let series = inv
        * (1.0 / 12.0
            + inv2 * (-1.0 / 360.0 + inv2 * (1.0 / 1260.0 + inv2 * (-1.0 / 1680.0 + inv2 * (1.0 / 1188.0)))));
    (w - 0.5) * w.ln() - w + 0.5 * (2.0 * PI).ln() + series - shift
}

/// `J_ν(z)` and `J′_ν(z)` from the ascending series.
pub fn oracle_j(nu: Complex64, z: Complex64) -> (Complex64, Complex64) {
    let zd = Cdd::from(z);
    let nud = Cdd::from(nu);
    let quarter_z2 = zd.mul(zd).mul(Cdd::from(Complex64::new(-0.25, 0.0)));
    let mut term = Cdd::from(Complex64::new(1.0, 0.0));
    let mut sum = term;
    let mut dsum = Cdd::from(nu);
    for k in 1..2000 {
        let kd = Cdd::from(Complex64::new(k as f64, 0.0));
        let den = kd.mul(nud.add(kd));
        term = term.mul(quarter_z2).div(den);
        sum = sum.add(term);
        let weight = nud.add(Cdd::from(Complex64::new(2.0 * k as f64, 0.0)));
        dsum = dsum.add(term.mul(weight));
        if k > 10 && term.norm_f64() < 1e-34 * sum.norm_f64() {
            break;
        }
    }
    let prefactor = (nu * (z / 2.0).ln() - ln_gamma_stirling(nu + 1.0)).exp();
    let value = prefactor * sum.to_c64();
    let derivative = prefactor * dsum.to_c64() / z;
    (value, derivative)
}

/// `H⁽²⁾_ν(z)` from `J_ν` and `J_{−ν}`; `ν` must not be an integer.
pub fn oracle_h2(nu: Complex64, z: Complex64) -> Complex64 {
    let (jp, _) = oracle_j(nu, z);
    let (jm, _) = oracle_j(-nu, z);
    let i = Complex64::new(0.0, 1.0);
    let y = (jp * (nu * PI).cos() - jm) / (nu * PI).sin();
    jp - i * y
}

/// `H⁽²⁾_ν(z)` and its derivative; `ν` must not be an integer.
pub fn oracle_h2_pair(nu: Complex64, z: Complex64) -> (Complex64, Complex64) {
    let (jp, djp) = oracle_j(nu, z);
    let (jm, djm) = oracle_j(-nu, z);
    let i = Complex64::new(0.0, 1.0);
    let (c, s) = ((nu * PI).cos(), (nu * PI).sin());
    let y = (jp * c - jm) / s;
    let dy = (djp * c - djm) / s;
    (jp - i * y, djp - i * dy)
}

// ------------------------------------------------------------------
// Slab modes by finite differences
// ------------------------------------------------------------------

/// Effective indices of the discretised operator `−d²/dx² − k²n(x)²` on a
/// uniform grid with Dirichlet ends; the core interfaces fall on cell
/// midpoints. Eigenvalues come from Sturm-sequence bisection.
pub fn fd_effective_indices(geometry: &SlabGeometry, wavelength: f64, h: f64, count: usize) -> Vec<f64> {
    let k = 2.0 * PI / wavelength;
    let d = 0.5 * geometry.width;
    let extent = d + 4.0;
    let cells = (2.0 * extent / h).round() as usize;
    let x0 = -(cells as f64) * h / 2.0;
    // Node i sits at x0 + (i + ½)h so a core edge at ±d lands between nodes
    // whenever d/h is an integer.
    let diag: Vec<f64> = (0..cells)
        .map(|i| {
            let x = x0 + (i as f64 + 0.5) * h;
            let n = if x.abs() < d { geometry.core_index } else { geometry.background_index };
            2.0 / (h * h) - (k * n).powi(2)
        })
        .collect();
    let off = -1.0 / (h * h);
    let below = |lambda: f64| -> usize {
        let mut count = 0;
        let mut q = diag[0] - lambda;
        if q < 0.0 {
            count += 1;
        }
        for &a in &diag[1..] {
            let prev = if q == 0.0 { 1e-300 } else { q };
            q = a - lambda - off * off / prev;
            if q < 0.0 {
                count += 1;
            }
        }
        count
    };
    let lo_bound = -(k * geometry.core_index).powi(2);
    (0..count)
        .map(|m| {
            let (mut lo, mut hi) = (lo_bound, -(k * geometry.background_index).powi(2));
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if below(mid) > m {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            (-(0.5 * (lo + hi))).sqrt() / k
        })
        .collect()
}

/// Richardson-extrapolated oracle from steps 1 nm and 2 nm.
pub fn slab_oracle(geometry: &SlabGeometry, wavelength: f64, count: usize) -> Vec<f64> {
    let fine = fd_effective_indices(geometry, wavelength, 1e-3, count);
    let coarse = fd_effective_indices(geometry, wavelength, 2e-3, count);
    fine.iter().zip(&coarse).map(|(f, c)| f + (f - c) / 3.0).collect()
}

// ------------------------------------------------------------------
// Bend roots by a complex-plane scan
// ------------------------------------------------------------------

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Unscaled matching determinant from oracle cylinder functions.
pub fn oracle_determinant(g: &BendGeometry, k: f64, nu: Complex64) -> (Complex64, f64) {
    let (nc, nb) = (g.core_index, g.background_index);
    if g.core_width == 0.0 {
        let (j, dj) = oracle_j(nu, c(nc * k * g.radius));
        let (h, dh) = oracle_h2_pair(nu, c(nb * k * g.radius));
        let scale = j.norm().hypot(dj.norm()) * h.norm().hypot(dh.norm());
        (nc * dj * h - nb * j * dh, scale)
    } else {
        let r1 = g.radius - g.core_width;
        let (jb1, djb1) = oracle_j(nu, c(nb * k * r1));
        let (jc1, djc1) = oracle_j(nu, c(nc * k * r1));
        let (hc1, dhc1) = oracle_h2_pair(nu, c(nc * k * r1));
        let (jcr, djcr) = oracle_j(nu, c(nc * k * g.radius));
        let (hcr, dhcr) = oracle_h2_pair(nu, c(nc * k * g.radius));
        let (hbr, dhbr) = oracle_h2_pair(nu, c(nb * k * g.radius));
        let e11 = nc * djc1 * jb1 - nb * jc1 * djb1;
        let e12 = nc * dhc1 * jb1 - nb * hc1 * djb1;
        let e21 = nc * djcr * hbr - nb * jcr * dhbr;
        let e22 = nc * dhcr * hbr - nb * hcr * dhbr;
        let scale = (e11 * e22).norm().max((e12 * e21).norm());
        (e11 * e22 - e12 * e21, scale)
    }
}

/// Local minima of the scaled residual on a rectangular grid, refined by
/// secant iteration on the residual with its scale frozen at the minimum.
pub fn scan_roots(g: &BendGeometry, wavelength: f64, re: (f64, f64), im: (f64, f64), step: f64) -> Vec<Complex64> {
    let k = 2.0 * PI / wavelength;
    let nre = ((re.1 - re.0) / step).round() as usize;
    let nim = ((im.1 - im.0) / step).round() as usize;
    // Offset keeps grid nodes away from integer orders, where the H⁽²⁾ oracle is singular.
    let at = |i: usize, j: usize| Complex64::new(re.0 + 0.0137 + step * i as f64, im.0 + 0.0071 + step * j as f64);
    let grid: Vec<Vec<f64>> = (0..=nre)
        .map(|i| {
            (0..=nim)
                .map(|j| {
                    let (d, s) = oracle_determinant(g, k, at(i, j));
                    let v = d.norm() / s;
                    if v.is_finite() { v } else { f64::INFINITY }
                })
                .collect()
        })
        .collect();
    let mut roots: Vec<Complex64> = Vec::new();
    for i in 1..nre {
        for j in 1..nim {
            let v = grid[i][j];
            let is_min = (-1i64..=1).all(|di| {
                (-1i64..=1).all(|dj| (di, dj) == (0, 0) || grid[(i as i64 + di) as usize][(j as i64 + dj) as usize] >= v)
            });
            if !is_min {
                continue;
            }
            let seed = at(i, j);
            let (_, scale) = oracle_determinant(g, k, seed);
            let f = |nu: Complex64| oracle_determinant(g, k, nu).0 / scale;
            let (mut x0, mut x1) = (seed, seed + 0.05 * step);
            let (mut f0, mut f1) = (f(x0), f(x1));
            for _ in 0..60 {
                if (x1 - x0).norm() < 1e-13 * x1.norm() || f1 == f0 {
                    break;
                }
                let x2 = x1 - f1 * (x1 - x0) / (f1 - f0);
                x0 = x1;
                f0 = f1;
                x1 = x2;
                f1 = f(x1);
            }
            if (x1 - seed).norm() < 2.0 * step && roots.iter().all(|r| (r - x1).norm() > 1e-6) {
                roots.push(x1);
            }
        }
    }
    roots
}

pub fn closest(roots: &[Complex64], nu: Complex64) -> f64 {
    roots.iter().map(|r| (r - nu).norm()).fold(f64::INFINITY, f64::min)
}
