//! Comma-separated text outputs.

use std::fmt::Write as _;

use num_complex::Complex64;

use crate::bendmode::BendMode;
use crate::coupler::ScatteringMatrix;
use crate::resonator::{FieldMap, SpectrumPoint};
use crate::waveguide::StraightMode;

/// Decimal rendering with 12 significant digits; scientific notation for
/// very small or very large magnitudes.
pub fn sig12(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{v:.11e}");
    let exponent: i32 = sci.split('e').nth(1).and_then(|e| e.parse().ok()).unwrap_or(0);
    if !(-5..15).contains(&exponent) {
        return sci;
    }
    let rounded: f64 = sci.parse().unwrap_or(v);
    format!("{:.*}", (11 - exponent).max(0) as usize, rounded)
}

pub fn spectrum_csv(points: &[SpectrumPoint]) -> String {
    let (ns, nb) = points
        .first()
        .map_or((0, 0), |p| (p.transmitted_power.len(), p.cavity_mode_powers.len()));
    let mut s = String::from("lambda_um");
    for q in 0..ns {
        let _ = write!(s, ",P_T_q{q}");
    }
    for q in 0..ns {
        let _ = write!(s, ",P_D_q{q}");
    }
    for p in 0..nb {
        let order = points.first().and_then(|pt| pt.cavity_mode_orders.get(p)).copied().unwrap_or(p);
        let _ = write!(s, ",P_cav_p{order}");
    }
    s.push('\n');
    for point in points {
        s.push_str(&sig12(point.wavelength));
        for v in point.transmitted_power.iter().chain(&point.dropped_power).chain(&point.cavity_mode_powers) {
            s.push(',');
            s.push_str(&sig12(*v));
        }
        s.push('\n');
    }
    s
}

pub fn fieldmap_csv(map: &FieldMap) -> String {
    let mut s = String::from("x_um,z_um,abs_Ey,re_Ey,im_Ey\n");
    for (iz, z) in map.z.iter().enumerate() {
        for (ix, x) in map.x.iter().enumerate() {
            let e = map.at(ix, iz);
            let _ = writeln!(s, "{},{},{},{},{}", sig12(*x), sig12(*z), sig12(e.norm()), sig12(e.re), sig12(e.im));
        }
    }
    s
}

pub fn modes_csv(bend: &[BendMode], straight: &[StraightMode]) -> String {
    let mut s = String::from("kind,order,re_gamma_per_um,im_gamma_per_um,n_eff,roundtrip_survival\n");
    for m in bend {
        let _ = writeln!(
            s,
            "bend,{},{},{},{},{}",
            m.radial_order,
            sig12(m.gamma.re),
            sig12(m.gamma.im),
            sig12(m.effective_index()),
            sig12(m.roundtrip_survival())
        );
    }
    for m in straight {
        let _ = writeln!(
            s,
            "straight,{},{},0,{},1",
            m.order,
            sig12(m.propagation_constant),
            sig12(m.effective_index)
        );
    }
    s
}

fn port_label(index: usize, n_bend: usize, bend: &str, straight: &str) -> String {
    if index < n_bend {
        format!("{bend}{index}")
    } else {
        format!("{straight}{}", index - n_bend)
    }
}

/// One labelled row per entry: output port, input port, value.
pub fn scattering_csv(s: &ScatteringMatrix, bend_orders: &[usize]) -> String {
    let mut out = String::from("out_port,in_port,re,im,abs\n");
    let label = |i: usize, b: &str, st: &str| {
        if i < s.n_bend {
            format!("{b}{}", bend_orders.get(i).copied().unwrap_or(i))
        } else {
            port_label(i, s.n_bend, b, st)
        }
    };
    for i in 0..s.entries.nrows() {
        for j in 0..s.entries.ncols() {
            let v: Complex64 = s.entries[(i, j)];
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                label(i, "b", "B"),
                label(j, "a", "A"),
                sig12(v.re),
                sig12(v.im),
                sig12(v.norm())
            );
        }
    }
    out
}
