//! Coupler integration properties: integrator order, step and grid
//! refinement, window growth, limits and symmetries of S.

use mrcmt::bendmode::{find_bend_modes_with_extent, BendGeometry, BendMode};
use mrcmt::coupler::{
    integrate_cme, integrate_cme_with_step, straight_modes, CouplerGeometry, CouplerNumerics, SolvedCoupler,
};
use mrcmt::error::Error;
use mrcmt::waveguide::{SlabGeometry, StraightMode};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;

const LAMBDA: f64 = 1.043;

fn device() -> (BendGeometry, SlabGeometry) {
    (
        BendGeometry::disk(5.0, 1.5, 1.0).unwrap(),
        SlabGeometry::new(1.5, 1.0, 0.4).unwrap(),
    )
}

fn modes(n_bend: usize, wavelength: f64) -> (Vec<BendMode>, Vec<StraightMode>) {
    let (bend, slab) = device();
    (
        find_bend_modes_with_extent(&bend, wavelength, n_bend, 12.5).unwrap(),
        straight_modes(&slab, wavelength, 1).unwrap(),
    )
}

fn geometry(gap: f64, numerics: CouplerNumerics) -> CouplerGeometry {
    let (bend, slab) = device();
    CouplerGeometry::new(&bend, &slab, gap, &numerics).unwrap()
}

fn max_abs_diff(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    (a - b).iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// Propagation of each port mode over an arc `dtheta` or a length `dz`.
fn port_propagation(bend: &[BendMode], straight: &[StraightMode], dtheta: f64, dz: f64) -> DVector<Complex64> {
    let i = Complex64::new(0.0, 1.0);
    DVector::from_iterator(
        bend.len() + straight.len(),
        bend.iter()
            .map(|m| (-i * m.angular_order * dtheta).exp())
            .chain(straight.iter().map(|m| (-i * m.propagation_constant * dz).exp())),
    )
}

#[test]
fn rk4_error_ratio_is_sixteen() {
    let (b, s) = modes(3, LAMBDA);
    let g = geometry(0.2, CouplerNumerics::default());
    let h = 0.1;
    let reference = integrate_cme_with_step(&b, &s, &g, h / 8.0).unwrap();
    let coarse = integrate_cme_with_step(&b, &s, &g, h).unwrap();
    let fine = integrate_cme_with_step(&b, &s, &g, h / 2.0).unwrap();
    let e1 = max_abs_diff(coarse.total(), reference.total());
    let e2 = max_abs_diff(fine.total(), reference.total());
    let ratio = e1 / e2;
    println!("err(h) = {e1:.3e}, err(h/2) = {e2:.3e}, ratio {ratio:.2}");
    assert!((ratio - 16.0).abs() <= 0.2 * 16.0);
}

#[test]
fn default_step_matches_fine_reference() {
    let (b, s) = modes(3, LAMBDA);
    let g = geometry(0.2, CouplerNumerics::default());
    let t = integrate_cme(&b, &s, &g).unwrap();
    let reference = integrate_cme_with_step(&b, &s, &g, g.z_step / 16.0).unwrap();
    let d = max_abs_diff(t.total(), reference.total());
    println!("|T − T(h/16)| = {d:.3e}");
    assert!(d <= 1e-6);
    let half = integrate_cme_with_step(&b, &s, &g, g.z_step / 2.0).unwrap();
    assert!(max_abs_diff(t.total(), half.total()) <= 1e-6);
}

#[test]
fn halving_x_step_barely_moves_s() {
    let (b, s) = modes(3, LAMBDA);
    let base = SolvedCoupler::solve(&b, &s, &geometry(0.2, CouplerNumerics::default())).unwrap();
    let numerics = CouplerNumerics {
        x_step: 0.05,
        ..CouplerNumerics::default()
    };
    let fine = SolvedCoupler::solve(&b, &s, &geometry(0.2, numerics)).unwrap();
    let d = max_abs_diff(&base.scattering.entries, &fine.scattering.entries);
    println!("|ΔS| for x_step/2 = {d:.3e}");
    assert!(d <= 1e-4);
}

#[test]
fn window_growth_sensitivity() {
    let (b, s) = modes(3, LAMBDA);
    let base = SolvedCoupler::solve(&b, &s, &geometry(0.2, CouplerNumerics::default())).unwrap();
    let outer = CouplerNumerics {
        window_outer: 3.0,
        ..CouplerNumerics::default()
    };
    let inner = CouplerNumerics {
        window_inner: 4.0,
        ..CouplerNumerics::default()
    };
    let so = SolvedCoupler::solve(&b, &s, &geometry(0.2, outer)).unwrap();
    let si = SolvedCoupler::solve(&b, &s, &geometry(0.2, inner)).unwrap();
    let d_outer = max_abs_diff(&base.scattering.entries, &so.scattering.entries);
    let d_inner = max_abs_diff(&base.scattering.entries, &si.scattering.entries);
    println!("|ΔS| outer +1 μm = {d_outer:.3e}, inner −1 μm = {d_inner:.3e}");
    // The radiating TE2 field reaches x_r; the straight ↔ TE0 entries are
    // far less sensitive than the full matrix.
    assert!(d_inner <= 1e-3);
    assert!(d_outer <= 5e-3);
    let e = |m: &SolvedCoupler, r: usize, c: usize| m.scattering.entries[(r, c)];
    for (r, c) in [(0, 0), (0, 3), (3, 0), (3, 3)] {
        assert!((e(&base, r, c) - e(&so, r, c)).norm() <= 1e-3, "entry ({r},{c})");
    }
}

#[test]
fn longer_window_with_rereferenced_ports() {
    let (b, s) = modes(3, LAMBDA);
    let g0 = geometry(0.2, CouplerNumerics::default());
    let z_o = g0.window.z_o;
    let g1 = geometry(
        0.2,
        CouplerNumerics {
            window_half_length: Some(1.25 * z_o),
            ..CouplerNumerics::default()
        },
    );
    let s0 = SolvedCoupler::solve(&b, &s, &g0).unwrap().scattering.entries;
    let s1 = SolvedCoupler::solve(&b, &s, &g1).unwrap().scattering.entries;
    let (i0, o0) = g0.port_angles();
    let (i1, o1) = g1.port_angles();
    let out = port_propagation(&b, &s, o1 - o0, 0.25 * z_o);
    let inp = port_propagation(&b, &s, i0 - i1, 0.25 * z_o);
    let back = DMatrix::from_fn(4, 4, |r, c| s1[(r, c)] / (out[r] * inp[c]));
    let through = (back[(3, 3)] - s0[(3, 3)]).norm();
    let cross = (back[(3, 0)] - s0[(3, 0)]).norm().max((back[(0, 3)] - s0[(0, 3)]).norm());
    println!(
        "z_o +25%: |ΔS_BA| = {through:.3e}, TE0 ↔ straight {cross:.3e}, whole matrix {:.3e}",
        max_abs_diff(&back, &s0)
    );
    assert!(through <= 1e-3);
    assert!(cross <= 1e-2);
}

#[test]
fn wide_gap_is_diagonal_propagation() {
    let (bend, slab) = device();
    let g = geometry(2.0, CouplerNumerics::default());
    let (theta_i, theta_o) = g.port_angles();
    let length = g.window.z_o - g.window.z_i;
    for n_bend in [1, 3] {
        let b = find_bend_modes_with_extent(&bend, LAMBDA, n_bend, g.required_table_radius()).unwrap();
        let s = straight_modes(&slab, LAMBDA, 1).unwrap();
        let sc = SolvedCoupler::solve(&b, &s, &g).unwrap();
        let expected = DMatrix::from_diagonal(&port_propagation(&b, &s, theta_o - theta_i, length));
        let dev = &sc.scattering.entries - &expected;
        let whole = dev.iter().map(|v| v.norm()).fold(0.0, f64::max);
        // Fundamental bend mode and straight mode only.
        let idx = [0, n_bend];
        let core = idx
            .iter()
            .flat_map(|&r| idx.iter().map(move |&c| (r, c)))
            .map(|(r, c)| dev[(r, c)].norm())
            .fold(0.0, f64::max);
        println!("g = 2, N_b = {n_bend}: whole {whole:.3e}, TE0/straight {core:.3e}");
        assert!(core <= 1e-2);
        if n_bend == 1 {
            assert!(whole <= 1e-2);
        }
    }
}

#[test]
fn identical_couplers_give_identical_s() {
    let (b, s) = modes(3, LAMBDA);
    let first = SolvedCoupler::solve(&b, &s, &geometry(0.2, CouplerNumerics::default())).unwrap();
    let second = SolvedCoupler::solve(&b, &s, &geometry(0.2, CouplerNumerics::default())).unwrap();
    assert_eq!(first.scattering, second.scattering);
}

#[test]
fn fundamental_bend_mode_couples_to_the_bus() {
    let (b, s) = modes(3, LAMBDA);
    let sc = SolvedCoupler::solve(&b, &s, &geometry(0.2, CouplerNumerics::default())).unwrap();
    let coupling = sc.scattering.straight_bend()[(0, 0)].norm();
    println!("|S_B,a0| = {coupling:.4}");
    assert!(coupling > 0.1);
}

#[test]
fn reciprocity_of_the_fundamental_exchange() {
    let (b, s) = modes(3, LAMBDA);
    let e = SolvedCoupler::solve(&b, &s, &geometry(0.2, CouplerNumerics::default()))
        .unwrap()
        .scattering
        .entries;
    let pair = (e[(0, 3)] - e[(3, 0)]).norm();
    let all = max_abs_diff(&e, &e.transpose());
    println!("|S − Sᵀ|: TE0 ↔ straight {pair:.3e}, whole matrix {all:.3e}");
    assert!(pair <= 1e-2);
}

#[test]
fn window_too_narrow_for_the_straight_tail() {
    let (b, s) = modes(1, LAMBDA);
    let g = geometry(
        0.2,
        CouplerNumerics {
            window_outer: 0.05,
            ..CouplerNumerics::default()
        },
    );
    match SolvedCoupler::solve(&b, &s, &g) {
        Err(Error::Window(message)) => println!("{message}"),
        other => panic!("expected a window error, got {other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(5))]

    #[test]
    fn coupler_is_passive_in_port_power(wavelength in 1.02..1.06f64, gap in 0.15..0.5f64) {
        let (b, s) = modes(3, wavelength);
        let sc = SolvedCoupler::solve(&b, &s, &geometry(gap, CouplerNumerics::default())).unwrap();
        let gain = sc.power_gain().unwrap();
        prop_assert!(gain <= 1.0 + 5e-3, "gain {gain}");
        let again = SolvedCoupler::solve(&b, &s, &geometry(gap, CouplerNumerics::default())).unwrap();
        prop_assert_eq!(&sc.scattering, &again.scattering);
    }
}
