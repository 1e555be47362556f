//! Identities of the cylinder functions on randomized grids.

use mrcmt::specfun::{cylinder_pair_scaled, hankel1, hankel2, bessel_j, Scaled};
use num_complex::Complex64;
use proptest::prelude::*;
use std::f64::consts::PI;

fn order() -> impl Strategy<Value = Complex64> {
    (-5.0..220.0f64, -3.0..3.0f64).prop_map(|(re, im)| Complex64::new(re, im))
}

fn nonnegative_order() -> impl Strategy<Value = Complex64> {
    (0.0..220.0f64, -3.0..3.0f64).prop_map(|(re, im)| Complex64::new(re, im))
}

fn negative_order() -> impl Strategy<Value = Complex64> {
    (-8.0..0.0f64, -3.0..3.0f64).prop_map(|(re, im)| Complex64::new(re, im))
}

fn argument() -> impl Strategy<Value = Complex64> {
    (-1.3..2.35f64, -0.5..0.5f64).prop_map(|(lg, im)| {
        let re = 10f64.powf(lg);
        Complex64::new(re, im * re.min(1.0))
    })
}

fn rel_scaled(a: Scaled, b: Scaled) -> f64 {
    let diff = a - b;
    if diff.is_zero() {
        return 0.0;
    }
    let scale = a.ln_abs().max(b.ln_abs());
    (diff.ln_abs() - scale).exp()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn wronskian(nu in nonnegative_order(), z in argument()) {
        let p = cylinder_pair_scaled(nu, z).unwrap();
        let w = p.j_value * p.h2_derivative - p.j_derivative * p.h2_value;
        let expected = Scaled::from_complex(Complex64::new(0.0, -2.0 / PI) / z);
        let e = rel_scaled(w, expected);
        prop_assert!(e < 1e-9, "ν={} z={} rel={:e}", nu, z, e);
    }

    // At negative order J and H⁽²⁾ are nearly parallel, so the Wronskian is a
    // small difference of large products; it is checked against their size.
    #[test]
    fn wronskian_negative_order(nu in negative_order(), z in argument()) {
        let p = cylinder_pair_scaled(nu, z).unwrap();
        let a = p.j_value * p.h2_derivative;
        let b = p.j_derivative * p.h2_value;
        let expected = Scaled::from_complex(Complex64::new(0.0, -2.0 / PI) / z);
        let diff = (a - b) - expected;
        let scale = a.ln_abs().max(b.ln_abs()).max(expected.ln_abs());
        let e = if diff.is_zero() { 0.0 } else { (diff.ln_abs() - scale).exp() };
        prop_assert!(e < 1e-9, "ν={} z={} rel={:e}", nu, z, e);
    }

    #[test]
    fn three_term_recurrence(nu in order(), z in argument()) {
        let lower = cylinder_pair_scaled(nu - 1.0, z).unwrap();
        let mid = cylinder_pair_scaled(nu, z).unwrap();
        let upper = cylinder_pair_scaled(nu + 1.0, z).unwrap();
        let factor = 2.0 * nu / z;
        let j_lhs = lower.j_value + upper.j_value;
        let j_rhs = mid.j_value.scale(factor);
        let h_lhs = lower.h2_value + upper.h2_value;
        let h_rhs = mid.h2_value.scale(factor);
        // Measured against the largest term so isolated zeros do not dominate.
        let j_scale = lower.j_value.ln_abs().max(upper.j_value.ln_abs()).max(j_rhs.ln_abs());
        let h_scale = lower.h2_value.ln_abs().max(upper.h2_value.ln_abs()).max(h_rhs.ln_abs());
        let ej = ((j_lhs - j_rhs).ln_abs() - j_scale).exp();
        let eh = ((h_lhs - h_rhs).ln_abs() - h_scale).exp();
        prop_assert!(ej < 1e-8, "J: ν={} z={} rel={:e}", nu, z, ej);
        prop_assert!(eh < 1e-8, "H: ν={} z={} rel={:e}", nu, z, eh);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn real_order_real_argument_conjugation(nu in 0.0..60.0f64, x in 0.1..80.0f64) {
        let order = Complex64::new(nu, 0.0);
        let z = Complex64::new(x, 0.0);
        let j = bessel_j(order, z);
        prop_assume!(j.is_ok());
        let j = j.unwrap();
        prop_assert!(j.value.im.abs() <= 1e-13 * j.value.norm().max(1e-300));
        let (Ok(h1), Ok(h2)) = (hankel1(order, z), hankel2(order, z)) else {
            return Ok(());
        };
        let e = (h2.value - h1.value.conj()).norm() / h2.value.norm();
        prop_assert!(e < 1e-12, "rel={:e}", e);
    }
}
