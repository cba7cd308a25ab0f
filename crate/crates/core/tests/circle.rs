use std::f64::consts::PI;

use nildyn::circle::{circle_dist, rotation_number, CircleMap};
use proptest::prelude::*;

const RES: usize = 4096;
const ITERS: usize = 20_000;

fn arnold(rho: f64, k: f64) -> CircleMap {
    CircleMap::from_fn(|x| x + rho + k / (2.0 * PI) * (2.0 * PI * x).sin(), RES).unwrap()
}

fn shear(a: f64) -> CircleMap {
    CircleMap::from_fn(|x| x + a / (2.0 * PI) * (2.0 * PI * x).sin(), RES).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn rotation_number_is_a_conjugacy_invariant(rho in 0.0f64..1.0, k in 0.0f64..0.9, a in -0.8f64..0.8) {
        let f = arnold(rho, k);
        let h = shear(a);
        let g = h.compose(&f).unwrap().compose(&h.inverse().unwrap()).unwrap();
        let (rf, rg) = (rotation_number(&f, ITERS), rotation_number(&g, ITERS));
        prop_assert!(circle_dist(rf.value, rg.value) <= rf.error_bound + rg.error_bound + 1e-9);
    }

    #[test]
    fn rigid_rotation_is_exact(rho in 0.0f64..1.0) {
        let r = rotation_number(&CircleMap::rotation(rho, 64), 1000);
        prop_assert!(circle_dist(r.value, rho) < 1e-9);
    }

    #[test]
    fn inverse_reverses_rotation(rho in 0.0f64..1.0, k in 0.0f64..0.9) {
        let f = arnold(rho, k);
        let r = rotation_number(&f, ITERS);
        let ri = rotation_number(&f.inverse().unwrap(), ITERS);
        prop_assert!(circle_dist(r.value, -ri.value) <= r.error_bound + ri.error_bound + 1e-9);
    }
}

#[test]
fn mode_locked_map_has_rational_number() {
    // strong coupling locks rho near 0 onto 0
    let r = rotation_number(&arnold(0.01, 0.5), ITERS);
    assert!(circle_dist(r.value, 0.0) <= r.error_bound);
}
