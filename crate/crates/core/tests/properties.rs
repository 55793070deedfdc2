use magswim::atlas::{chart_ranges, eval_chart, symmetric_pair};
use magswim::optimize::{axial_bound, optimal_n};
use magswim::*;
use nalgebra::Rotation3;
use proptest::prelude::*;

fn dec_of(name: &str) -> PDecomposition {
    decompose(&bundled(name).unwrap()).unwrap()
}

fn arb_mat() -> impl Strategy<Value = Mat3> {
    proptest::array::uniform9(-1.0f64..1.0).prop_map(|a| Mat3::from_row_slice(&a))
}

fn arb_unit() -> impl Strategy<Value = Vec3> {
    (-1.0f64..1.0, 0.0f64..std::f64::consts::TAU).prop_map(|(z, a)| {
        let r = (1.0 - z * z).sqrt();
        Vec3::new(r * a.cos(), r * a.sin(), z)
    })
}

/// Symmetric positive definite rotational mobility with a random coupling block.
fn arb_swimmer() -> impl Strategy<Value = Swimmer> {
    (arb_mat(), arb_mat(), arb_unit()).prop_map(|(a, m12, m)| {
        let m22 = a * a.transpose() + Mat3::identity() * 0.2;
        Swimmer::new("random", None, m12, m22, m).unwrap()
    })
}

fn sorted_vax(dec: &PDecomposition, ma: f64, c: f64) -> Vec<f64> {
    let mut v: Vec<f64> = solve_equilibria(dec, ma, c).unwrap().equilibria.iter().map(|e| e.v_ax).collect();
    v.sort_by(f64::total_cmp);
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn equilibria_satisfy_both_conditions(which in 0usize..2, u in 0.0f64..1.1, c in -0.999f64..0.999) {
        let dec = dec_of(["A", "B"][which]);
        let max_ma = chart_ranges(&dec, 200).max_ma;
        let sol = solve_equilibria(&dec, u * max_ma, c).unwrap();
        for e in &sol.equilibria {
            let (r1, r2) = e.residuals(&dec);
            let tol = if e.near_fold { 1e-6 } else { 1e-10 };
            prop_assert!(r1 < tol && r2 < tol, "{r1:e} {r2:e}");
            prop_assert!((e.ma - u * max_ma).abs() < 1e-12);
        }
    }

    #[test]
    fn counts_come_in_fours(which in 0usize..2, u in 0.0f64..1.1, c in -0.999f64..0.999) {
        let dec = dec_of(["A", "B"][which]);
        let max_ma = chart_ranges(&dec, 200).max_ma;
        let sol = solve_equilibria(&dec, u * max_ma, c).unwrap();
        if !sol.flagged() {
            prop_assert!([0, 4, 8].contains(&sol.equilibria.len()), "{}", sol.equilibria.len());
        }
    }

    #[test]
    fn symmetric_partner_reverses_spectrum(which in 0usize..4, theta in -3.14f64..3.14, phi in 0.01f64..3.13) {
        let dec = dec_of(bundled_names()[which]);
        let e = eval_chart(&dec, theta, phi);
        let (t2, p2) = symmetric_pair(theta, phi);
        let f = eval_chart(&dec, t2, p2);
        prop_assert!((e.ma - f.ma).abs() < 1e-12 * (1.0 + e.ma.abs()));
        prop_assert!((e.cos_psi - f.cos_psi).abs() < 1e-12);
        prop_assert!((e.v_ax - f.v_ax).abs() < 1e-12);
        let mut a: Vec<_> = e.eigenvalues.eigenvalues.iter().map(|z| -z).collect();
        let mut b: Vec<_> = f.eigenvalues.eigenvalues.to_vec();
        let key = |z: &num_complex::Complex64| (z.re, z.im);
        a.sort_by(|x, y| key(x).partial_cmp(&key(y)).unwrap());
        b.sort_by(|x, y| key(x).partial_cmp(&key(y)).unwrap());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).norm() < 1e-10, "{a:?} {b:?}");
        }
    }

    #[test]
    fn equilibria_pair_up(which in 0usize..2, u in 0.0f64..1.0, c in -0.999f64..0.999) {
        let dec = dec_of(["A", "B"][which]);
        let max_ma = chart_ranges(&dec, 200).max_ma;
        let sol = solve_equilibria(&dec, u * max_ma, c).unwrap();
        prop_assume!(!sol.flagged());
        for e in &sol.equilibria {
            let hit = sol.equilibria.iter().any(|f| (f.e3 + e.e3).norm() < 1e-8 && (f.b + e.b).norm() < 1e-8);
            prop_assert!(hit);
            let partners = sol.equilibria.iter().filter(|f| (f.e3 + e.e3).norm() < 1e-8).count();
            prop_assert_eq!(partners, 1);
        }
    }

    #[test]
    fn axial_bound_is_maximal_at_optimum(s in arb_swimmer(), n in arb_unit()) {
        let best = optimal_n(&s.m12, &s.m22).unwrap();
        prop_assert!(axial_bound(&s.m12, &s.m22, &n) <= axial_bound(&s.m12, &s.m22, &best) + 1e-9);
    }

    #[test]
    fn scaling_mobility_scales_drive_and_speed(s in arb_swimmer(), k in 0.2f64..5.0, u in 0.05f64..0.95, c in -0.95f64..0.95) {
        let dec = decompose(&s).unwrap();
        let scaled = Swimmer::new("scaled", None, s.m12 * k, s.m22 * k, s.m).unwrap();
        let dk = decompose(&scaled).unwrap();
        let ma = u * chart_ranges(&dec, 100).max_ma;
        let sol = solve_equilibria(&dec, ma, c).unwrap();
        prop_assume!(!sol.flagged());
        let a = sorted_vax(&dec, ma, c);
        let b = sorted_vax(&dk, k * ma, c);
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((k * x - y).abs() < 1e-9 * (1.0 + y.abs()), "{a:?} {b:?}");
        }
    }

    #[test]
    fn body_rotation_leaves_regimes_unchanged(s in arb_swimmer(), axis in arb_unit(), angle in 0.0f64..3.0, u in 0.05f64..0.95, c in -0.95f64..0.95) {
        let r = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle).into_inner();
        let dec = decompose(&s).unwrap();
        let dr = decompose(&s.rotated(&r)).unwrap();
        let ma = u * chart_ranges(&dec, 100).max_ma;
        let sol = solve_equilibria(&dec, ma, c).unwrap();
        prop_assume!(!sol.flagged());
        let rot = solve_equilibria(&dr, ma, c).unwrap();
        prop_assert_eq!(sol.equilibria.len(), rot.equilibria.len());
        prop_assert_eq!(sol.stable_count(), rot.stable_count());
        let (a, b) = (sorted_vax(&dec, ma, c), sorted_vax(&dr, ma, c));
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9 * (1.0 + x.abs()));
        }
    }
}
