use baroreflex::models::{
    efferent_sigmoids, forcing_terms, full_index, full_rhs, reduced_rhs, wall_strain, ParameterSet, SubjectBaseline,
};
use baroreflex::signal::ForcingModel;
use proptest::prelude::*;

fn subject(id: u32) -> (SubjectBaseline, ParameterSet) {
    let base = SubjectBaseline::subject(id).unwrap();
    (base, ParameterSet::for_subject(&base).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn wall_strain_increases_with_pressure(p in 20.0f64..250.0, id in 1u32..=3) {
        let (_, params) = subject(id);
        let h = 1e-3;
        prop_assert!(wall_strain(p + h, &params) > wall_strain(p, &params));
        let e = wall_strain(p, &params);
        prop_assert!(e > 0.0 && e < 1.0);
    }

    #[test]
    fn sigmoids_move_in_opposite_directions(n in -0.5f64..1.5, id in 1u32..=3) {
        let (_, params) = subject(id);
        let h = 1e-4;
        let (gp0, gs0) = efferent_sigmoids(n, &params);
        let (gp1, gs1) = efferent_sigmoids(n + h, &params);
        prop_assert!(gp1 > gp0);
        prop_assert!(gs1 < gs0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    // Full model rows with B = 0, strains at K_b ε_w and T_p at K_p G_p
    // collapse to the reduced model.
    #[test]
    fn reduction_matches_the_full_rows(
        sbp in 60.0f64..200.0,
        t in 0.0f64..60.0,
        ts in -0.5f64..1.5,
        ts_del in -0.5f64..1.5,
        hr in 40.0f64..180.0,
        id in 1u32..=3,
    ) {
        let (base, mut p) = subject(id);
        p.b = 0.0;
        let fm = ForcingModel::constant(sbp, (0.0, 60.0), base, p);
        let p_a = sbp - baroreflex::models::thoracic_pressure(t, &p);
        let eps_wa = wall_strain(p_a, &p);
        let n = (1.0 - p.k_b) * eps_wa;
        let (g_p, _) = efferent_sigmoids(n, &p);
        let mut x = [p.k_b * wall_strain(sbp, &p), p.k_b * eps_wa, p.k_p * g_p, ts, hr];
        let mut xd = x;
        xd[full_index::T_S] = ts_del;
        x[full_index::T_S] = ts;
        let full = full_rhs(t, &x, &xd, &p, sbp);
        let red = reduced_rhs(t, &[ts, hr], &[ts_del, 0.0], &p, Some(&fm));
        prop_assert!((full[full_index::T_S] - red[0]).abs() < 1e-12);
        prop_assert!((full[full_index::H] - red[1]).abs() < 1e-12 * hr.max(1.0) * 10.0);
        let (f, g) = forcing_terms(p_a, &p);
        let homogeneous = reduced_rhs(t, &[ts, hr], &[ts_del, 0.0], &p, None);
        prop_assert!((red[0] - homogeneous[0] - f).abs() < 1e-15);
        prop_assert!((red[1] - homogeneous[1] - g).abs() < 1e-12);
    }

    #[test]
    fn reduced_rhs_is_affine_in_the_states(
        x in prop::array::uniform2(-5.0f64..5.0),
        y in prop::array::uniform2(-5.0f64..5.0),
        xd in prop::array::uniform2(-5.0f64..5.0),
        yd in prop::array::uniform2(-5.0f64..5.0),
        a in -3.0f64..3.0,
        t in 0.0f64..60.0,
    ) {
        let (base, p) = subject(2);
        let fm = ForcingModel::constant(110.0, (0.0, 60.0), base, p);
        let lin = |s: &[f64; 2], sd: &[f64; 2]| {
            let r = reduced_rhs(t, s, sd, &p, Some(&fm));
            let c = reduced_rhs(t, &[0.0, 0.0], &[0.0, 0.0], &p, Some(&fm));
            [r[0] - c[0], r[1] - c[1]]
        };
        let comb = [x[0] + a * y[0], x[1] + a * y[1]];
        let comb_d = [xd[0] + a * yd[0], xd[1] + a * yd[1]];
        let lhs = lin(&comb, &comb_d);
        let (l1, l2) = (lin(&x, &xd), lin(&y, &yd));
        for i in 0..2 {
            let rhs = l1[i] + a * l2[i];
            prop_assert!((lhs[i] - rhs).abs() < 1e-10 * (1.0 + rhs.abs()));
        }
    }
}
