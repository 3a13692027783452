use calib_core::comass::{
    build_torus_form, comass_optimize, comass_optimize_seeded, conformal_comass_factor, ComassOptions,
    TorusFormSpec,
};
use calib_core::exterior::{evaluate, simple_from_frame, BlockMetric, Form, Frame};
use proptest::prelude::*;

fn form(dim: usize, degree: usize) -> impl Strategy<Value = Form> {
    let len = Form::zeros(dim, degree).coeffs().len();
    prop::collection::vec(-1.0..1.0f64, len).prop_map(move |c| Form::from_coeffs(dim, degree, c).unwrap())
}

fn frame(dim: usize, k: usize) -> impl Strategy<Value = Frame> {
    prop::collection::vec(prop::collection::vec(-1.0..1.0f64, dim), k)
        .prop_filter_map("independent vectors", move |v| Frame::new(dim, v).ok())
}

fn plane_in_r3() -> impl Strategy<Value = Frame> {
    frame(3, 2)
}

fn quick(k: usize, seed: u64) -> ComassOptions {
    ComassOptions::for_degree(k).with_restarts(16).with_seed(seed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn optimizer_dominates_seeded_planes(
        (phi, plane, w) in (2usize..=3).prop_flat_map(|k| (form(5, k), frame(5, k), prop::collection::vec(0.3..3.0f64, 5))),
        seed in any::<u64>()
    ) {
        let g = BlockMetric::new(w).unwrap();
        let value = evaluate(&phi, &simple_from_frame(&plane, &g).unwrap()).unwrap();
        let est = comass_optimize_seeded(&phi, &g, &quick(phi.degree(), seed), &[plane]).unwrap();
        prop_assert!(value <= est.lower_bound + 1e-9, "{} > {}", value, est.lower_bound);
    }

    #[test]
    fn comass_is_absolutely_homogeneous(phi in form(5, 2), c in -4.0..4.0f64, seed in any::<u64>()) {
        prop_assume!(c.abs() > 1e-3);
        let g = BlockMetric::flat(5);
        let options = quick(2, seed);
        let base = comass_optimize(&phi, &g, &options).unwrap().lower_bound;
        let scaled = comass_optimize(&phi.scaled(c), &g, &options).unwrap().lower_bound;
        prop_assert!((scaled - c.abs() * base).abs() <= 1e-8 * c.abs() * base.max(1e-12));
    }

    #[test]
    fn conformal_law_holds(
        (phi, w) in (1usize..=3).prop_flat_map(|k| (form(5, k), prop::collection::vec(0.5..2.0f64, 5))),
        lambda in 0.25..4.0f64,
        seed in any::<u64>()
    ) {
        let g = BlockMetric::new(w).unwrap();
        let options = quick(phi.degree(), seed);
        let base = comass_optimize(&phi, &g, &options).unwrap().lower_bound;
        let scaled = comass_optimize(&phi, &g.scaled(lambda).unwrap(), &options).unwrap().lower_bound;
        let factor = conformal_comass_factor(phi.degree(), lambda).unwrap();
        prop_assert!((scaled / (factor * base) - 1.0).abs() <= 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn torus_forms_have_comass_at_most_one(
        alpha in plane_in_r3(),
        beta in plane_in_r3(),
        lambda in -1.0..=1.0f64,
        mu in -1.0..=1.0f64,
        seed in any::<u64>()
    ) {
        let spec = TorusFormSpec::new(2, alpha, beta, lambda, mu).unwrap();
        let form = build_torus_form(&spec).unwrap();
        let g = BlockMetric::flat(spec.ambient_dim());
        let est = comass_optimize(&form, &g, &ComassOptions::for_degree(4).with_restarts(64).with_seed(seed)).unwrap();
        prop_assert!(est.lower_bound <= 1.0 + 1e-6);
    }

    #[test]
    fn torus_forms_reach_one_with_a_unit_weight(
        alpha in plane_in_r3(),
        beta in plane_in_r3(),
        other in -1.0..=1.0f64,
        unit_on_x in any::<bool>(),
        seed in any::<u64>()
    ) {
        let (lambda, mu) = if unit_on_x { (1.0, other) } else { (other, 1.0) };
        let spec = TorusFormSpec::new(2, alpha, beta, lambda, mu).unwrap();
        let form = build_torus_form(&spec).unwrap();
        let g = BlockMetric::flat(spec.ambient_dim());
        let est = comass_optimize(&form, &g, &ComassOptions::for_degree(4).with_seed(seed)).unwrap();
        prop_assert!(est.lower_bound >= 1.0 - 1e-6, "{}", est.lower_bound);
        prop_assert!(est.lower_bound <= 1.0 + 1e-6);
    }

    #[test]
    fn negated_summands_keep_the_bound(
        alpha in plane_in_r3(),
        beta in plane_in_r3(),
        negate_x in any::<bool>(),
        seed in any::<u64>()
    ) {
        let (lambda, mu) = if negate_x { (-1.0, 1.0) } else { (1.0, -1.0) };
        let spec = TorusFormSpec::new(2, alpha, beta, lambda, mu).unwrap();
        let form = build_torus_form(&spec).unwrap();
        let g = BlockMetric::flat(spec.ambient_dim());
        let est = comass_optimize(&form, &g, &ComassOptions::for_degree(4).with_restarts(64).with_seed(seed)).unwrap();
        prop_assert!(est.lower_bound <= 1.0 + 1e-6);
    }
}
