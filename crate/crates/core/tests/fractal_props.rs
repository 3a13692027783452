use calib_core::fractal::{
    box_dim, cantor_generate, default_depth_range, product_with_interval, ratio_for_dimension, CantorSpec,
};
use calib_core::whitney::DyadicCellSet;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn dyadic_ratios_give_exact_counts(m in 2u32..=4, depth in 1u32..=5, side_exp in 0u32..=2) {
        prop_assume!(m * depth + side_exp <= 20);
        let ratio = 2f64.powi(-(m as i32));
        let side = (1u64 << side_exp) as f64;
        let k = cantor_generate(&CantorSpec::new(ratio, depth, side)).unwrap();
        prop_assert_eq!(k.depth(), m * depth + side_exp);
        for i in 0..=depth {
            let count = k.coarsen(m * i + side_exp).unwrap().len();
            prop_assert_eq!(count, 1usize << i);
        }
    }

    #[test]
    fn deleting_cells_never_increases_counts(
        depth in 3u32..=6,
        keep in prop::collection::vec(any::<bool>(), 64)
    ) {
        let k = cantor_generate(&CantorSpec::new(1.0 / 3.0, depth, 1.0)).unwrap();
        let cells: Vec<Vec<u64>> = k.cells().collect();
        let kept: Vec<Vec<u64>> = cells
            .iter()
            .enumerate()
            .filter(|(i, _)| keep[i % keep.len()])
            .map(|(_, c)| c.clone())
            .collect();
        let sub = DyadicCellSet::new(1, 1.0, k.depth(), kept).unwrap();
        for d in 0..=k.depth() {
            prop_assert!(sub.coarsen(d).unwrap().len() <= k.coarsen(d).unwrap().len());
        }
        if !sub.is_empty() {
            let range = default_depth_range(&CantorSpec::new(1.0 / 3.0, depth, 1.0));
            let full = box_dim(&k, range.clone()).unwrap().slope;
            let part = box_dim(&sub, range).unwrap().slope;
            prop_assert!(part <= full + 0.02, "{} > {}", part, full);
        }
    }

    #[test]
    fn dimension_targets_round_trip(alpha in 0.05..0.95f64) {
        let r = ratio_for_dimension(alpha).unwrap();
        let spec = CantorSpec::new(r, 3, 1.0);
        prop_assert!((spec.analytic_dimension() - alpha).abs() < 1e-12);
    }
}

fn additivity(spec: CantorSpec, extra: usize, tol: f64) {
    let k = cantor_generate(&spec).unwrap();
    let range = default_depth_range(&spec);
    let base = box_dim(&k, range.clone()).unwrap();
    let product = box_dim(&product_with_interval(&k, extra).unwrap(), range).unwrap();
    let gap = product.slope - base.slope - extra as f64;
    assert!(gap.abs() <= tol, "ratio {}: {} vs {} + {}", spec.ratio, product.slope, base.slope, extra);
    assert!((base.slope - spec.analytic_dimension()).abs() <= 0.05, "{} vs {}", base.slope, spec.analytic_dimension());
}

#[test]
fn interval_factor_adds_one() {
    additivity(CantorSpec::new(1.0 / 3.0, 8, 1.0), 1, 1e-9);
    additivity(CantorSpec::new(0.4, 8, 1.0), 1, 1e-9);
    additivity(CantorSpec::new(0.25, 5, 1.0).with_grid_depth(11), 1, 1e-9);
    additivity(CantorSpec::new(0.25, 4, 1.0), 2, 1e-9);
}

#[test]
fn empty_set_has_flagged_estimate() {
    let e = DyadicCellSet::empty(1, 1.0, 6).unwrap();
    let est = box_dim(&e, 2..=6).unwrap();
    assert!(est.empty);
    assert_eq!(est.slope, 0.0);
}
