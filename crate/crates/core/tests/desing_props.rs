use std::f64::consts::TAU;
use std::sync::OnceLock;

use calib_core::comass::{build_torus_form, TorusFormSpec};
use calib_core::desing::{
    assemble_unchecked, build_calibration_and_metric, extract_singular_set, nearest_point_projection, AmbientModel,
    ModelParams, Sheet,
};
use calib_core::exterior::{evaluate, simple_from_frame, Frame};
use calib_core::whitney::{wrap, DyadicCellSet};
use proptest::prelude::*;

const RHO: f64 = 4.0;

fn model(n: usize, j: usize, epsilon: f64, k: DyadicCellSet) -> AmbientModel {
    assemble_unchecked(&ModelParams::new(n, j, RHO, epsilon), k).unwrap()
}

/// A strongly curved graph, far from the flat case.
fn steep() -> &'static AmbientModel {
    static M: OnceLock<AmbientModel> = OnceLock::new();
    M.get_or_init(|| model(3, 1, 0.5, DyadicCellSet::new(1, RHO, 6, [[10u64], [40]]).unwrap()))
}

fn curve() -> &'static AmbientModel {
    static M: OnceLock<AmbientModel> = OnceLock::new();
    M.get_or_init(|| model(3, 1, 1e-2, DyadicCellSet::new(1, RHO, 6, [[10u64], [11], [33]]).unwrap()))
}

fn surface() -> &'static AmbientModel {
    static M: OnceLock<AmbientModel> = OnceLock::new();
    M.get_or_init(|| model(4, 2, 1e-2, DyadicCellSet::new(2, RHO, 4, [[3u64, 5], [3, 6], [12, 1]]).unwrap()))
}

fn models() -> impl Strategy<Value = &'static AmbientModel> {
    prop_oneof![Just(()).prop_map(|_| curve()), Just(()).prop_map(|_| surface())]
}

fn base_point(j: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..RHO, j)
}

/// Closest graph point by dense sampling within `reach` of `p`.
fn brute_force_distance(model: &AmbientModel, p: f64, t: f64, reach: f64) -> f64 {
    let steps = 12_000;
    (0..=steps)
        .map(|i| {
            let s = -reach + 2.0 * reach * i as f64 / steps as f64;
            let f = model.function().value(&[(p + s).rem_euclid(RHO)]).unwrap();
            (s * s + wrap(t - f, TAU).powi(2)).sqrt()
        })
        .fold(f64::INFINITY, f64::min)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn projection_matches_dense_search(p in 0.0..RHO, dt in -0.8..0.8f64) {
        let m = steep();
        let t = m.function().value(&[p]).unwrap() + dt;
        let pr = nearest_point_projection(m, &[p, t]).unwrap();
        let brute = brute_force_distance(m, p, t, 1.0);
        prop_assert!((pr.distance - brute).abs() <= 1e-6, "{} vs {}", pr.distance, brute);
        let recomputed = (wrap(pr.base[0] - p, RHO).powi(2) + wrap(t - pr.height, TAU).powi(2)).sqrt();
        prop_assert!((recomputed - pr.distance).abs() <= 1e-12);
    }

    #[test]
    fn graph_points_are_fixed((m, p) in models().prop_flat_map(|m| (Just(m), base_point(m.j())))) {
        let mut q = p.clone();
        q.push(m.function().value(&p).unwrap());
        let pr = nearest_point_projection(m, &q).unwrap();
        prop_assert!(pr.distance <= 1e-12);
        for (a, b) in pr.base.iter().zip(&p) {
            prop_assert!(wrap(a - b, RHO).abs() <= 1e-10);
        }
    }

    #[test]
    fn metric_is_unweighted_on_the_graph((m, p) in models().prop_flat_map(|m| (Just(m), base_point(m.j())))) {
        let q = m.sheet_point(Sheet::Y, &p).unwrap();
        let cal = build_calibration_and_metric(m, &q).unwrap();
        prop_assert!((cal.w - 1.0).abs() <= 1e-9, "w = {}", cal.w);
    }

    #[test]
    fn both_sheets_are_calibrated(
        (m, p) in models().prop_flat_map(|m| (Just(m), base_point(m.j()))),
        y_sheet in any::<bool>()
    ) {
        let sheet = if y_sheet { Sheet::Y } else { Sheet::X };
        let q = m.sheet_point(sheet, &p).unwrap();
        let cal = build_calibration_and_metric(m, &q).unwrap();
        let xi = simple_from_frame(&m.sheet_frame(sheet, &p).unwrap(), &cal.metric).unwrap();
        let value = evaluate(&cal.phi(), &xi).unwrap();
        prop_assert!((value - 1.0).abs() <= 1e-6, "{:?}: {}", sheet, value);
    }

    #[test]
    fn vanishing_function_reduces_to_torus_form(
        j in 1usize..=2,
        coords in prop::collection::vec(-1.0..1.0f64, 4),
        p in base_point(2),
        t in -0.95..0.95f64
    ) {
        let c = 2;
        let m = model(c + j, j, 1e-3, DyadicCellSet::full(j, RHO, 3).unwrap());
        let q = m.ambient_point(&coords[..c], &coords[c..2 * c], &p[..j], t);
        let cal = build_calibration_and_metric(&m, &q).unwrap();
        prop_assert_eq!(cal.w, 1.0);
        prop_assert!(cal.metric.weights().iter().all(|&w| w == 1.0));
        let axes: Vec<usize> = (0..j).collect();
        let frame = Frame::axes(j + 1, &axes).unwrap();
        let psi = build_torus_form(&TorusFormSpec::new(c, frame.clone(), frame, 1.0, 1.0).unwrap()).unwrap();
        prop_assert_eq!(cal.phi(), psi);
    }
}

#[test]
fn singular_set_of_trivial_zero_sets() {
    for j in 1..=2 {
        let n = j + 2;
        let empty = model(n, j, 1e-3, DyadicCellSet::empty(j, RHO, 3).unwrap());
        let rep = extract_singular_set(&empty, 0.0).unwrap();
        assert!(rep.detected.is_empty() && rep.points.is_empty());
        let full = model(n, j, 1e-3, DyadicCellSet::full(j, RHO, 3).unwrap());
        let rep = extract_singular_set(&full, 0.0).unwrap();
        assert_eq!(rep.detected, *full.zero_set());
        assert_eq!(rep.hausdorff_cells, 0.0);
    }
}

#[test]
fn singular_set_matches_zero_set() {
    for m in [curve(), surface()] {
        let rep = extract_singular_set(m, 0.0).unwrap();
        assert_eq!(rep.detected, *m.zero_set());
        assert!(rep.spines_equal(m.j()));
    }
}
