use diffmig_core::estimate::{
    bootstrap_effective, estimate_beta_eff, group_intervals, BootstrapSettings, DiffusionSum,
    PathIncrements,
};
use diffmig_core::greens::{nx_if, DomainRect, ImageSumControl, Interval};
use diffmig_core::model::{extract_increments, TrackSeries};
use diffmig_core::proportions::{grid_partition, proportion_axis, proportion_matrix, AreaRect, MotionParams};
use diffmig_core::simulate::fold_into;
use proptest::prelude::*;

fn track() -> impl Strategy<Value = TrackSeries> {
    (2usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec(1e-3f64..5.0, n),
            prop::collection::vec(-1e3f64..1e3, n + 1),
            prop::collection::vec(-1e3f64..1e3, n + 1),
            -1e4f64..1e4,
        )
            .prop_map(|(dts, xs, ys, t0)| {
                let mut t = vec![t0];
                for dt in dts {
                    let last = *t.last().unwrap();
                    t.push(last + dt);
                }
                TrackSeries::from_columns("p", &t, &xs, &ys).unwrap()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn singleton_drift_is_bit_exact_endpoint_slope(tr in track()) {
        let (x, _) = extract_increments(&tr).unwrap();
        let groups = group_intervals(&x, 0.0).unwrap();
        if groups.iter().all(|g| g.len() == 1) {
            let expected = (tr.last().x - tr.first().x) / (tr.last().t - tr.first().t);
            prop_assert_eq!(estimate_beta_eff(&x, &groups).unwrap(), expected);
        }
    }

    #[test]
    fn group_sizes_and_weights_are_complete(tr in track(), tol in 0.0f64..0.5) {
        let (x, _) = extract_increments(&tr).unwrap();
        let groups = group_intervals(&x, tol).unwrap();
        prop_assert_eq!(groups.iter().map(|g| g.len()).sum::<usize>(), x.len());
        let w: f64 = groups.iter().map(|g| g.weight).sum();
        prop_assert!((w - 1.0).abs() < 1e-12);
        prop_assert!(groups.windows(2).all(|p| p[0].representative_dt < p[1].representative_dt));
    }

    #[test]
    fn row_sums_over_random_grids(
        lx in 0.5f64..5.0, ly in 0.5f64..5.0,
        cx in (0.05f64..0.45, 0.55f64..0.95), cy in (0.05f64..0.45, 0.55f64..0.95),
        bx in -0.5f64..0.5, by in -0.5f64..0.5, d in 0.01f64..2.0, horizon in 0.1f64..3.0,
    ) {
        let dom = DomainRect::new(lx, ly).unwrap();
        let fin = grid_partition(&dom, &[cx.0, cx.1], &[cy.0, cy.1]).unwrap();
        let init = vec![AreaRect::new("i", 0.1 * lx, 0.4 * lx, 0.5 * ly, 0.9 * ly).unwrap()];
        let p = MotionParams::isotropic(bx, by, d);
        let m = proportion_matrix(&init, &fin, &p, horizon, &dom, &ImageSumControl::default(), true).unwrap();
        prop_assert!(m.max_row_sum_deviation() <= 1e-10);
        prop_assert!(m.entries.iter().flatten().all(|w| (0.0..=1.0).contains(w)));
    }

    #[test]
    fn zero_drift_detailed_balance(
        a in (0.0f64..1.0, 0.0f64..1.0), b in (0.0f64..1.0, 0.0f64..1.0), s in 0.001f64..3.0,
    ) {
        let ia = Interval::new(a.0.min(a.1), a.0.max(a.1) + 1e-3).unwrap();
        let ib = Interval::new(b.0.min(b.1), b.0.max(b.1) + 1e-3).unwrap();
        let l = 1.001;
        let ctrl = ImageSumControl::default();
        let full = Interval::new(0.0, l).unwrap();
        let lhs = proportion_axis(&ia, &ib, 0.0, s, l, &ctrl).unwrap() * nx_if(&ia, &full, 0.0, s, l, &ctrl).unwrap().value;
        let rhs = proportion_axis(&ib, &ia, 0.0, s, l, &ctrl).unwrap() * nx_if(&ib, &full, 0.0, s, l, &ctrl).unwrap().value;
        prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1e-300), "{} vs {}", lhs, rhs);
    }

    #[test]
    fn fold_lands_inside(v in -1e3f64..1e3, l in 0.1f64..10.0) {
        let f = fold_into(v, l);
        prop_assert!((0.0..=l).contains(&f));
    }
}

#[test]
fn bootstrap_does_not_depend_on_thread_count() {
    let t: Vec<f64> = (0..60).map(|k| k as f64 * 0.5 + if k % 3 == 0 { 0.25 } else { 0.0 }).collect();
    let x: Vec<f64> = t.iter().map(|v| (v * 1.3).sin() + 0.1 * v).collect();
    let y: Vec<f64> = t.iter().map(|v| (v * 0.7).cos()).collect();
    let p = PathIncrements::from_track(&TrackSeries::from_columns("p", &t, &x, &y).unwrap()).unwrap();
    let g = p.groups(0.0).unwrap();
    let s = BootstrapSettings { replicates: 300, level: 0.9, seed: 17 };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| bootstrap_effective(&p, &g, &s, DiffusionSum::Banded).unwrap())
    };
    let a = run(1);
    let b = run(3);
    assert_eq!(a, b);
    assert_eq!(a.replicates, b.replicates);
}
