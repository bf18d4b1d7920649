use sharpsched::apsim::{synthetic_sweep, SyntheticSweepParams};
use sharpsched::gen::TaskSetGenerator;
use sharpsched::threshold::{locate_threshold, sweep, width_scaling, SweepParams, DEFAULT_EPSILON};

fn small(n: usize, generator: TaskSetGenerator) -> SweepParams {
    SweepParams {
        n,
        u_min: 0.5,
        u_max: 1.0,
        step: 0.05,
        trials: 200,
        generator,
    }
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

#[test]
fn sweeps_do_not_depend_on_thread_count() {
    let params = small(16, TaskSetGenerator::uunisort());
    let one = in_pool(1, || sweep(&params, 3).unwrap());
    let four = in_pool(4, || sweep(&params, 3).unwrap());
    assert_eq!(one, four);
    assert_eq!(one.to_csv(), four.to_csv());

    let ap = SyntheticSweepParams {
        n_streams: 10,
        u_min: 0.6,
        u_max: 1.0,
        step: 0.1,
        trials: 8,
        horizon_factor: 20.0,
        ..Default::default()
    };
    let one = in_pool(1, || synthetic_sweep(&ap, 3).unwrap());
    let four = in_pool(4, || synthetic_sweep(&ap, 3).unwrap());
    assert_eq!(one, four);
}

#[test]
fn curve_falls_from_one_to_zero() {
    let curve = sweep(&small(32, TaskSetGenerator::uunisort()), 1).unwrap();
    let p = curve.p_hat();
    assert_eq!(p[0], 1.0);
    assert_eq!(*p.last().unwrap(), 0.0);
    let fit = curve.fitted();
    assert!(fit.windows(2).all(|w| w[0] >= w[1]));
    for pt in &curve.points {
        assert!(pt.ci_lo <= pt.p_hat && pt.p_hat <= pt.ci_hi);
    }
    let est = locate_threshold(&curve, DEFAULT_EPSILON).unwrap();
    assert!(est.u_star_lo <= est.u_star && est.u_star <= est.u_star_hi);
    assert!(est.width > 0.0);
    assert!((0.75..0.95).contains(&est.u_star), "{est:?}");
}

#[test]
fn restricted_periods_push_the_threshold_up() {
    let uu = locate_threshold(&sweep(&small(16, TaskSetGenerator::uunisort()), 4).unwrap(), 0.1).unwrap();
    let rp = locate_threshold(&sweep(&small(16, TaskSetGenerator::restricted_period()), 4).unwrap(), 0.1).unwrap();
    assert!(rp.u_star > uu.u_star + 0.05, "{rp:?} vs {uu:?}");
}

#[test]
fn width_scaling_needs_three_sizes() {
    let base = small(8, TaskSetGenerator::uunisort());
    assert!(width_scaling(&[8, 16], &base, 0.1, 1).is_err());
    let ws = width_scaling(&[8, 16, 32], &base, 0.1, 1).unwrap();
    assert_eq!(ws.points.len(), 3);
    assert!(ws.slope < 0.0);
}
