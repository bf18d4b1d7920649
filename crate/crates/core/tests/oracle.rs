use proptest::prelude::*;
use rand::Rng;
use sharpsched::gen::{self, TaskSetGenerator};
use sharpsched::rng::rng_from_seed;
use sharpsched::sched::{
    self, brute_force_schedulable, ll_bound, response_time, rm_order, rm_schedulable, ResponseTime,
    DEFAULT_HYPERPERIOD_CAP,
};
use sharpsched::{Task, TaskSet};

/// Task set with integer periods in `1..=max_period` and execution times on
/// a `quantum` grid.
fn random_set<R: Rng>(n: usize, max_period: u64, quantum: f64, rng: &mut R) -> TaskSet {
    let tasks = (0..n)
        .map(|_| {
            let period = rng.random_range(1..=max_period);
            let slots = (period as f64 / quantum).round() as u64;
            let c = rng.random_range(1..=slots) as f64 * quantum;
            Task::new(period, c).unwrap()
        })
        .collect();
    TaskSet::new(tasks).unwrap()
}

#[test]
fn analysis_matches_simulation_on_small_sets() {
    let mut rng = rng_from_seed(2024);
    let mut disagreements = Vec::new();
    for trial in 0..3000 {
        let n = 1 + trial % 4;
        let ts = random_set(n, 12, 0.25, &mut rng);
        let fast = rm_schedulable(&ts);
        let slow = brute_force_schedulable(&ts, DEFAULT_HYPERPERIOD_CAP).unwrap();
        if fast != slow {
            disagreements.push(ts.to_string());
        }
    }
    assert!(disagreements.is_empty(), "{disagreements:#?}");
}

#[test]
fn analysis_matches_simulation_on_restricted_periods() {
    let mut rng = rng_from_seed(8);
    for _ in 0..200 {
        let n = rng.random_range(2..=6);
        let periods = gen::periods_from_set(n, &gen::RESTRICTED_PERIODS, &mut rng).unwrap();
        let u = rng.random_range(0.7..1.0);
        let utils = gen::uunisort(n, u, &mut rng).unwrap();
        // quantize to quarter units so the hyperperiod stays small
        let tasks: Vec<Task> = periods
            .iter()
            .zip(&utils)
            .map(|(&p, &x)| {
                let c = ((x * p as f64) * 4.0).floor().max(1.0) / 4.0;
                Task::new(p, c.min(p as f64)).unwrap()
            })
            .collect();
        let ts = TaskSet::new(tasks).unwrap();
        assert_eq!(
            rm_schedulable(&ts),
            brute_force_schedulable(&ts, DEFAULT_HYPERPERIOD_CAP).unwrap(),
            "{ts}"
        );
    }
}

#[test]
fn liu_layland_bound_is_sufficient() {
    let mut rng = rng_from_seed(5);
    for n in [2, 3, 8, 20] {
        let u = ll_bound(n).unwrap() - 0.01;
        for _ in 0..500 {
            let ts = TaskSetGenerator::uunisort().generate(n, u, &mut rng).unwrap();
            assert!(rm_schedulable(&ts), "{ts}");
        }
    }
}

#[test]
fn barely_schedulable_sets_sit_on_the_edge() {
    let mut rng = rng_from_seed(9);
    for _ in 0..200 {
        let n = rng.random_range(2..=6);
        let mut periods = gen::periods_uniform(n, 20, 39, &mut rng).unwrap();
        periods.sort_unstable();
        periods.dedup();
        if periods.len() < 2 || periods[periods.len() - 1] >= 2 * periods[0] {
            continue;
        }
        let ts = gen::barely_schedulable(&periods).unwrap();
        assert!(rm_schedulable(&ts), "{ts}");
        assert!(ts.utilization() >= ll_bound(ts.len()).unwrap() - 1e-9);
        for i in 0..ts.len() {
            let t = ts.get(i).unwrap();
            let bumped = ts.with_task(i, t.with_exec_time(t.exec_time() + 1e-6).unwrap());
            assert!(!rm_schedulable(&bumped), "bumping task {i} of {ts}");
        }
    }
}

fn arb_taskset() -> impl Strategy<Value = TaskSet> {
    prop::collection::vec((1u64..200, 0.01f64..1.0), 1..8).prop_map(|v| {
        let n = v.len() as f64;
        TaskSet::new(
            v.into_iter()
                .map(|(p, f)| Task::new(p, f * p as f64 / n).unwrap())
                .collect(),
        )
        .unwrap()
    })
}

proptest! {
    #[test]
    fn response_time_is_a_fixed_point(ts in arb_taskset()) {
        let order = rm_order(&ts);
        for &i in order.as_slice() {
            if let ResponseTime::Bounded(r) = response_time(&ts, &order, i) {
                let rank = order.rank_of(i).unwrap();
                let interference: f64 = order.as_slice()[..rank]
                    .iter()
                    .map(|&j| {
                        let tj = ts.get(j).unwrap();
                        (r / tj.period() as f64 - 1e-9).ceil().max(1.0) * tj.exec_time()
                    })
                    .sum();
                let rhs = ts.get(i).unwrap().exec_time() + interference;
                prop_assert!((r - rhs).abs() <= 1e-6 * r.max(1.0), "R={r} rhs={rhs}");
                prop_assert!(r <= ts.get(i).unwrap().deadline() * (1.0 + 1e-9));
            }
        }
    }

    #[test]
    fn shrinking_a_task_keeps_schedulability(ts in arb_taskset(), pick in 0usize..8, f in 0.0f64..1.0) {
        prop_assume!(rm_schedulable(&ts));
        let i = pick % ts.len();
        let t = ts.get(i).unwrap();
        let smaller = ts.with_task(i, t.with_exec_time(t.exec_time() * f.max(1e-3)).unwrap());
        prop_assert!(rm_schedulable(&smaller));
    }

    #[test]
    fn removing_a_task_keeps_schedulability(ts in arb_taskset(), pick in 0usize..8) {
        prop_assume!(ts.len() > 1 && rm_schedulable(&ts));
        prop_assert!(rm_schedulable(&ts.without(pick % ts.len()).unwrap()));
    }

    #[test]
    fn overload_is_never_schedulable(ts in arb_taskset()) {
        if ts.utilization() > 1.0 + 1e-6 {
            prop_assert!(!rm_schedulable(&ts));
        }
        if ts.utilization() <= ll_bound(ts.len()).unwrap() {
            prop_assert!(rm_schedulable(&ts));
        }
    }

    #[test]
    fn analysis_agrees_with_priority_order(ts in arb_taskset()) {
        let res = sched::analyze(&ts);
        prop_assert_eq!(res.schedulable, rm_schedulable(&ts));
        prop_assert_eq!(res.schedulable, res.per_task.iter().all(|r| r.meets_deadline()));
    }
}
