//! Fixed-priority preemptive uniprocessor schedulability.
//!
//! Periodic tasks are released synchronously at time zero (the critical
//! instant), which is the worst case for static priorities, so the first job
//! of every task determines schedulability.

use crate::model::{JobStream, TaskSet};
use crate::{Error, Result};

/// Relative slack used when comparing a response time against its deadline
/// and when deciding whether `L / P` sits on an integer.
const REL_TOL: f64 = 1e-9;
/// Fixed-point convergence test, relative to the deadline.
const CONVERGENCE_TOL: f64 = 1e-12;

/// Default cap on `hyperperiod * denominator` for the simulation oracle.
pub const DEFAULT_HYPERPERIOD_CAP: u64 = 1_000_000;

/// Task indices, highest priority first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PriorityOrder(Vec<usize>);

impl PriorityOrder {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; order.len()];
        for &i in &order {
            if i >= order.len() || std::mem::replace(&mut seen[i], true) {
                return Err(Error::param(format!("{order:?} is not a permutation")));
            }
        }
        Ok(PriorityOrder(order))
    }

    /// Rate monotonic: ascending period, ties to the lower index.
    pub fn rate_monotonic(ts: &TaskSet) -> Self {
        let mut order: Vec<usize> = (0..ts.len()).collect();
        // stable sort keeps index order among equal periods
        order.sort_by_key(|&i| ts.tasks()[i].period());
        PriorityOrder(order)
    }

    /// Deadline monotonic: ascending relative deadline, ties to the lower index.
    pub fn deadline_monotonic(streams: &[JobStream]) -> Self {
        let mut order: Vec<usize> = (0..streams.len()).collect();
        order.sort_by(|&a, &b| streams[a].rel_deadline.total_cmp(&streams[b].rel_deadline));
        PriorityOrder(order)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Position of task `i` in the order (0 = highest priority).
    pub fn rank_of(&self, i: usize) -> Option<usize> {
        self.0.iter().position(|&j| j == i)
    }
}

pub fn rm_order(ts: &TaskSet) -> PriorityOrder {
    PriorityOrder::rate_monotonic(ts)
}

pub fn dm_order(streams: &[JobStream]) -> PriorityOrder {
    PriorityOrder::deadline_monotonic(streams)
}

/// Worst-case response time of one task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResponseTime {
    Bounded(f64),
    ExceedsDeadline,
}

impl ResponseTime {
    pub fn value(self) -> Option<f64> {
        match self {
            ResponseTime::Bounded(l) => Some(l),
            ResponseTime::ExceedsDeadline => None,
        }
    }

    pub fn meets_deadline(self) -> bool {
        matches!(self, ResponseTime::Bounded(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResponseTimeResult {
    /// Indexed like the task set, not like the priority order.
    pub per_task: Vec<ResponseTime>,
    pub schedulable: bool,
}

/// `ceil(x)`, treating values within a relative `REL_TOL` above an integer as
/// that integer so rounding noise in `L / P` does not add a phantom release.
fn releases_in(window: f64, period: f64) -> f64 {
    let x = window / period;
    let c = x.ceil();
    let below = c - 1.0;
    if below >= 1.0 && x - below <= REL_TOL * x {
        below
    } else {
        c.max(1.0)
    }
}

/// Response time of task `i` under `order`: the least fixed point of
/// `L = c_i + sum_{j in hp(i)} ceil(L / P_j) c_j`.
///
/// Iteration starts from `c_i + sum_{j in hp(i)} c_j`, which lies below the
/// least fixed point, and stops as soon as an iterate passes the deadline.
pub fn response_time(ts: &TaskSet, order: &PriorityOrder, i: usize) -> ResponseTime {
    let rank = order
        .rank_of(i)
        .expect("task index must appear in the priority order");
    let tasks = ts.tasks();
    let me = tasks[i];
    let hp: Vec<(f64, f64)> = order.as_slice()[..rank]
        .iter()
        .map(|&j| (tasks[j].period() as f64, tasks[j].exec_time()))
        .collect();
    response_time_with(me.exec_time(), me.deadline(), &hp)
}

fn response_time_with(exec: f64, deadline: f64, hp: &[(f64, f64)]) -> ResponseTime {
    let limit = deadline * (1.0 + REL_TOL);
    let mut l = exec + hp.iter().map(|&(_, c)| c).sum::<f64>();
    loop {
        if l > limit {
            return ResponseTime::ExceedsDeadline;
        }
        let next = exec
            + hp
                .iter()
                .map(|&(p, c)| releases_in(l, p) * c)
                .sum::<f64>();
        if (next - l).abs() <= CONVERGENCE_TOL * deadline {
            return if next > limit {
                ResponseTime::ExceedsDeadline
            } else {
                ResponseTime::Bounded(next)
            };
        }
        l = next;
    }
}

/// Response times of every task under rate monotonic priorities.
pub fn analyze(ts: &TaskSet) -> ResponseTimeResult {
    let order = rm_order(ts);
    let per_task: Vec<ResponseTime> = (0..ts.len()).map(|i| response_time(ts, &order, i)).collect();
    let schedulable = per_task.iter().all(|r| r.meets_deadline());
    ResponseTimeResult {
        per_task,
        schedulable,
    }
}

/// Exact rate monotonic test for synchronous release.
pub fn rm_schedulable(ts: &TaskSet) -> bool {
    // demand above capacity can never be met; this is exact, not a bound
    if ts.utilization() > 1.0 + REL_TOL {
        return false;
    }
    let order = rm_order(ts);
    let tasks = ts.tasks();
    let mut hp: Vec<(f64, f64)> = Vec::with_capacity(ts.len());
    for &i in order.as_slice() {
        let t = tasks[i];
        if !response_time_with(t.exec_time(), t.deadline(), &hp).meets_deadline() {
            return false;
        }
        hp.push((t.period() as f64, t.exec_time()));
    }
    true
}

/// Liu–Layland utilization bound `n (2^{1/n} - 1)`.
pub fn ll_bound(n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::param("the Liu-Layland bound needs n >= 1"));
    }
    let n = n as f64;
    // exp_m1 keeps precision for very large n
    Ok(n * (std::f64::consts::LN_2 / n).exp_m1())
}

fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Smallest denominator `d <= max_den` with `x * d` integral (within 1e-9).
fn common_denominator(values: &[f64], max_den: u64) -> Option<u64> {
    (1..=max_den).find(|&d| {
        values.iter().all(|&x| {
            let scaled = x * d as f64;
            (scaled - scaled.round()).abs() <= 1e-9 * scaled.abs().max(1.0)
        })
    })
}

/// Simulation oracle: runs preemptive rate monotonic scheduling from a
/// synchronous release over one hyperperiod in exact integer time and reports
/// whether every job meets its deadline.
///
/// Execution times and deadlines are scaled to integers by their smallest
/// common denominator (at most 4096). Refuses instances whose scaled
/// hyperperiod exceeds `cap` quanta.
pub fn brute_force_schedulable(ts: &TaskSet, cap: u64) -> Result<bool> {
    let tasks = ts.tasks();
    let mut fractional: Vec<f64> = tasks.iter().map(|t| t.exec_time()).collect();
    fractional.extend(tasks.iter().map(|t| t.deadline()));
    let den = common_denominator(&fractional, 4096).ok_or_else(|| {
        Error::param("execution times have no common denominator <= 4096")
    })? as u128;

    let mut hyper: u128 = 1;
    for t in tasks {
        let p = t.period() as u128;
        hyper = hyper / gcd(hyper, p) * p;
        if hyper * den > cap as u128 {
            return Err(Error::HyperperiodTooLarge {
                quanta: hyper * den,
                cap,
            });
        }
    }
    let horizon = (hyper * den) as u64;

    let scale = |x: f64| (x * den as f64).round() as u64;
    let order = rm_order(ts);
    // priority-sorted parameters
    let period: Vec<u64> = order.as_slice().iter().map(|&i| tasks[i].period() * den as u64).collect();
    let exec: Vec<u64> = order.as_slice().iter().map(|&i| scale(tasks[i].exec_time())).collect();
    let deadline: Vec<u64> = order.as_slice().iter().map(|&i| scale(tasks[i].deadline())).collect();
    let n = period.len();

    let mut remaining = exec.clone();
    let mut release = vec![0u64; n];
    let mut next_release = period.clone();
    let mut now = 0u64;

    loop {
        let upcoming = *next_release.iter().min().expect("non-empty");
        match remaining.iter().position(|&r| r > 0) {
            Some(k) => {
                let run = remaining[k].min(upcoming - now);
                now += run;
                remaining[k] -= run;
                if remaining[k] == 0 && now > release[k] + deadline[k] {
                    return Ok(false);
                }
            }
            None => now = upcoming,
        }
        if now == upcoming {
            for k in 0..n {
                if next_release[k] == now {
                    // D <= P, so unfinished work here has missed its deadline
                    if remaining[k] > 0 {
                        return Ok(false);
                    }
                    if now >= horizon {
                        continue;
                    }
                    remaining[k] = exec[k];
                    release[k] = now;
                    next_release[k] = now + period[k];
                }
            }
            if now >= horizon {
                return Ok(true);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Task;

    fn ts(spec: &[(u64, f64)]) -> TaskSet {
        TaskSet::new(spec.iter().map(|&(p, c)| Task::new(p, c).unwrap()).collect()).unwrap()
    }

    fn stream(d: f64) -> JobStream {
        JobStream::new(0, 0.1, d, 1.0).unwrap()
    }

    #[test]
    fn rate_monotonic_orders() {
        assert_eq!(rm_order(&ts(&[(10, 1.0), (5, 1.0)])).as_slice(), &[1, 0]);
        assert_eq!(rm_order(&ts(&[(5, 1.0), (5, 1.0)])).as_slice(), &[0, 1]);
        assert_eq!(rm_order(&ts(&[(3, 1.0), (8, 1.0), (11, 1.0)])).as_slice(), &[0, 1, 2]);
    }

    #[test]
    fn deadline_monotonic_orders() {
        let s: Vec<JobStream> = [10.0, 2.0, 5.0].iter().map(|&d| stream(d)).collect();
        assert_eq!(dm_order(&s).as_slice(), &[1, 2, 0]);
        let s: Vec<JobStream> = [4.0, 4.0, 4.0].iter().map(|&d| stream(d)).collect();
        assert_eq!(dm_order(&s).as_slice(), &[0, 1, 2]);
        assert_eq!(dm_order(&[stream(3.0)]).as_slice(), &[0]);
    }

    #[test]
    fn priority_order_validation() {
        assert!(PriorityOrder::new(vec![1, 0, 2]).is_ok());
        assert!(PriorityOrder::new(vec![1, 1]).is_err());
        assert!(PriorityOrder::new(vec![0, 2]).is_err());
    }

    #[test]
    fn response_time_examples() {
        let set = ts(&[(2, 1.0), (4, 1.0)]);
        assert_eq!(response_time(&set, &rm_order(&set), 1), ResponseTime::Bounded(2.0));

        let fig2 = ts(&[(10, 8.0), (18, 3.06)]);
        assert_eq!(response_time(&fig2, &rm_order(&fig2), 1), ResponseTime::ExceedsDeadline);
        assert_eq!(response_time(&fig2, &rm_order(&fig2), 0), ResponseTime::Bounded(8.0));

        // Fixed point 1 + ceil(2/2) * 1 = 2; the processor stays busy until 3.
        let barely = ts(&[(2, 1.0), (3, 1.0)]);
        assert_eq!(response_time(&barely, &rm_order(&barely), 1), ResponseTime::Bounded(2.0));
        let bumped = barely.with_task(0, Task::new(2, 1.0 + 2e-6).unwrap());
        assert_eq!(response_time(&bumped, &rm_order(&bumped), 1), ResponseTime::ExceedsDeadline);
    }

    #[test]
    fn highest_priority_task_has_no_interference() {
        let set = ts(&[(7, 2.5), (3, 1.25), (20, 1.0)]);
        let order = rm_order(&set);
        assert_eq!(response_time(&set, &order, 1), ResponseTime::Bounded(1.25));
    }

    #[test]
    fn rm_schedulable_examples() {
        assert!(rm_schedulable(&ts(&[(2, 1.0), (3, 1.0)])));
        assert!(!rm_schedulable(&ts(&[(10, 8.0), (18, 3.06)])));
        assert!(!rm_schedulable(&ts(&[(2, 1.0), (3, 1.5)])));
        assert!(rm_schedulable(&ts(&[(4, 4.0)])));
        let result = analyze(&ts(&[(10, 8.0), (18, 3.06)]));
        assert!(!result.schedulable);
        assert_eq!(result.per_task[0], ResponseTime::Bounded(8.0));
    }

    #[test]
    fn ll_bound_values() {
        assert_eq!(ll_bound(1).unwrap(), 1.0);
        assert!((ll_bound(2).unwrap() - 2.0 * (2f64.sqrt() - 1.0)).abs() < 1e-15);
        assert!((ll_bound(1_000_000).unwrap() - std::f64::consts::LN_2).abs() < 1e-6);
        assert!(ll_bound(0).is_err());
    }

    #[test]
    fn brute_force_examples() {
        assert!(brute_force_schedulable(&ts(&[(2, 1.0), (3, 1.0)]), DEFAULT_HYPERPERIOD_CAP).unwrap());
        assert!(!brute_force_schedulable(&ts(&[(2, 1.0), (3, 1.5)]), DEFAULT_HYPERPERIOD_CAP).unwrap());
        assert!(!brute_force_schedulable(&ts(&[(10, 8.0), (18, 3.06)]), DEFAULT_HYPERPERIOD_CAP).unwrap());
        assert!(brute_force_schedulable(&ts(&[(4, 4.0)]), DEFAULT_HYPERPERIOD_CAP).unwrap());
    }

    #[test]
    fn brute_force_refuses_large_hyperperiods() {
        let big = ts(&[(99_991, 1.0), (99_989, 1.0)]);
        assert!(matches!(
            brute_force_schedulable(&big, DEFAULT_HYPERPERIOD_CAP),
            Err(Error::HyperperiodTooLarge { .. })
        ));
    }

    #[test]
    fn brute_force_constrained_deadline() {
        // (4, 1, D=1) preempts (6, 2, D=3); second job finishes at 3.
        let set = TaskSet::new(vec![
            Task::with_deadline(4, 1.0, 1.0).unwrap(),
            Task::with_deadline(6, 2.0, 3.0).unwrap(),
        ])
        .unwrap();
        assert!(brute_force_schedulable(&set, DEFAULT_HYPERPERIOD_CAP).unwrap());
        let tight = set.with_task(1, Task::with_deadline(6, 2.0, 2.5).unwrap());
        assert!(!brute_force_schedulable(&tight, DEFAULT_HYPERPERIOD_CAP).unwrap());
        assert!(!rm_schedulable(&tight));
    }
}
