//! Random task-set generators.

use std::fmt;

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::model::{Task, TaskSet};
use crate::{Error, Result};

/// Upper bound on whole-vector redraws in [`uunisort`] before giving up.
/// Only reachable when `u` is close to `n`, where feasible vectors are rare.
const MAX_REDRAWS: usize = 1_000_000;

/// Period set used for the restricted-period experiments.
pub const RESTRICTED_PERIODS: [u64; 8] = [3, 8, 11, 16, 20, 42, 120, 300];

fn check_target(n: usize, u: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::param("number of tasks must be at least 1"));
    }
    if !(u.is_finite() && u > 0.0 && u <= n as f64) {
        return Err(Error::param(format!(
            "target utilization must lie in (0, {n}], got {u}"
        )));
    }
    Ok(())
}

/// Draws `n` utilizations summing to `u`, uniformly over the simplex.
///
/// `n - 1` uniform cut points in `[0, u]` are sorted and the gaps between
/// consecutive points (including the endpoints 0 and `u`) become the
/// utilizations. Vectors with an entry above 1 or equal to 0 are discarded
/// and redrawn whole.
pub fn uunisort<R: Rng + ?Sized>(n: usize, u: f64, rng: &mut R) -> Result<Vec<f64>> {
    check_target(n, u)?;
    if n == 1 {
        return Ok(vec![u]);
    }
    let mut cuts = vec![0.0; n + 1];
    for _ in 0..MAX_REDRAWS {
        cuts[0] = 0.0;
        cuts[n] = u;
        for c in &mut cuts[1..n] {
            *c = rng.random::<f64>() * u;
        }
        cuts[1..n].sort_by(f64::total_cmp);
        let utils: Vec<f64> = cuts.windows(2).map(|w| w[1] - w[0]).collect();
        if utils.iter().all(|&x| x > 0.0 && x <= 1.0) {
            return Ok(utils);
        }
    }
    Err(Error::param(format!(
        "no feasible utilization vector for n = {n}, U = {u} after {MAX_REDRAWS} draws"
    )))
}

/// `n` copies of `u / n`.
pub fn equal_split(n: usize, u: f64) -> Result<Vec<f64>> {
    check_target(n, u)?;
    let share = u / n as f64;
    if share > 1.0 {
        return Err(Error::param(format!("per-task utilization {share} exceeds 1")));
    }
    Ok(vec![share; n])
}

/// `n` periods drawn uniformly from the integers in `[lo, hi]`.
pub fn periods_uniform<R: Rng + ?Sized>(n: usize, lo: u64, hi: u64, rng: &mut R) -> Result<Vec<u64>> {
    if lo == 0 || lo > hi {
        return Err(Error::param(format!("need 1 <= lo <= hi, got [{lo}, {hi}]")));
    }
    Ok((0..n).map(|_| rng.random_range(lo..=hi)).collect())
}

/// `n` periods drawn uniformly (with replacement) from `allowed`.
pub fn periods_from_set<R: Rng + ?Sized>(n: usize, allowed: &[u64], rng: &mut R) -> Result<Vec<u64>> {
    if allowed.is_empty() {
        return Err(Error::param("allowed period set is empty"));
    }
    if allowed.contains(&0) {
        return Err(Error::param("periods must be positive"));
    }
    Ok((0..n)
        .map(|_| *allowed.choose(rng).expect("non-empty"))
        .collect())
}

/// Builds a task set with `c_i = u_i * P_i` and implicit deadlines.
pub fn assemble_taskset(utilizations: &[f64], periods: &[u64]) -> Result<TaskSet> {
    if utilizations.len() != periods.len() {
        return Err(Error::param(format!(
            "{} utilizations but {} periods",
            utilizations.len(),
            periods.len()
        )));
    }
    let tasks = utilizations
        .iter()
        .zip(periods)
        .map(|(&u, &p)| {
            if !(u > 0.0 && u <= 1.0) {
                return Err(Error::param(format!("task utilization {u} outside (0, 1]")));
            }
            Task::new(p, (u * p as f64).min(p as f64))
        })
        .collect::<Result<Vec<_>>>()?;
    TaskSet::new(tasks)
}

/// The minimum-utilization task set that is barely schedulable under rate
/// monotonic priorities for the given periods:
/// `c_i = P_{i+1} - P_i` for `i < n`, and `c_n = P_n - 2 * (c_1 + ... + c_{n-1})`.
pub fn barely_schedulable(periods: &[u64]) -> Result<TaskSet> {
    if periods.is_empty() {
        return Err(Error::param("need at least one period"));
    }
    if periods[0] == 0 {
        return Err(Error::param("periods must be positive"));
    }
    if periods.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::param("periods must be strictly increasing"));
    }
    let n = periods.len();
    let mut exec: Vec<i128> = periods
        .windows(2)
        .map(|w| w[1] as i128 - w[0] as i128)
        .collect();
    let last = periods[n - 1] as i128 - 2 * exec.iter().sum::<i128>();
    if last <= 0 {
        return Err(Error::param(format!(
            "period spread too wide: last execution time would be {last}"
        )));
    }
    exec.push(last);
    let tasks = periods
        .iter()
        .zip(exec)
        .map(|(&p, c)| Task::new(p, c as f64))
        .collect::<Result<Vec<_>>>()?;
    TaskSet::new(tasks)
}

/// How a target utilization is split among tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UtilizationRule {
    UUniSort,
    EqualSplit,
}

/// How task periods are drawn.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PeriodRule {
    Uniform { lo: u64, hi: u64 },
    Set(Vec<u64>),
}

impl PeriodRule {
    /// Periods uniform over `[1, 10^5]`.
    pub fn default_uniform() -> Self {
        PeriodRule::Uniform { lo: 1, hi: 100_000 }
    }

    pub fn restricted() -> Self {
        PeriodRule::Set(RESTRICTED_PERIODS.to_vec())
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<u64>> {
        match self {
            PeriodRule::Uniform { lo, hi } => periods_uniform(n, *lo, *hi, rng),
            PeriodRule::Set(allowed) => periods_from_set(n, allowed, rng),
        }
    }
}

impl fmt::Display for PeriodRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PeriodRule::Uniform { lo, hi } => write!(f, "uniform:{lo}:{hi}"),
            PeriodRule::Set(v) => {
                let items: Vec<String> = v.iter().map(u64::to_string).collect();
                write!(f, "set:{}", items.join(","))
            }
        }
    }
}

impl std::str::FromStr for PeriodRule {
    type Err = Error;

    /// Accepts `uniform:LO:HI`, `set:P1,P2,...` and the alias `restricted`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "restricted" {
            return Ok(PeriodRule::restricted());
        }
        let bad = || Error::param(format!("unrecognized period rule `{s}`"));
        if let Some(rest) = s.strip_prefix("uniform:") {
            let (lo, hi) = rest.split_once(':').ok_or_else(bad)?;
            let lo = lo.trim().parse().map_err(|_| bad())?;
            let hi = hi.trim().parse().map_err(|_| bad())?;
            if lo == 0 || lo > hi {
                return Err(bad());
            }
            return Ok(PeriodRule::Uniform { lo, hi });
        }
        if let Some(rest) = s.strip_prefix("set:") {
            let v = rest
                .split(',')
                .map(|p| p.trim().parse::<u64>().map_err(|_| bad()))
                .collect::<Result<Vec<_>>>()?;
            if v.is_empty() || v.contains(&0) {
                return Err(bad());
            }
            return Ok(PeriodRule::Set(v));
        }
        Err(bad())
    }
}

/// Utilization rule plus period rule: everything needed to draw a random
/// task set of a given size and total utilization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskSetGenerator {
    pub utilization: UtilizationRule,
    pub periods: PeriodRule,
}

impl TaskSetGenerator {
    pub fn uunisort() -> Self {
        TaskSetGenerator {
            utilization: UtilizationRule::UUniSort,
            periods: PeriodRule::default_uniform(),
        }
    }

    pub fn equal_split() -> Self {
        TaskSetGenerator {
            utilization: UtilizationRule::EqualSplit,
            periods: PeriodRule::default_uniform(),
        }
    }

    pub fn restricted_period() -> Self {
        TaskSetGenerator {
            utilization: UtilizationRule::UUniSort,
            periods: PeriodRule::restricted(),
        }
    }

    /// Short label for output records: `uunisort`, `equal-split` or
    /// `restricted-period`.
    pub fn tag(&self) -> &'static str {
        match (&self.utilization, &self.periods) {
            (UtilizationRule::EqualSplit, _) => "equal-split",
            (UtilizationRule::UUniSort, PeriodRule::Set(_)) => "restricted-period",
            (UtilizationRule::UUniSort, PeriodRule::Uniform { .. }) => "uunisort",
        }
    }

    pub fn utilizations<R: Rng + ?Sized>(&self, n: usize, u: f64, rng: &mut R) -> Result<Vec<f64>> {
        match self.utilization {
            UtilizationRule::UUniSort => uunisort(n, u, rng),
            UtilizationRule::EqualSplit => equal_split(n, u),
        }
    }

    pub fn generate<R: Rng + ?Sized>(&self, n: usize, u: f64, rng: &mut R) -> Result<TaskSet> {
        let utils = self.utilizations(n, u, rng)?;
        let periods = self.periods.sample(n, rng)?;
        assemble_taskset(&utils, &periods)
    }
}

impl std::str::FromStr for UtilizationRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "uunisort" => Ok(UtilizationRule::UUniSort),
            "equal-split" | "equal" => Ok(UtilizationRule::EqualSplit),
            other => Err(Error::param(format!("unknown utilization rule `{other}`"))),
        }
    }
}

impl fmt::Display for UtilizationRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UtilizationRule::UUniSort => "uunisort",
            UtilizationRule::EqualSplit => "equal-split",
        })
    }
}
