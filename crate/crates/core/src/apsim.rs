//! Discrete-event simulation of preemptive deadline-monotonic scheduling of
//! aperiodic job streams, with synthetic utilization tracking.
//!
//! Synthetic utilization at time `t` is the sum of `c / D` over jobs with
//! `arrival <= t <= arrival + D`. A job stays in that set until its absolute
//! deadline even if it completes earlier. A job still holding work at its
//! deadline counts as a miss and is dropped.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;

use crate::model::{Job, JobStream};
use crate::rng::child_rng;
use crate::threshold::{utilization_grid, MuEstimate, ThresholdCurve};
use crate::{Error, Result};

/// Worst-case synthetic utilization bound for deadline monotonic
/// scheduling, `1 / (1 + sqrt(1/2))` (about 0.586).
pub const SYNTHETIC_UTILIZATION_BOUND: f64 = 0.585_786_437_626_905;

/// Default cap on a single stream's `c / D`.
pub const DEFAULT_MAX_CD_RATIO: f64 = 0.125;

/// Default relative-deadline range in milliseconds (log-uniform).
pub const DEFAULT_DEADLINE_RANGE: (f64, f64) = (10.0, 1000.0);

/// Parameters of the random stream generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamParams {
    pub n_streams: usize,
    pub max_cd_ratio: f64,
    pub deadline_range: (f64, f64),
    /// Long-run average synthetic utilization the streams should produce.
    pub target_avg_utilization: f64,
}

impl StreamParams {
    pub fn new(n_streams: usize, target_avg_utilization: f64) -> Self {
        StreamParams {
            n_streams,
            max_cd_ratio: DEFAULT_MAX_CD_RATIO,
            deadline_range: DEFAULT_DEADLINE_RANGE,
            target_avg_utilization,
        }
    }
}

fn check_stream_shape(n_streams: usize, max_cd_ratio: f64, (d_lo, d_hi): (f64, f64)) -> Result<()> {
    if n_streams == 0 {
        return Err(Error::param("need at least one job stream"));
    }
    if !(max_cd_ratio > 0.0 && max_cd_ratio <= 1.0) {
        return Err(Error::param(format!("c/D cap must lie in (0, 1], got {max_cd_ratio}")));
    }
    if !(d_lo > 0.0 && d_lo <= d_hi && d_hi.is_finite()) {
        return Err(Error::param(format!("bad deadline range [{d_lo}, {d_hi}]")));
    }
    Ok(())
}

/// `(c / D, D)` pairs: ratio uniform in `(0, cap]`, deadline log-uniform.
fn draw_shapes<R: Rng + ?Sized>(
    n_streams: usize,
    max_cd_ratio: f64,
    (d_lo, d_hi): (f64, f64),
    rng: &mut R,
) -> Vec<(f64, f64)> {
    let (a, b) = (d_lo.ln(), d_hi.ln());
    (0..n_streams)
        .map(|_| {
            let ratio = max_cd_ratio * (1.0 - rng.random::<f64>());
            let deadline = (a + (b - a) * rng.random::<f64>()).exp();
            (ratio, deadline)
        })
        .collect()
}

fn streams_with_duty(shapes: &[(f64, f64)], duty: f64) -> Result<Vec<JobStream>> {
    shapes
        .iter()
        .enumerate()
        .map(|(id, &(r, d))| JobStream::new(id, r * d, d, d * (1.0 / duty - 1.0)))
        .collect()
}

/// Draws `n_streams` job streams.
///
/// Each stream gets `c / D` uniform in `(0, max_cd_ratio]` and `D`
/// log-uniform over `deadline_range`. Each job is active for `D`, so a
/// stream with mean gap `g` is active a fraction `D / (D + g)` of the time.
/// All streams share the active fraction that makes the average synthetic
/// utilization equal to the target.
pub fn gen_streams<R: Rng + ?Sized>(params: &StreamParams, rng: &mut R) -> Result<Vec<JobStream>> {
    check_stream_shape(params.n_streams, params.max_cd_ratio, params.deadline_range)?;
    let target = params.target_avg_utilization;
    if !(target.is_finite() && target > 0.0) {
        return Err(Error::param(
            "target average utilization must be positive (zero means infinite gaps)",
        ));
    }
    let shapes = draw_shapes(params.n_streams, params.max_cd_ratio, params.deadline_range, rng);
    let duty = target / shapes.iter().map(|s| s.0).sum::<f64>();
    if duty >= 1.0 {
        return Err(Error::param(format!(
            "{} streams cannot sustain average synthetic utilization {target}",
            params.n_streams
        )));
    }
    streams_with_duty(&shapes, duty)
}

/// Like [`gen_streams`], but every stream is active a fraction `duty` of
/// the time regardless of the resulting average utilization.
pub fn gen_streams_with_duty<R: Rng + ?Sized>(
    n_streams: usize,
    max_cd_ratio: f64,
    deadline_range: (f64, f64),
    duty: f64,
    rng: &mut R,
) -> Result<Vec<JobStream>> {
    check_stream_shape(n_streams, max_cd_ratio, deadline_range)?;
    if !(duty > 0.0 && duty < 1.0) {
        return Err(Error::param(format!("duty cycle must lie in (0, 1), got {duty}")));
    }
    let shapes = draw_shapes(n_streams, max_cd_ratio, deadline_range, rng);
    streams_with_duty(&shapes, duty)
}

/// Releases the jobs of `stream` arriving before `horizon`.
///
/// The first arrival is one exponential gap after time zero and every later
/// arrival follows the previous job's absolute deadline by another gap.
pub fn release_jobs<R: Rng + ?Sized>(stream: &JobStream, horizon: f64, rng: &mut R) -> Vec<Job> {
    let gap = if stream.mean_gap > 0.0 {
        Some(Exp::new(1.0 / stream.mean_gap).expect("positive rate"))
    } else {
        None
    };
    let draw = |rng: &mut R| gap.map_or(0.0, |g| g.sample(rng));
    let mut jobs = Vec::new();
    let mut arrival = draw(rng);
    while arrival < horizon {
        jobs.push(Job {
            stream_id: stream.id,
            arrival,
            abs_deadline: arrival + stream.rel_deadline,
            exec_time: stream.exec_time,
        });
        arrival = arrival + stream.rel_deadline + draw(rng);
    }
    jobs
}

/// Releases every stream's jobs and merges them by `(arrival, stream_id)`.
pub fn release_all<R: Rng + ?Sized>(streams: &[JobStream], horizon: f64, rng: &mut R) -> Vec<Job> {
    let mut jobs: Vec<Job> = streams
        .iter()
        .flat_map(|s| release_jobs(s, horizon, rng))
        .collect();
    sort_jobs(&mut jobs);
    jobs
}

fn sort_jobs(jobs: &mut [Job]) {
    jobs.sort_by(|a, b| {
        a.arrival
            .total_cmp(&b.arrival)
            .then(a.stream_id.cmp(&b.stream_id))
    });
}

/// Maximum synthetic utilization of an arrival pattern. Jobs are active on
/// the closed interval `[arrival, abs_deadline]`, so a job arriving exactly
/// when another expires counts together with it.
pub fn peak_synthetic_utilization(jobs: &[Job]) -> f64 {
    // (time, departure?, delta): arrivals sort before departures at a tie
    let mut events: Vec<(f64, bool, f64)> = jobs
        .iter()
        .flat_map(|j| {
            let d = j.density();
            [(j.arrival, false, d), (j.abs_deadline, true, -d)]
        })
        .collect();
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut u = 0.0f64;
    let mut peak = 0.0f64;
    for (_, _, delta) in events {
        u += delta;
        peak = peak.max(u);
    }
    peak
}

/// Synthetic utilization at `t`, recomputed from scratch.
pub fn synthetic_utilization_at(jobs: &[Job], t: f64) -> f64 {
    jobs.iter()
        .filter(|j| j.arrival <= t && t <= j.abs_deadline)
        .map(Job::density)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub horizon: f64,
    /// Jobs arriving before `warmup_fraction * horizon` are left out of the
    /// counts in the report. The utilization peak covers the whole run.
    pub warmup_fraction: f64,
    pub record_trace: bool,
    pub record_utilization: bool,
}

impl SimConfig {
    pub fn new(horizon: f64) -> Self {
        SimConfig {
            horizon,
            warmup_fraction: 0.0,
            record_trace: false,
            record_utilization: false,
        }
    }

    /// `10^4 * max D` with a 5% warm-up discard.
    pub fn default_for(streams: &[JobStream]) -> Self {
        let max_d = streams.iter().map(|s| s.rel_deadline).fold(0.0, f64::max);
        SimConfig {
            horizon: 1e4 * max_d,
            warmup_fraction: 0.05,
            record_trace: false,
            record_utilization: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Arrival,
    /// The processor switches to a job (including after a preemption).
    Dispatch,
    Complete,
    /// A job reaches its deadline with work left and is dropped.
    Miss,
    /// A job leaves the synthetic utilization active set.
    Expire,
    Idle,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventKind::Arrival => "arrival",
            EventKind::Dispatch => "dispatch",
            EventKind::Complete => "complete",
            EventKind::Miss => "miss",
            EventKind::Expire => "expire",
            EventKind::Idle => "idle",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEvent {
    pub time: f64,
    pub kind: EventKind,
    /// `None` for idle events.
    pub job: Option<usize>,
    pub stream: Option<usize>,
    /// Synthetic utilization for arrival/expire, remaining work for miss,
    /// zero otherwise.
    pub detail: f64,
}

/// CSV with header `time,event,stream,job,detail`.
pub fn trace_to_csv(trace: &[TraceEvent]) -> String {
    let mut out = String::from("time,event,stream,job,detail\n");
    let opt = |x: Option<usize>| x.map_or(String::new(), |v| v.to_string());
    for e in trace {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            e.time,
            e.kind,
            opt(e.stream),
            opt(e.job),
            e.detail
        ));
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StreamStats {
    pub released: u64,
    pub completed: u64,
    pub missed: u64,
    pub max_response: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub released: u64,
    pub completed: u64,
    pub missed: u64,
    pub in_flight: u64,
    pub max_synthetic_utilization: f64,
    pub per_stream: Vec<StreamStats>,
}

impl SimReport {
    /// `missed / released`, zero when nothing was released.
    pub fn miss_fraction(&self) -> f64 {
        if self.released == 0 {
            0.0
        } else {
            self.missed as f64 / self.released as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub report: SimReport,
    /// Filled when `record_trace` is set.
    pub trace: Vec<TraceEvent>,
    /// `(t, U)` pairs: `U` holds on the open interval after `t` up to the
    /// next entry. Filled when `record_utilization` is set.
    pub utilization_steps: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum JobState {
    Pending,
    Ready,
    Completed,
    Missed,
}

/// Min-heap key: shorter relative deadline first, then stream index.
#[derive(Debug, Clone, Copy)]
struct ReadyKey {
    rel_deadline: f64,
    stream: usize,
    job: usize,
}

impl PartialEq for ReadyKey {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for ReadyKey {}

impl PartialOrd for ReadyKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ReadyKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.rel_deadline
            .total_cmp(&other.rel_deadline)
            .then(self.stream.cmp(&other.stream))
            .then(self.job.cmp(&other.job))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Expiry(f64, usize);

impl Eq for Expiry {}

impl PartialOrd for Expiry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Expiry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

/// Simulates preemptive deadline-monotonic scheduling of `jobs`, which must
/// be sorted by `(arrival, stream_id)` (as [`release_all`] returns them).
///
/// Events sharing a timestamp are handled as: completion of the running job,
/// then arrivals, then deadline expiries. A job finishing exactly at its
/// deadline therefore meets it.
pub fn simulate_jobs(streams: &[JobStream], jobs: &[Job], config: &SimConfig) -> SimOutcome {
    let horizon = config.horizon;
    let warmup = config.warmup_fraction * horizon;
    let mut state = vec![JobState::Pending; jobs.len()];
    let mut remaining: Vec<f64> = jobs.iter().map(|j| j.exec_time).collect();
    let mut ready: BinaryHeap<Reverse<ReadyKey>> = BinaryHeap::new();
    let mut expiries: BinaryHeap<Reverse<Expiry>> = BinaryHeap::new();
    let mut next = 0usize;
    let mut now = 0.0f64;
    let mut u = 0.0f64;
    let mut active = 0usize;
    let mut max_u = 0.0f64;
    let mut running: Option<usize> = None;

    let n_streams = streams
        .iter()
        .map(|s| s.id + 1)
        .chain(jobs.iter().map(|j| j.stream_id + 1))
        .max()
        .unwrap_or(0);
    let mut per_stream = vec![StreamStats::default(); n_streams];
    let mut report = SimReport {
        released: 0,
        completed: 0,
        missed: 0,
        in_flight: 0,
        max_synthetic_utilization: 0.0,
        per_stream: Vec::new(),
    };
    let mut trace = Vec::new();
    let mut steps = Vec::new();
    if config.record_utilization {
        steps.push((0.0, 0.0));
    }
    let log = |trace: &mut Vec<TraceEvent>, time, kind, job: Option<usize>, detail| {
        if config.record_trace {
            trace.push(TraceEvent {
                time,
                kind,
                job,
                stream: job.map(|j| jobs[j].stream_id),
                detail,
            });
        }
    };

    loop {
        while let Some(Reverse(k)) = ready.peek() {
            if state[k.job] == JobState::Ready {
                break;
            }
            ready.pop();
        }
        let top = ready.peek().map(|Reverse(k)| k.job);
        let t_arrival = jobs.get(next).map_or(f64::INFINITY, |j| j.arrival);
        let t_expiry = expiries.peek().map_or(f64::INFINITY, |Reverse(e)| e.0);
        let t_complete = top.map_or(f64::INFINITY, |j| now + remaining[j]);
        let t = t_arrival.min(t_expiry).min(t_complete);

        if t > horizon {
            if let Some(j) = top {
                remaining[j] -= horizon - now;
            }
            break;
        }

        // run the current job up to t
        if let Some(j) = top {
            if t == t_complete {
                remaining[j] = 0.0;
                state[j] = JobState::Completed;
                ready.pop();
                log(&mut trace, t, EventKind::Complete, Some(j), 0.0);
                if jobs[j].arrival >= warmup {
                    report.completed += 1;
                    let s = &mut per_stream[jobs[j].stream_id];
                    s.completed += 1;
                    s.max_response = s.max_response.max(t - jobs[j].arrival);
                }
            } else {
                remaining[j] -= t - now;
            }
        }
        now = t;

        while next < jobs.len() && jobs[next].arrival <= now {
            let j = next;
            next += 1;
            state[j] = JobState::Ready;
            u += jobs[j].density();
            active += 1;
            let stream = jobs[j].stream_id;
            ready.push(Reverse(ReadyKey {
                rel_deadline: jobs[j].rel_deadline(),
                stream,
                job: j,
            }));
            expiries.push(Reverse(Expiry(jobs[j].abs_deadline, j)));
            log(&mut trace, now, EventKind::Arrival, Some(j), u);
            if jobs[j].arrival >= warmup {
                report.released += 1;
                per_stream[stream].released += 1;
            }
        }
        max_u = max_u.max(u);

        while let Some(&Reverse(Expiry(deadline, j))) = expiries.peek() {
            if deadline > now {
                break;
            }
            expiries.pop();
            if state[j] == JobState::Ready {
                state[j] = JobState::Missed;
                log(&mut trace, now, EventKind::Miss, Some(j), remaining[j]);
                if jobs[j].arrival >= warmup {
                    report.missed += 1;
                    per_stream[jobs[j].stream_id].missed += 1;
                }
            }
            u -= jobs[j].density();
            active -= 1;
            if active == 0 {
                u = 0.0;
            }
            log(&mut trace, now, EventKind::Expire, Some(j), u);
        }
        if config.record_utilization {
            steps.push((now, u));
        }

        if config.record_trace {
            while let Some(Reverse(k)) = ready.peek() {
                if state[k.job] == JobState::Ready {
                    break;
                }
                ready.pop();
            }
            let new_top = ready.peek().map(|Reverse(k)| k.job);
            if new_top != running {
                match new_top {
                    Some(j) => log(&mut trace, now, EventKind::Dispatch, Some(j), 0.0),
                    None => log(&mut trace, now, EventKind::Idle, None, 0.0),
                }
                running = new_top;
            }
        }
    }

    report.in_flight = report.released - report.completed - report.missed;
    report.max_synthetic_utilization = max_u;
    report.per_stream = per_stream;
    SimOutcome {
        report,
        trace,
        utilization_steps: steps,
    }
}

/// Releases jobs for every stream over `config.horizon` and simulates them.
pub fn simulate_dm<R: Rng + ?Sized>(streams: &[JobStream], config: &SimConfig, rng: &mut R) -> SimOutcome {
    let jobs = release_all(streams, config.horizon, rng);
    simulate_jobs(streams, &jobs, config)
}

/// Multiplies every execution time by `factor`.
pub fn scale_workload(streams: &[JobStream], jobs: &[Job], factor: f64) -> (Vec<JobStream>, Vec<Job>) {
    let streams = streams
        .iter()
        .map(|s| JobStream {
            exec_time: s.exec_time * factor,
            ..*s
        })
        .collect();
    let jobs = jobs
        .iter()
        .map(|j| Job {
            exec_time: j.exec_time * factor,
            ..*j
        })
        .collect();
    (streams, jobs)
}

/// Protocol for the synthetic utilization threshold experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSweepParams {
    pub n_streams: usize,
    pub max_cd_ratio: f64,
    pub deadline_range: (f64, f64),
    /// Fraction of time each stream has an active job.
    pub duty: f64,
    /// Run length as a multiple of the largest possible relative deadline.
    pub horizon_factor: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub step: f64,
    pub trials: u64,
}

impl Default for SyntheticSweepParams {
    fn default() -> Self {
        SyntheticSweepParams {
            n_streams: 100,
            max_cd_ratio: DEFAULT_MAX_CD_RATIO,
            deadline_range: (10.0, 100.0),
            duty: 0.99,
            horizon_factor: 100.0,
            u_min: 0.5,
            u_max: 1.0,
            step: 0.02,
            trials: 100,
        }
    }
}

impl SyntheticSweepParams {
    pub fn horizon(&self) -> f64 {
        self.horizon_factor * self.deadline_range.1
    }
}

/// One randomized run whose execution times are rescaled so the realized
/// peak synthetic utilization equals `peak`. Returns `None` if no job was
/// released.
pub fn scaled_run<R: Rng + ?Sized>(
    params: &SyntheticSweepParams,
    peak: f64,
    rng: &mut R,
) -> Result<Option<SimReport>> {
    let streams = gen_streams_with_duty(
        params.n_streams,
        params.max_cd_ratio,
        params.deadline_range,
        params.duty,
        rng,
    )?;
    let horizon = params.horizon();
    let jobs = release_all(&streams, horizon, rng);
    let observed = peak_synthetic_utilization(&jobs);
    if observed <= 0.0 {
        return Ok(None);
    }
    let (streams, jobs) = scale_workload(&streams, &jobs, peak / observed);
    Ok(Some(simulate_jobs(&streams, &jobs, &SimConfig::new(horizon)).report))
}

/// Fraction of randomized runs with zero deadline misses at each peak
/// synthetic utilization on the grid. Trial `t` at grid point `k` uses seed
/// `derive_seed(seed, [k, t])`.
pub fn synthetic_sweep(params: &SyntheticSweepParams, seed: u64) -> Result<ThresholdCurve> {
    if params.trials == 0 {
        return Err(Error::param("need at least one trial"));
    }
    if !(params.horizon_factor > 0.0) {
        return Err(Error::param("horizon factor must be positive"));
    }
    let grid = utilization_grid(params.u_min, params.u_max, params.step)?;
    if grid[0] <= 0.0 {
        return Err(Error::param("peak synthetic utilization must be positive"));
    }
    let points = grid
        .iter()
        .enumerate()
        .map(|(k, &u)| {
            let successes = (0..params.trials)
                .into_par_iter()
                .map(|t| {
                    let mut rng = child_rng(seed, &[k as u64, t]);
                    // redraw the (vanishingly rare) empty runs
                    loop {
                        if let Some(r) = scaled_run(params, u, &mut rng)? {
                            return Ok(u64::from(r.missed == 0));
                        }
                    }
                })
                .try_reduce(|| 0, |a, b| Ok(a + b))?;
            Ok(MuEstimate::from_counts(u, successes, params.trials))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ThresholdCurve {
        n: params.n_streams,
        generator: "synthetic".into(),
        seed,
        points,
    })
}
