//! Simulated power-controlled request server.
//!
//! Requests are admitted against a synthetic utilization set point. When a
//! request does not fit at the current processor speed the controller steps
//! the frequency up; at the top frequency it rejects. After a request leaves
//! the active set the controller waits a hysteresis delay and then drops to
//! the slowest frequency that still keeps synthetic utilization under the
//! set point. Admitted requests run under preemptive deadline-monotonic
//! scheduling (FIFO within a class). Time is in milliseconds.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::rng::rng_from_seed;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub freq_mhz: f64,
    pub voltage: f64,
}

/// Frequency/voltage table and power model parameters.
///
/// Power at operating point `(f, V)` is
/// `k * ((1 - s) * f * V^2 + s * f_max * V_max^2)` with `s` the static
/// fraction: `s = 0` is pure dynamic power, `s = 1` is constant power.
#[derive(Debug, Clone, PartialEq)]
pub struct DvsProfile {
    points: Vec<OperatingPoint>,
    pub energy_coeff: f64,
    pub static_fraction: f64,
}

/// Default `k`, in watts per MHz·V².
pub const DEFAULT_ENERGY_COEFF: f64 = 0.01;

impl DvsProfile {
    pub fn new(points: Vec<OperatingPoint>, energy_coeff: f64, static_fraction: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::param("a DVS profile needs at least one operating point"));
        }
        if points.iter().any(|p| !(p.freq_mhz > 0.0 && p.voltage > 0.0)) {
            return Err(Error::param("frequencies and voltages must be positive"));
        }
        if points.windows(2).any(|w| w[1].freq_mhz <= w[0].freq_mhz) {
            return Err(Error::param("frequencies must be strictly increasing"));
        }
        if points.windows(2).any(|w| w[1].voltage < w[0].voltage) {
            return Err(Error::param("voltages must be nondecreasing"));
        }
        if !(energy_coeff > 0.0 && energy_coeff.is_finite()) {
            return Err(Error::param("energy coefficient must be positive"));
        }
        if !(0.0..=1.0).contains(&static_fraction) {
            return Err(Error::param("static fraction must lie in [0, 1]"));
        }
        Ok(DvsProfile {
            points,
            energy_coeff,
            static_fraction,
        })
    }

    /// Intel Pentium M 1.7 GHz (enhanced SpeedStep) settings.
    pub fn pentium_m() -> Self {
        let table = [
            (600.0, 0.956),
            (800.0, 1.004),
            (1000.0, 1.116),
            (1200.0, 1.228),
            (1400.0, 1.308),
            (1700.0, 1.484),
        ];
        let points = table
            .iter()
            .map(|&(freq_mhz, voltage)| OperatingPoint { freq_mhz, voltage })
            .collect();
        DvsProfile::new(points, DEFAULT_ENERGY_COEFF, 0.0).expect("valid table")
    }

    pub fn points(&self) -> &[OperatingPoint] {
        &self.points
    }

    pub fn f_max(&self) -> f64 {
        self.points[self.points.len() - 1].freq_mhz
    }

    pub fn index_of(&self, freq_mhz: f64) -> Result<usize> {
        self.points
            .iter()
            .position(|p| p.freq_mhz == freq_mhz)
            .ok_or_else(|| Error::param(format!("{freq_mhz} MHz is not an operating point")))
    }

    fn dynamic(&self, i: usize) -> f64 {
        let p = self.points[i];
        p.freq_mhz * p.voltage * p.voltage
    }

    fn power_by_index(&self, i: usize) -> f64 {
        let top = self.dynamic(self.points.len() - 1);
        self.energy_coeff
            * ((1.0 - self.static_fraction) * self.dynamic(i) + self.static_fraction * top)
    }

    /// Power draw in watts at operating frequency `freq_mhz`.
    pub fn power_at(&self, freq_mhz: f64) -> Result<f64> {
        Ok(self.power_by_index(self.index_of(freq_mhz)?))
    }
}

/// One `freq_mhz voltage` pair per line; `#` starts a comment.
impl FromStr for DvsProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut points = Vec::new();
        for (idx, raw) in s.lines().enumerate() {
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |message: &str| Error::Parse {
                line: idx + 1,
                message: message.to_string(),
            };
            let fields: Vec<&str> = content.split_whitespace().collect();
            if fields.len() != 2 {
                return Err(err("expected `freq_mhz voltage`"));
            }
            let freq_mhz = fields[0].parse().map_err(|_| err("bad frequency"))?;
            let voltage = fields[1].parse().map_err(|_| err("bad voltage"))?;
            points.push(OperatingPoint { freq_mhz, voltage });
        }
        DvsProfile::new(points, DEFAULT_ENERGY_COEFF, 0.0)
    }
}

impl fmt::Display for DvsProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.points {
            writeln!(f, "{} {}", p.freq_mhz, p.voltage)?;
        }
        Ok(())
    }
}

/// A service level: relative deadline, execution time at the top frequency
/// and the compute-bound fraction `beta` of that time. Only the compute-bound
/// part stretches when the processor slows down.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServiceClass {
    pub rel_deadline: f64,
    pub base_exec_time: f64,
    pub compute_fraction: f64,
}

impl ServiceClass {
    pub fn new(rel_deadline: f64, base_exec_time: f64, compute_fraction: f64) -> Result<Self> {
        if !(rel_deadline > 0.0 && base_exec_time > 0.0) {
            return Err(Error::param("deadline and execution time must be positive"));
        }
        if !(0.0..=1.0).contains(&compute_fraction) {
            return Err(Error::param("compute fraction must lie in [0, 1]"));
        }
        Ok(ServiceClass {
            rel_deadline,
            base_exec_time,
            compute_fraction,
        })
    }

    /// Slowdown factor `beta * f_max / f + (1 - beta)`.
    fn stretch(&self, f_max: f64, freq: f64) -> f64 {
        self.compute_fraction * (f_max / freq) + (1.0 - self.compute_fraction)
    }

    /// Execution time at frequency `freq_mhz` of `profile`.
    pub fn exec_time_at(&self, profile: &DvsProfile, freq_mhz: f64) -> Result<f64> {
        profile.index_of(freq_mhz)?;
        Ok(self.base_exec_time * self.stretch(profile.f_max(), freq_mhz))
    }
}

/// Default compute-bound fraction for request classes.
pub const DEFAULT_COMPUTE_FRACTION: f64 = 0.9;

/// Six service levels with deadlines doubling from 10 ms.
pub fn default_classes() -> Vec<ServiceClass> {
    [
        (10.0, 1.25),
        (20.0, 1.25),
        (40.0, 2.5),
        (80.0, 2.5),
        (160.0, 5.0),
        (320.0, 5.0),
    ]
    .iter()
    .map(|&(d, c)| ServiceClass::new(d, c, DEFAULT_COMPUTE_FRACTION).expect("valid class"))
    .collect()
}

/// Spread of actual execution times around the profiled mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExecNoise {
    /// Every request takes exactly its class's profiled time.
    None,
    /// Actual time is the estimate times a factor uniform in `[1 - a, 1 + a]`.
    Uniform(f64),
    /// Actual time is the estimate times an exponential factor with mean 1.
    Exponential,
}

impl fmt::Display for ExecNoise {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExecNoise::None => f.write_str("none"),
            ExecNoise::Uniform(a) => write!(f, "uniform:{a}"),
            ExecNoise::Exponential => f.write_str("exponential"),
        }
    }
}

impl FromStr for ExecNoise {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "none" | "off" => return Ok(ExecNoise::None),
            "exponential" | "exp" => return Ok(ExecNoise::Exponential),
            _ => {}
        }
        if let Some(a) = s.strip_prefix("uniform:") {
            let a: f64 = a
                .parse()
                .map_err(|_| Error::param(format!("bad noise spread `{a}`")))?;
            if !(0.0..1.0).contains(&a) {
                return Err(Error::param("uniform noise spread must lie in [0, 1)"));
            }
            return Ok(ExecNoise::Uniform(a));
        }
        Err(Error::param(format!("unknown noise model `{s}`")))
    }
}

impl ExecNoise {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ExecNoise::None => 1.0,
            ExecNoise::Uniform(a) => 1.0 - a + 2.0 * a * rng.random::<f64>(),
            ExecNoise::Exponential => Exp::new(1.0).expect("rate 1").sample(rng),
        }
    }
}

/// Session-oriented request workload.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkloadParams {
    pub sessions: usize,
    /// Inclusive range of requests per session.
    pub session_len: (usize, usize),
    /// Offered load: request rate times mean execution time at `f_max`.
    pub load: f64,
    /// Mean exponential gap between requests of one session, in ms.
    pub think_time: f64,
    /// Mean actual execution time divided by the admission estimate.
    pub exec_scale: f64,
    pub noise: ExecNoise,
}

impl WorkloadParams {
    /// Exact execution times: every request takes its profiled time.
    pub fn exact(load: f64) -> Self {
        WorkloadParams {
            sessions: 1000,
            session_len: (2, 16),
            load,
            think_time: 500.0,
            exec_scale: 1.0,
            noise: ExecNoise::None,
        }
    }

    /// The reference workload: 1000 sessions of 2 to 16 requests whose
    /// actual execution times scatter exponentially around the estimate.
    pub fn benchmark(load: f64) -> Self {
        WorkloadParams {
            noise: ExecNoise::Exponential,
            ..WorkloadParams::exact(load)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Request {
    pub arrival: f64,
    pub class: usize,
    pub session: usize,
    /// Actual execution time divided by the profiled one.
    pub work_factor: f64,
}

/// Generated requests plus the window they were spread over.
#[derive(Debug, Clone, PartialEq)]
pub struct Workload {
    pub requests: Vec<Request>,
    pub span: f64,
}

/// Draws a session workload. Session starts are uniform over a window sized
/// so the expected offered load equals `params.load`; requests within a
/// session follow exponential think times and wrap around the window, which
/// keeps the arrival rate flat across it.
pub fn generate_workload<R: Rng + ?Sized>(
    params: &WorkloadParams,
    classes: &[ServiceClass],
    rng: &mut R,
) -> Result<Workload> {
    let (lo, hi) = params.session_len;
    if params.sessions == 0 || lo == 0 || lo > hi {
        return Err(Error::param("need sessions >= 1 and 1 <= min length <= max length"));
    }
    if classes.is_empty() {
        return Err(Error::param("need at least one service class"));
    }
    if !(params.load > 0.0 && params.load.is_finite()) {
        return Err(Error::param("load must be positive"));
    }
    if !(params.exec_scale > 0.0 && params.exec_scale.is_finite()) {
        return Err(Error::param("execution scale must be positive"));
    }
    if !(params.think_time > 0.0) {
        return Err(Error::param("think time must be positive"));
    }
    let mean_exec = classes.iter().map(|c| c.base_exec_time).sum::<f64>() / classes.len() as f64;
    let mean_len = (lo + hi) as f64 / 2.0;
    let span = params.sessions as f64 * mean_len * mean_exec / params.load;
    let think = Exp::new(1.0 / params.think_time).expect("positive rate");

    let mut requests = Vec::new();
    for session in 0..params.sessions {
        let len = rng.random_range(lo..=hi);
        let mut t = rng.random::<f64>() * span;
        for k in 0..len {
            if k > 0 {
                t += think.sample(rng);
            }
            requests.push(Request {
                arrival: t % span,
                class: rng.random_range(0..classes.len()),
                session,
                work_factor: params.exec_scale * params.noise.sample(rng),
            });
        }
    }
    requests.sort_by(|a, b| {
        a.arrival
            .total_cmp(&b.arrival)
            .then(a.session.cmp(&b.session))
    });
    Ok(Workload { requests, span })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerParams {
    pub set_point: f64,
    /// Wait after a departure before lowering the speed, in ms.
    /// `f64::INFINITY` disables slowing down.
    pub hysteresis_delay: f64,
}

impl ControllerParams {
    pub fn new(set_point: f64) -> Self {
        ControllerParams {
            set_point,
            hysteresis_delay: 100.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decision {
    /// Admitted; carries the operating point index after the decision.
    Admit { freq_index: usize },
    Reject,
}

/// Synthetic utilization bookkeeping for the admission controller.
///
/// With the stretch model, the utilization of the active set at frequency
/// `f` is `(f_max / f) * A + B`, where `A` sums `beta * c / D` and `B` sums
/// `(1 - beta) * c / D` over active requests at `f_max`.
#[derive(Debug, Clone)]
pub struct PowerController {
    profile: DvsProfile,
    set_point: f64,
    freq_index: usize,
    scaled: f64,
    fixed: f64,
    active: usize,
    last_raise: f64,
}

impl PowerController {
    pub fn new(profile: DvsProfile, set_point: f64) -> Result<Self> {
        if !(set_point > 0.0 && set_point <= 1.0) {
            return Err(Error::param(format!("set point must lie in (0, 1], got {set_point}")));
        }
        Ok(PowerController {
            profile,
            set_point,
            freq_index: 0,
            scaled: 0.0,
            fixed: 0.0,
            active: 0,
            last_raise: f64::NEG_INFINITY,
        })
    }

    pub fn freq_index(&self) -> usize {
        self.freq_index
    }

    pub fn frequency(&self) -> f64 {
        self.profile.points()[self.freq_index].freq_mhz
    }

    pub fn profile(&self) -> &DvsProfile {
        &self.profile
    }

    fn utilization_with(&self, i: usize, scaled: f64, fixed: f64) -> f64 {
        let f = self.profile.points()[i].freq_mhz;
        (self.profile.f_max() / f) * scaled + fixed
    }

    /// Current synthetic utilization at the current frequency.
    pub fn utilization(&self) -> f64 {
        self.utilization_with(self.freq_index, self.scaled, self.fixed)
    }

    fn parts(class: &ServiceClass) -> (f64, f64) {
        let density = class.base_exec_time / class.rel_deadline;
        (
            class.compute_fraction * density,
            (1.0 - class.compute_fraction) * density,
        )
    }

    /// Admission decision for a request of `class` arriving at `now`. On
    /// admission the request joins the active set and the frequency may rise.
    pub fn admit(&mut self, class: &ServiceClass, now: f64) -> Decision {
        let (a, b) = Self::parts(class);
        let (scaled, fixed) = (self.scaled + a, self.fixed + b);
        let tol = 1e-12;
        let fit = (self.freq_index..self.profile.points().len())
            .find(|&i| self.utilization_with(i, scaled, fixed) <= self.set_point + tol);
        match fit {
            Some(i) => {
                if i > self.freq_index {
                    self.last_raise = now;
                }
                self.freq_index = i;
                self.scaled = scaled;
                self.fixed = fixed;
                self.active += 1;
                Decision::Admit { freq_index: i }
            }
            None => Decision::Reject,
        }
    }

    /// An admitted request of `class` leaves the active set.
    pub fn depart(&mut self, class: &ServiceClass) {
        let (a, b) = Self::parts(class);
        self.scaled -= a;
        self.fixed -= b;
        self.active -= 1;
        if self.active == 0 {
            self.scaled = 0.0;
            self.fixed = 0.0;
        }
    }

    /// Lowers the speed to the slowest point keeping utilization under the
    /// set point, unless the speed was raised after `departed_at`. Returns
    /// true if the frequency changed.
    pub fn relax(&mut self, departed_at: f64) -> bool {
        if self.last_raise > departed_at {
            return false;
        }
        let tol = 1e-12;
        let slowest = (0..=self.freq_index)
            .find(|&i| self.utilization_with(i, self.scaled, self.fixed) <= self.set_point + tol)
            .unwrap_or(self.freq_index);
        let changed = slowest != self.freq_index;
        self.freq_index = slowest;
        changed
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ClassStats {
    pub admitted: u64,
    pub rejected: u64,
    pub completed: u64,
    pub missed: u64,
    pub mean_latency: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub load: f64,
    pub set_point: f64,
    /// Joules.
    pub energy: f64,
    /// Watts.
    pub avg_power: f64,
    /// Simulated time in ms.
    pub duration: f64,
    pub admitted: u64,
    pub rejected: u64,
    pub completed: u64,
    pub missed: u64,
    pub per_class: Vec<ClassStats>,
    /// Milliseconds spent at each operating point.
    pub time_at_point: Vec<f64>,
    pub freq_changes: u64,
    /// Largest synthetic utilization seen right after an admission.
    pub max_admitted_utilization: f64,
}

impl EnergyReport {
    /// Missed deadlines as a fraction of admitted requests.
    pub fn miss_fraction(&self) -> f64 {
        if self.admitted == 0 {
            0.0
        } else {
            self.missed as f64 / self.admitted as f64
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct ReadyKey {
    rel_deadline: f64,
    arrival: f64,
    idx: usize,
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
            .then(self.arrival.total_cmp(&other.arrival))
            .then(self.idx.cmp(&other.idx))
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

/// Serves `workload` with the given controller settings and integrates
/// power over the run, which lasts until the last admitted request's
/// deadline (or the workload span, whichever is later).
///
/// Events at one instant are handled as: completion, hysteresis checks,
/// arrivals (admission), then deadline expiries.
pub fn serve(
    profile: &DvsProfile,
    classes: &[ServiceClass],
    workload: &Workload,
    load: f64,
    controller: &ControllerParams,
) -> Result<EnergyReport> {
    if !(controller.hysteresis_delay >= 0.0) {
        return Err(Error::param("hysteresis delay must be non-negative"));
    }
    if let Some(r) = workload.requests.iter().find(|r| r.class >= classes.len()) {
        return Err(Error::param(format!("request refers to unknown class {}", r.class)));
    }
    let mut ctl = PowerController::new(profile.clone(), controller.set_point)?;
    let f_max = profile.f_max();
    let reqs = &workload.requests;

    // fraction of each request's work still to do
    let mut remaining = vec![1.0f64; reqs.len()];
    let mut done = vec![false; reqs.len()];
    let mut ready: BinaryHeap<Reverse<ReadyKey>> = BinaryHeap::new();
    let mut expiries: BinaryHeap<Reverse<Expiry>> = BinaryHeap::new();
    let mut checks: VecDeque<(f64, f64)> = VecDeque::new(); // (check time, departure time)
    let mut next = 0usize;
    let mut now = 0.0f64;

    let mut report = EnergyReport {
        load,
        set_point: controller.set_point,
        energy: 0.0,
        avg_power: 0.0,
        duration: 0.0,
        admitted: 0,
        rejected: 0,
        completed: 0,
        missed: 0,
        per_class: vec![ClassStats::default(); classes.len()],
        time_at_point: vec![0.0; profile.points().len()],
        freq_changes: 0,
        max_admitted_utilization: 0.0,
    };
    let mut latency_sum = vec![0.0f64; classes.len()];
    let mut energy_mj = 0.0f64; // W * ms

    // duration of the whole remaining work of request j at the current speed
    let full_time = |j: usize, freq: f64| -> f64 {
        let c = &classes[reqs[j].class];
        c.base_exec_time * reqs[j].work_factor * c.stretch(f_max, freq)
    };

    loop {
        while let Some(Reverse(k)) = ready.peek() {
            if !done[k.idx] {
                break;
            }
            ready.pop();
        }
        let top = ready.peek().map(|Reverse(k)| k.idx);
        let freq = ctl.frequency();
        let t_complete = top.map_or(f64::INFINITY, |j| now + remaining[j] * full_time(j, freq));
        let t_check = checks.front().map_or(f64::INFINITY, |c| c.0);
        let t_arrival = reqs.get(next).map_or(f64::INFINITY, |r| r.arrival);
        let t_expiry = expiries.peek().map_or(f64::INFINITY, |Reverse(e)| e.0);
        let t = t_complete.min(t_check).min(t_arrival).min(t_expiry);
        if t == f64::INFINITY {
            break;
        }

        let dt = t - now;
        energy_mj += profile.power_by_index(ctl.freq_index()) * dt;
        report.time_at_point[ctl.freq_index()] += dt;
        if let Some(j) = top {
            if t == t_complete {
                remaining[j] = 0.0;
                done[j] = true;
                ready.pop();
                let class = reqs[j].class;
                report.completed += 1;
                report.per_class[class].completed += 1;
                latency_sum[class] += t - reqs[j].arrival;
            } else {
                remaining[j] -= dt / full_time(j, freq);
            }
        }
        now = t;

        while checks.front().is_some_and(|c| c.0 <= now) {
            let (_, departed_at) = checks.pop_front().expect("non-empty");
            if ctl.relax(departed_at) {
                report.freq_changes += 1;
            }
        }

        while next < reqs.len() && reqs[next].arrival <= now {
            let j = next;
            next += 1;
            let class = &classes[reqs[j].class];
            let before = ctl.freq_index();
            match ctl.admit(class, now) {
                Decision::Admit { freq_index } => {
                    if freq_index != before {
                        report.freq_changes += 1;
                    }
                    report.admitted += 1;
                    report.per_class[reqs[j].class].admitted += 1;
                    report.max_admitted_utilization =
                        report.max_admitted_utilization.max(ctl.utilization());
                    ready.push(Reverse(ReadyKey {
                        rel_deadline: class.rel_deadline,
                        arrival: reqs[j].arrival,
                        idx: j,
                    }));
                    expiries.push(Reverse(Expiry(reqs[j].arrival + class.rel_deadline, j)));
                }
                Decision::Reject => {
                    done[j] = true;
                    report.rejected += 1;
                    report.per_class[reqs[j].class].rejected += 1;
                }
            }
        }

        while let Some(&Reverse(Expiry(deadline, j))) = expiries.peek() {
            if deadline > now {
                break;
            }
            expiries.pop();
            if !done[j] {
                done[j] = true;
                report.missed += 1;
                report.per_class[reqs[j].class].missed += 1;
            }
            ctl.depart(&classes[reqs[j].class]);
            if controller.hysteresis_delay.is_finite() {
                checks.push_back((now + controller.hysteresis_delay, now));
            }
        }
    }

    // idle tail up to the end of the workload window
    if now < workload.span {
        let dt = workload.span - now;
        energy_mj += profile.power_by_index(ctl.freq_index()) * dt;
        report.time_at_point[ctl.freq_index()] += dt;
        now = workload.span;
    }
    report.duration = now;
    report.energy = energy_mj / 1000.0;
    report.avg_power = if now > 0.0 { energy_mj / now } else { 0.0 };
    for (stats, sum) in report.per_class.iter_mut().zip(latency_sum) {
        if stats.completed > 0 {
            stats.mean_latency = sum / stats.completed as f64;
        }
    }
    Ok(report)
}

/// Generates the workload from `seed` and serves it.
pub fn run_workload(
    profile: &DvsProfile,
    classes: &[ServiceClass],
    workload: &WorkloadParams,
    controller: &ControllerParams,
    seed: u64,
) -> Result<EnergyReport> {
    let mut rng = rng_from_seed(seed);
    let w = generate_workload(workload, classes, &mut rng)?;
    serve(profile, classes, &w, workload.load, controller)
}

/// CSV header matching [`EnergyReport::csv_row`].
pub const ENERGY_CSV_HEADER: &str = "load,set_point,energy,avg_power,miss_fraction,admitted,rejected";

impl EnergyReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.load,
            self.set_point,
            self.energy,
            self.avg_power,
            self.miss_fraction(),
            self.admitted,
            self.rejected
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn class(d: f64, c: f64, beta: f64) -> ServiceClass {
        ServiceClass::new(d, c, beta).unwrap()
    }

    fn two_point() -> DvsProfile {
        "850 1.0\n1700 1.2\n".parse().unwrap()
    }

    #[test]
    fn pentium_table() {
        let p = DvsProfile::pentium_m();
        assert_eq!(p.points().len(), 6);
        assert_eq!(p.f_max(), 1700.0);
        let round: DvsProfile = p.to_string().parse().unwrap();
        assert_eq!(round.points(), p.points());
    }

    #[test]
    fn profile_validation() {
        assert!("".parse::<DvsProfile>().is_err());
        assert!("800 1.0\n600 0.9\n".parse::<DvsProfile>().is_err());
        assert!("600 1.0\n800 0.9\n".parse::<DvsProfile>().is_err());
        assert!("600\n".parse::<DvsProfile>().is_err());
        assert!(DvsProfile::new(DvsProfile::pentium_m().points().to_vec(), 0.01, 1.5).is_err());
    }

    #[test]
    fn exec_time_scaling() {
        let p = two_point();
        let c = class(10.0, 1.25, 1.0);
        assert_eq!(c.exec_time_at(&p, 1700.0).unwrap(), 1.25);
        assert_eq!(c.exec_time_at(&p, 850.0).unwrap(), 2.5);
        let io = class(10.0, 1.25, 0.0);
        assert_eq!(io.exec_time_at(&p, 850.0).unwrap(), 1.25);
        assert!(c.exec_time_at(&p, 1000.0).is_err());
    }

    #[test]
    fn power_model() {
        let p = DvsProfile::pentium_m();
        let ratio = p.power_at(1700.0).unwrap() / p.power_at(600.0).unwrap();
        let expected = (1700.0 * 1.484f64.powi(2)) / (600.0 * 0.956f64.powi(2));
        assert!((ratio - expected).abs() < 1e-12);
        assert!((ratio - 6.83).abs() < 0.01);
        let powers: Vec<f64> = p.points().iter().map(|o| p.power_at(o.freq_mhz).unwrap()).collect();
        assert!(powers.windows(2).all(|w| w[1] > w[0]));

        let flat = DvsProfile::new(p.points().to_vec(), 0.01, 1.0).unwrap();
        let top = flat.power_at(1700.0).unwrap();
        for o in flat.points() {
            assert!((flat.power_at(o.freq_mhz).unwrap() - top).abs() < 1e-12);
        }
        assert!(p.power_at(999.0).is_err());
    }

    #[test]
    fn admission_examples() {
        let p = DvsProfile::pentium_m();
        let mut ctl = PowerController::new(p.clone(), 0.75).unwrap();
        // tiny request fits at the lowest speed
        let tiny = class(100.0, 0.1, 1.0);
        assert_eq!(ctl.admit(&tiny, 0.0), Decision::Admit { freq_index: 0 });

        // pushing U to 0.74 (at current speed) is admitted without a change
        let mut ctl = PowerController::new(p.clone(), 0.75).unwrap();
        let heavy = class(100.0, 74.0 * 600.0 / 1700.0, 1.0);
        assert_eq!(ctl.admit(&heavy, 0.0), Decision::Admit { freq_index: 0 });
        assert!((ctl.utilization() - 0.74).abs() < 1e-12);

        // at f_max with U = 0.75 already, anything more is rejected
        let mut ctl = PowerController::new(p, 0.75).unwrap();
        let full = class(100.0, 75.0, 1.0);
        assert_eq!(ctl.admit(&full, 0.0), Decision::Admit { freq_index: 5 });
        assert_eq!(ctl.admit(&tiny, 1.0), Decision::Reject);
        assert_eq!(ctl.freq_index(), 5);
    }

    #[test]
    fn admission_raises_speed_just_enough() {
        let p = DvsProfile::pentium_m();
        let mut ctl = PowerController::new(p, 0.586).unwrap();
        // U at f_max is 0.5: needs f >= 0.5 * 1700 / 0.586 = 1450 -> 1700
        let c = class(100.0, 50.0, 1.0);
        assert_eq!(ctl.admit(&c, 0.0), Decision::Admit { freq_index: 5 });
        assert!(ctl.utilization() <= 0.586);
    }

    #[test]
    fn relax_steps_down_after_drain() {
        let p = DvsProfile::pentium_m();
        let mut ctl = PowerController::new(p, 0.75).unwrap();
        let c = class(100.0, 70.0, 1.0);
        ctl.admit(&c, 0.0);
        assert_eq!(ctl.freq_index(), 5);
        ctl.depart(&c);
        assert!(ctl.relax(100.0));
        assert_eq!(ctl.freq_index(), 0);
    }

    #[test]
    fn relax_skipped_after_later_raise() {
        let p = DvsProfile::pentium_m();
        let mut ctl = PowerController::new(p, 0.75).unwrap();
        let c = class(100.0, 70.0, 1.0);
        ctl.admit(&c, 50.0);
        assert!(!ctl.relax(10.0));
        assert_eq!(ctl.freq_index(), 5);
    }

    #[test]
    fn departure_then_equal_arrival_keeps_speed() {
        let p = DvsProfile::pentium_m();
        let mut ctl = PowerController::new(p, 0.75).unwrap();
        let c = class(100.0, 30.0, 1.0);
        ctl.admit(&c, 0.0);
        let f = ctl.freq_index();
        ctl.depart(&c);
        ctl.admit(&c, 0.0);
        assert!(!ctl.relax(0.0));
        assert_eq!(ctl.freq_index(), f);
    }

    fn small_workload(load: f64) -> WorkloadParams {
        WorkloadParams {
            sessions: 100,
            ..WorkloadParams::benchmark(load)
        }
    }

    const LADDER: [f64; 4] = [0.586, 0.65, 0.70, 0.75];

    #[test]
    fn energy_falls_as_set_point_rises() {
        let p = DvsProfile::pentium_m();
        let classes = default_classes();
        for load in [0.3, 0.5] {
            let mut rng = rng_from_seed(7);
            let w = generate_workload(&WorkloadParams::benchmark(load), &classes, &mut rng).unwrap();
            let energy: Vec<f64> = LADDER
                .iter()
                .map(|&sp| serve(&p, &classes, &w, load, &ControllerParams::new(sp)).unwrap().energy)
                .collect();
            assert!(energy.windows(2).all(|e| e[1] <= e[0]), "{load}: {energy:?}");
        }
    }

    #[test]
    fn misses_grow_with_set_point() {
        let p = DvsProfile::pentium_m();
        let classes = default_classes();
        let mut rng = rng_from_seed(7);
        let w = generate_workload(&WorkloadParams::benchmark(0.3), &classes, &mut rng).unwrap();
        let miss: Vec<f64> = LADDER
            .iter()
            .map(|&sp| serve(&p, &classes, &w, 0.3, &ControllerParams::new(sp)).unwrap().miss_fraction())
            .collect();
        assert!(miss.windows(2).all(|m| m[1] >= m[0]), "{miss:?}");
        assert!(miss[3] > miss[0]);
    }

    #[test]
    fn exact_times_at_bound_never_miss() {
        let p = DvsProfile::pentium_m();
        let classes = default_classes();
        for seed in 0..5 {
            let r = run_workload(&p, &classes, &WorkloadParams::exact(0.5), &ControllerParams::new(0.586), seed).unwrap();
            assert_eq!(r.missed, 0);
            assert_eq!(r.completed, r.admitted);
        }
    }

    #[test]
    fn exec_scale_inflates_work() {
        let classes = default_classes();
        let base = WorkloadParams::exact(0.5);
        let scaled = WorkloadParams { exec_scale: 1.5, ..base };
        let a = generate_workload(&base, &classes, &mut rng_from_seed(3)).unwrap();
        let b = generate_workload(&scaled, &classes, &mut rng_from_seed(3)).unwrap();
        assert!(b.requests.iter().all(|r| r.work_factor == 1.5));
        assert_eq!(a.requests.len(), b.requests.len());
        assert!(generate_workload(&WorkloadParams { exec_scale: 0.0, ..base }, &classes, &mut rng_from_seed(3)).is_err());
    }

    #[test]
    fn same_seed_same_report() {
        let p = DvsProfile::pentium_m();
        let classes = default_classes();
        let run = || run_workload(&p, &classes, &small_workload(0.5), &ControllerParams::new(0.75), 11).unwrap();
        assert_eq!(run(), run());
    }

    #[test]
    fn infinite_hysteresis_never_slows_down() {
        let p = DvsProfile::pentium_m();
        let classes = default_classes();
        let ctl = ControllerParams {
            set_point: 0.75,
            hysteresis_delay: f64::INFINITY,
        };
        let mut rng = rng_from_seed(2);
        let w = generate_workload(&small_workload(0.5), &classes, &mut rng).unwrap();
        let r = serve(&p, &classes, &w, 0.5, &ctl).unwrap();
        let finite = serve(&p, &classes, &w, 0.5, &ControllerParams::new(0.75)).unwrap();
        assert!(r.energy >= finite.energy);
        // with no slow-downs, every change is a raise: at most five of them
        assert!(r.freq_changes <= 5);
    }

    #[test]
    fn drains_to_lowest_speed() {
        let p = DvsProfile::pentium_m();
        let classes = vec![class(10.0, 1.0, 1.0)];
        let w = Workload {
            requests: vec![Request {
                arrival: 0.0,
                class: 0,
                session: 0,
                work_factor: 1.0,
            }],
            span: 1000.0,
        };
        let r = serve(&p, &classes, &w, 0.1, &ControllerParams::new(0.2)).unwrap();
        // 0.1 at f_max needs f >= 850 -> 1000 MHz, relaxed 100 ms after expiry
        assert_eq!(r.admitted, 1);
        assert_eq!(r.completed, 1);
        assert!((r.time_at_point[2] - 110.0).abs() < 1e-9);
        assert!((r.time_at_point[0] - 890.0).abs() < 1e-9);
    }

    #[test]
    fn single_point_profile_energy_is_power_times_time() {
        let p: DvsProfile = "1000 1.1\n".parse().unwrap();
        let classes = default_classes();
        let r = run_workload(&p, &classes, &small_workload(0.4), &ControllerParams::new(0.75), 5).unwrap();
        let power = p.power_at(1000.0).unwrap();
        assert!((r.energy - power * r.duration / 1000.0).abs() < 1e-9 * r.energy);
        assert_eq!(r.freq_changes, 0);
        assert!(r.admitted + r.rejected > 0);
    }

    #[test]
    fn admission_keeps_utilization_under_set_point() {
        let p = DvsProfile::pentium_m();
        let classes = default_classes();
        for sp in [0.586, 0.75] {
            let r = run_workload(&p, &classes, &small_workload(0.7), &ControllerParams::new(sp), 9).unwrap();
            assert!(r.max_admitted_utilization <= sp + 1e-9);
            assert!(r.rejected > 0);
        }
    }

    #[test]
    fn workload_shape() {
        let classes = default_classes();
        let mut rng = rng_from_seed(1);
        let w = generate_workload(&WorkloadParams::benchmark(0.5), &classes, &mut rng).unwrap();
        let n = w.requests.len() as f64;
        assert!((2000.0..=16000.0).contains(&n));
        assert!(w.requests.windows(2).all(|p| p[0].arrival <= p[1].arrival));
        assert!(w.requests.iter().all(|r| r.arrival < w.span));
        let work: f64 = w.requests.iter().map(|r| classes[r.class].base_exec_time).sum();
        assert!((work / w.span - 0.5).abs() < 0.05);
        assert!(generate_workload(&WorkloadParams { load: 0.0, ..WorkloadParams::benchmark(0.5) }, &classes, &mut rng).is_err());
    }

    #[test]
    fn noise_models_parse() {
        assert_eq!("none".parse::<ExecNoise>().unwrap(), ExecNoise::None);
        assert_eq!("uniform:0.5".parse::<ExecNoise>().unwrap(), ExecNoise::Uniform(0.5));
        assert!("uniform:1.5".parse::<ExecNoise>().is_err());
        assert_eq!(ExecNoise::Exponential.to_string().parse::<ExecNoise>().unwrap(), ExecNoise::Exponential);
    }
}
