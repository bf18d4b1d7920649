//! Workload data model: periodic tasks and aperiodic job streams.

use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

/// A periodic task with an integer period and a (generally fractional)
/// execution time. The relative deadline defaults to the period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Task {
    period: u64,
    exec_time: f64,
    deadline: f64,
}

impl Task {
    pub fn new(period: u64, exec_time: f64) -> Result<Self> {
        Self::with_deadline(period, exec_time, period as f64)
    }

    pub fn with_deadline(period: u64, exec_time: f64, deadline: f64) -> Result<Self> {
        if period == 0 {
            return Err(Error::param("task period must be positive"));
        }
        if !(exec_time.is_finite() && exec_time > 0.0) {
            return Err(Error::param(format!(
                "task execution time must be positive, got {exec_time}"
            )));
        }
        if !(deadline.is_finite() && exec_time <= deadline && deadline <= period as f64) {
            return Err(Error::param(format!(
                "need exec_time <= deadline <= period, got ({exec_time}, {deadline}, {period})"
            )));
        }
        Ok(Task {
            period,
            exec_time,
            deadline,
        })
    }

    pub fn period(&self) -> u64 {
        self.period
    }

    pub fn exec_time(&self) -> f64 {
        self.exec_time
    }

    pub fn deadline(&self) -> f64 {
        self.deadline
    }

    pub fn utilization(&self) -> f64 {
        self.exec_time / self.period as f64
    }

    /// Same task with a different execution time, revalidated.
    pub fn with_exec_time(&self, exec_time: f64) -> Result<Self> {
        Self::with_deadline(self.period, exec_time, self.deadline)
    }
}

/// A non-empty, ordered collection of periodic tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSet {
    tasks: Vec<Task>,
}

impl TaskSet {
    pub fn new(tasks: Vec<Task>) -> Result<Self> {
        if tasks.is_empty() {
            return Err(Error::param("a task set needs at least one task"));
        }
        Ok(TaskSet { tasks })
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    /// Always false; kept for clippy's `len_without_is_empty`.
    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&Task> {
        self.tasks.get(i)
    }

    /// Total utilization, the sum of `c_i / P_i`.
    pub fn utilization(&self) -> f64 {
        self.tasks.iter().map(Task::utilization).sum()
    }

    /// Returns a copy with task `i` removed, or `None` if that would leave
    /// the set empty.
    pub fn without(&self, i: usize) -> Option<TaskSet> {
        if self.tasks.len() <= 1 || i >= self.tasks.len() {
            return None;
        }
        let mut tasks = self.tasks.clone();
        tasks.remove(i);
        Some(TaskSet { tasks })
    }

    /// Returns a copy with task `i` replaced.
    pub fn with_task(&self, i: usize, task: Task) -> TaskSet {
        let mut tasks = self.tasks.clone();
        tasks[i] = task;
        TaskSet { tasks }
    }

    /// CSV with header `index,period,exec_time,deadline,utilization`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,period,exec_time,deadline,utilization\n");
        for (i, t) in self.tasks.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                i,
                t.period,
                t.exec_time,
                t.deadline,
                t.utilization()
            ));
        }
        out
    }
}

/// One task per line: `period exec_time [deadline]`. The deadline is only
/// written when it differs from the period.
impl fmt::Display for TaskSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in &self.tasks {
            if t.deadline == t.period as f64 {
                writeln!(f, "{} {}", t.period, t.exec_time)?;
            } else {
                writeln!(f, "{} {} {}", t.period, t.exec_time, t.deadline)?;
            }
        }
        Ok(())
    }
}

impl FromStr for TaskSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut tasks = Vec::new();
        for (idx, raw) in s.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse { line, message };
            let fields: Vec<&str> = content.split_whitespace().collect();
            if !(2..=3).contains(&fields.len()) {
                return Err(err(format!(
                    "expected `period exec_time [deadline]`, found {} fields",
                    fields.len()
                )));
            }
            let period: u64 = fields[0]
                .parse()
                .map_err(|_| err(format!("period `{}` is not a positive integer", fields[0])))?;
            let exec: f64 = fields[1]
                .parse()
                .map_err(|_| err(format!("execution time `{}` is not a number", fields[1])))?;
            let task = match fields.get(2) {
                Some(d) => {
                    let d: f64 = d
                        .parse()
                        .map_err(|_| err(format!("deadline `{d}` is not a number")))?;
                    Task::with_deadline(period, exec, d)
                }
                None => Task::new(period, exec),
            }
            .map_err(|e| err(e.to_string()))?;
            tasks.push(task);
        }
        if tasks.is_empty() {
            return Err(Error::Parse {
                line: 0,
                message: "no tasks found".into(),
            });
        }
        TaskSet::new(tasks)
    }
}

/// Template of an aperiodic job stream: identical jobs, each arriving no
/// earlier than the previous job's absolute deadline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JobStream {
    pub id: usize,
    pub exec_time: f64,
    pub rel_deadline: f64,
    /// Mean of the exponential gap between a job's deadline and the next
    /// arrival. Zero means back-to-back jobs.
    pub mean_gap: f64,
}

impl JobStream {
    pub fn new(id: usize, exec_time: f64, rel_deadline: f64, mean_gap: f64) -> Result<Self> {
        if !(exec_time.is_finite() && exec_time > 0.0) {
            return Err(Error::param("stream execution time must be positive"));
        }
        if !(rel_deadline.is_finite() && rel_deadline > 0.0) {
            return Err(Error::param("stream relative deadline must be positive"));
        }
        if !(mean_gap.is_finite() && mean_gap >= 0.0) {
            return Err(Error::param("stream mean gap must be finite and non-negative"));
        }
        Ok(JobStream {
            id,
            exec_time,
            rel_deadline,
            mean_gap,
        })
    }

    /// Synthetic utilization contribution `c / D` of one active job.
    pub fn density(&self) -> f64 {
        self.exec_time / self.rel_deadline
    }
}

/// A released job instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Job {
    pub stream_id: usize,
    pub arrival: f64,
    pub abs_deadline: f64,
    pub exec_time: f64,
}

impl Job {
    pub fn rel_deadline(&self) -> f64 {
        self.abs_deadline - self.arrival
    }

    pub fn density(&self) -> f64 {
        self.exec_time / self.rel_deadline()
    }
}
