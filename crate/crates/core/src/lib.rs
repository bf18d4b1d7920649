//! Schedulability thresholds for fixed-priority preemptive scheduling.
//!
//! The crate is organized bottom-up:
//!
//! * [`model`] and [`gen`]: periodic task sets, aperiodic job streams and the
//!   random workload generators used by the experiments.
//! * [`sched`]: exact response-time analysis, the Liu–Layland bound and a
//!   hyperperiod simulation oracle.
//! * [`threshold`]: Monte Carlo estimation of the schedulability probability
//!   as a function of utilization, threshold location and interval width.
//! * [`apsim`]: a discrete-event simulator for deadline-monotonic scheduling
//!   of aperiodic job streams with synthetic utilization tracking.
//! * [`dvs`]: a simulated request server that combines synthetic utilization
//!   admission control with frequency/voltage scaling.

pub mod apsim;
pub mod dvs;
mod error;
pub mod gen;
pub mod model;
pub mod rng;
pub mod sched;
pub mod stats;
pub mod threshold;

pub use error::{Error, Result};
pub use model::{Job, JobStream, Task, TaskSet};
