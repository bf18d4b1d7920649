use std::fs;

use rayon::prelude::*;
use sharpsched::apsim::{
    gen_streams_with_duty, peak_synthetic_utilization, release_all, scale_workload, simulate_jobs,
    synthetic_sweep, trace_to_csv, SimConfig, SyntheticSweepParams,
};
use sharpsched::dvs::{
    default_classes, run_workload, ControllerParams, DvsProfile, ServiceClass, WorkloadParams,
    DEFAULT_ENERGY_COEFF,
};
use sharpsched::gen::TaskSetGenerator;
use sharpsched::rng::{derive_seed, rng_from_seed};
use sharpsched::sched::{analyze, ll_bound, rm_order, ResponseTime};
use sharpsched::threshold::{locate_threshold, sweep, width_scaling, SweepParams, ThresholdCurve};
use sharpsched::TaskSet;
use thiserror::Error;

use crate::config::{Command, ConfigError, ExperimentConfig, Format, Recipe};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] sharpsched::Error),
    #[error("{path}: {message}")]
    File { path: String, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// What a command produced.
#[derive(Debug, Default)]
pub struct Output {
    pub csv: String,
    /// Human-readable summary lines (stderr).
    pub notes: Vec<String>,
    /// Printed on stdout even when the CSV goes to a file.
    pub verdict: Option<String>,
    pub exit_code: i32,
    /// Additional files to write, as `(path, contents)`.
    pub extra: Vec<(String, String)>,
}

pub fn run(cfg: &ExperimentConfig) -> Result<Output, RunError> {
    match cfg.command {
        Command::Gen => gen(cfg),
        Command::Check => check(cfg),
        Command::Sweep => sweep_cmd(cfg),
        Command::Threshold => threshold_cmd(cfg),
        Command::Width => width_cmd(cfg),
        Command::Apsim => apsim_cmd(cfg),
        Command::Dvs => dvs_cmd(cfg),
        Command::Recipe => recipe_cmd(cfg),
    }
}

fn read(path: &str) -> Result<String, RunError> {
    fs::read_to_string(path).map_err(|e| RunError::File {
        path: path.to_string(),
        message: e.to_string(),
    })
}

fn table(header: &[&str], rows: Vec<Vec<String>>) -> Result<String, RunError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| RunError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn generator(cfg: &ExperimentConfig) -> TaskSetGenerator {
    TaskSetGenerator {
        utilization: cfg.generator,
        periods: cfg.periods.clone(),
    }
}

fn sweep_params(cfg: &ExperimentConfig, n: usize) -> SweepParams {
    SweepParams {
        n,
        u_min: cfg.u_min,
        u_max: cfg.u_max,
        step: cfg.step,
        trials: cfg.trials,
        generator: generator(cfg),
    }
}

fn gen(cfg: &ExperimentConfig) -> Result<Output, RunError> {
    let mut rng = rng_from_seed(cfg.seed);
    let ts = generator(cfg).generate(cfg.n, cfg.u, &mut rng)?;
    let csv = match cfg.format {
        Format::Csv => ts.to_csv(),
        Format::Text => ts.to_string(),
    };
    Ok(Output {
        csv,
        notes: vec![format!("{} tasks, utilization {}", ts.len(), ts.utilization())],
        ..Output::default()
    })
}

fn check(cfg: &ExperimentConfig) -> Result<Output, RunError> {
    let path = cfg.input.as_deref().ok_or_else(|| ConfigError {
        line: None,
        field: Some("input".into()),
        message: "missing; pass a task set file".into(),
    })?;
    let ts: TaskSet = read(path)?.parse().map_err(|e: sharpsched::Error| RunError::File {
        path: path.to_string(),
        message: e.to_string(),
    })?;
    let result = analyze(&ts);
    let order = rm_order(&ts);
    let rows = ts
        .tasks()
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let r = result.per_task[i];
            vec![
                i.to_string(),
                t.period().to_string(),
                t.exec_time().to_string(),
                t.deadline().to_string(),
                order.rank_of(i).expect("every task is ranked").to_string(),
                match r {
                    ResponseTime::Bounded(v) => v.to_string(),
                    ResponseTime::ExceedsDeadline => String::new(),
                },
                r.meets_deadline().to_string(),
            ]
        })
        .collect();
    let csv = table(
        &["index", "period", "exec_time", "deadline", "priority", "response_time", "meets_deadline"],
        rows,
    )?;
    let verdict = if result.schedulable { "schedulable" } else { "unschedulable" };
    Ok(Output {
        csv,
        notes: vec![format!(
            "utilization {:.6}, Liu-Layland bound {:.6}",
            ts.utilization(),
            ll_bound(ts.len())?
        )],
        verdict: Some(verdict.to_string()),
        exit_code: if result.schedulable { 0 } else { 1 },
        extra: Vec::new(),
    })
}

fn threshold_note(curve: &ThresholdCurve, epsilon: f64) -> String {
    match locate_threshold(curve, epsilon) {
        Ok(e) => format!(
            "n={} {}: u* = {:.4} [{:.4}, {:.4}], width {:.4}",
            curve.n, curve.generator, e.u_star, e.u_star_lo, e.u_star_hi, e.width
        ),
        Err(e) => format!("n={} {}: {e}", curve.n, curve.generator),
    }
}

fn sweep_cmd(cfg: &ExperimentConfig) -> Result<Output, RunError> {
    let curve = sweep(&sweep_params(cfg, cfg.n), cfg.seed)?;
    Ok(Output {
        csv: curve.to_csv(),
        notes: vec![threshold_note(&curve, cfg.epsilon)],
        ..Output::default()
    })
}

fn threshold_cmd(cfg: &ExperimentConfig) -> Result<Output, RunError> {
    let curve = sweep(&sweep_params(cfg, cfg.n), cfg.seed)?;
    let e = locate_threshold(&curve, cfg.epsilon)?;
    let csv = table(
        &["n", "generator", "u_star", "u_star_lo", "u_star_hi", "width", "epsilon"],
        vec![vec![
            curve.n.to_string(),
            curve.generator.clone(),
            e.u_star.to_string(),
            e.u_star_lo.to_string(),
            e.u_star_hi.to_string(),
            e.width.to_string(),
            e.epsilon.to_string(),
        ]],
    )?;
    Ok(Output {
        csv,
        notes: vec![threshold_note(&curve, cfg.epsilon)],
        ..Output::default()
    })
}

fn width_cmd(cfg: &ExperimentConfig) -> Result<Output, RunError> {
    let ws = width_scaling(&cfg.n_list, &sweep_params(cfg, cfg.n_list[0]), cfg.epsilon, cfg.seed)?;
    let rows = ws
        .points
        .iter()
        .map(|(n, e)| {
            vec![
                n.to_string(),
                e.u_star.to_string(),
                e.u_star_lo.to_string(),
                e.u_star_hi.to_string(),
                e.width.to_string(),
            ]
        })
        .collect();
    Ok(Output {
        csv: table(&["n", "u_star", "u_star_lo", "u_star_hi", "width"], rows)?,
        notes: vec![format!(
            "log(width) = {:.4} + {:.4} log(n)",
            ws.intercept, ws.slope
        )],
        ..Output::default()
    })
}

fn synthetic_params(cfg: &ExperimentConfig) -> SyntheticSweepParams {
    SyntheticSweepParams {
        n_streams: cfg.streams,
        max_cd_ratio: cfg.max_cd,
        deadline_range: (cfg.deadline_min, cfg.deadline_max),
        duty: cfg.duty,
        horizon_factor: cfg.horizon_factor,
        u_min: cfg.u_min,
        u_max: cfg.u_max,
        step: cfg.step,
        trials: cfg.trials,
    }
}

fn apsim_cmd(cfg: &ExperimentConfig) -> Result<Output, RunError> {
    let params = synthetic_params(cfg);
    let Some(peak) = cfg.peak else {
        let curve = synthetic_sweep(&params, cfg.seed)?;
        return Ok(Output {
            csv: curve.to_csv(),
            notes: vec![threshold_note(&curve, cfg.epsilon)],
            ..Output::default()
        });
    };

    if !(peak > 0.0) {
        return Err(ConfigError {
            line: None,
            field: Some("peak".into()),
            message: "must be positive".into(),
        }
        .into());
    }
    let mut rng = rng_from_seed(cfg.seed);
    let streams = gen_streams_with_duty(
        params.n_streams,
        params.max_cd_ratio,
        params.deadline_range,
        params.duty,
        &mut rng,
    )?;
    let horizon = params.horizon();
    let jobs = release_all(&streams, horizon, &mut rng);
    let observed = peak_synthetic_utilization(&jobs);
    let factor = if observed > 0.0 { peak / observed } else { 1.0 };
    let (streams, jobs) = scale_workload(&streams, &jobs, factor);
    let config = SimConfig {
        record_trace: cfg.trace.is_some(),
        ..SimConfig::new(horizon)
    };
    let outcome = simulate_jobs(&streams, &jobs, &config);
    let report = &outcome.report;
    let rows = streams
        .iter()
        .map(|s| {
            let st = report.per_stream[s.id];
            vec![
                s.id.to_string(),
                s.exec_time.to_string(),
                s.rel_deadline.to_string(),
                s.mean_gap.to_string(),
                st.released.to_string(),
                st.completed.to_string(),
                st.missed.to_string(),
                st.max_response.to_string(),
            ]
        })
        .collect();
    let csv = table(
        &[
            "stream",
            "exec_time",
            "rel_deadline",
            "mean_gap",
            "released",
            "completed",
            "missed",
            "max_response",
        ],
        rows,
    )?;
    let mut extra = Vec::new();
    if let Some(path) = &cfg.trace {
        extra.push((path.clone(), trace_to_csv(&outcome.trace)));
    }
    Ok(Output {
        csv,
        notes: vec![format!(
            "released {}, completed {}, missed {} ({:.4}), in flight {}, max U {:.4}",
            report.released,
            report.completed,
            report.missed,
            report.miss_fraction(),
            report.in_flight,
            report.max_synthetic_utilization
        )],
        extra,
        ..Output::default()
    })
}

fn dvs_cmd(cfg: &ExperimentConfig) -> Result<Output, RunError> {
    let base = match &cfg.profile {
        Some(path) => read(path)?.parse().map_err(|e: sharpsched::Error| RunError::File {
            path: path.clone(),
            message: e.to_string(),
        })?,
        None => DvsProfile::pentium_m(),
    };
    let profile = DvsProfile::new(base.points().to_vec(), DEFAULT_ENERGY_COEFF, cfg.static_fraction)?;
    let classes = default_classes()
        .into_iter()
        .map(|c| ServiceClass::new(c.rel_deadline, c.base_exec_time, cfg.compute_fraction))
        .collect::<sharpsched::Result<Vec<_>>>()?;
    let combos: Vec<(f64, f64)> = cfg
        .loads
        .iter()
        .flat_map(|&l| cfg.set_points.iter().map(move |&s| (l, s)))
        .collect();
    let reports = combos
        .par_iter()
        .map(|&(load, set_point)| {
            let workload = WorkloadParams {
                sessions: cfg.sessions,
                session_len: (cfg.session_min, cfg.session_max),
                load,
                think_time: cfg.think_time,
                exec_scale: cfg.exec_scale,
                noise: cfg.noise,
            };
            let controller = ControllerParams {
                set_point,
                hysteresis_delay: cfg.hysteresis,
            };
            run_workload(&profile, &classes, &workload, &controller, cfg.seed)
        })
        .collect::<sharpsched::Result<Vec<_>>>()?;
    let rows = reports
        .iter()
        .map(|r| {
            vec![
                r.load.to_string(),
                r.set_point.to_string(),
                r.energy.to_string(),
                r.avg_power.to_string(),
                r.miss_fraction().to_string(),
                r.admitted.to_string(),
                r.rejected.to_string(),
            ]
        })
        .collect();
    let notes = reports
        .iter()
        .map(|r| {
            format!(
                "load {} set point {}: {:.1} J, {:.3} W, misses {:.4}, rejected {}",
                r.load,
                r.set_point,
                r.energy,
                r.avg_power,
                r.miss_fraction(),
                r.rejected
            )
        })
        .collect();
    Ok(Output {
        csv: table(
            &["load", "set_point", "energy", "avg_power", "miss_fraction", "admitted", "rejected"],
            rows,
        )?,
        notes,
        ..Output::default()
    })
}

fn curves_cmd(cfg: &ExperimentConfig) -> Result<Output, RunError> {
    let mut rows = Vec::new();
    let mut notes = Vec::new();
    for &n in &cfg.n_list {
        let curve = sweep(&sweep_params(cfg, n), derive_seed(cfg.seed, &[n as u64]))?;
        notes.push(threshold_note(&curve, cfg.epsilon));
        for p in &curve.points {
            rows.push(vec![
                n.to_string(),
                curve.generator.clone(),
                p.utilization.to_string(),
                p.p_hat.to_string(),
                p.ci_lo.to_string(),
                p.ci_hi.to_string(),
                p.trials.to_string(),
            ]);
        }
    }
    Ok(Output {
        csv: table(
            &["n", "generator", "utilization", "p_hat", "ci_lo", "ci_hi", "trials"],
            rows,
        )?,
        notes,
        ..Output::default()
    })
}

fn recipe_cmd(cfg: &ExperimentConfig) -> Result<Output, RunError> {
    let recipe = cfg.recipe.ok_or_else(|| ConfigError {
        line: None,
        field: Some("recipe".into()),
        message: "missing; name a recipe".into(),
    })?;
    match recipe {
        Recipe::Fig3a | Recipe::Fig3b | Recipe::Fig5 => curves_cmd(cfg),
        Recipe::Fig4 => {
            let curve = synthetic_sweep(&synthetic_params(cfg), cfg.seed)?;
            Ok(Output {
                csv: curve.to_csv(),
                notes: vec![threshold_note(&curve, cfg.epsilon)],
                ..Output::default()
            })
        }
        Recipe::Fig8 => dvs_cmd(cfg),
    }
}
