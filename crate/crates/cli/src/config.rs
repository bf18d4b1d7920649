//! Flat `key = value` experiment configuration.

use std::fmt;
use std::str::FromStr;

use sharpsched::dvs::ExecNoise;
use sharpsched::gen::{PeriodRule, UtilizationRule};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub field: Option<String>,
    pub message: String,
}

impl ConfigError {
    fn field(field: &str, message: impl Into<String>) -> Self {
        ConfigError {
            line: None,
            field: Some(field.to_string()),
            message: message.into(),
        }
    }

    pub fn at_line(mut self, line: usize) -> Self {
        self.line = Some(line);
        self
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        if let Some(field) = &self.field {
            write!(f, "field `{field}`: ")?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Gen,
    Check,
    Sweep,
    Threshold,
    Width,
    Apsim,
    Dvs,
    Recipe,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::Gen,
        Command::Check,
        Command::Sweep,
        Command::Threshold,
        Command::Width,
        Command::Apsim,
        Command::Dvs,
        Command::Recipe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Gen => "gen",
            Command::Check => "check",
            Command::Sweep => "sweep",
            Command::Threshold => "threshold",
            Command::Width => "width",
            Command::Apsim => "apsim",
            Command::Dvs => "dvs",
            Command::Recipe => "recipe",
        }
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown command `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Recipe {
    Fig3a,
    Fig3b,
    Fig4,
    Fig5,
    Fig8,
}

impl Recipe {
    pub const ALL: [Recipe; 5] = [Recipe::Fig3a, Recipe::Fig3b, Recipe::Fig4, Recipe::Fig5, Recipe::Fig8];

    pub fn name(self) -> &'static str {
        match self {
            Recipe::Fig3a => "fig3a",
            Recipe::Fig3b => "fig3b",
            Recipe::Fig4 => "fig4",
            Recipe::Fig5 => "fig5",
            Recipe::Fig8 => "fig8",
        }
    }
}

impl FromStr for Recipe {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Recipe::ALL.into_iter().find(|r| r.name() == s).ok_or_else(|| {
            let known: Vec<_> = Recipe::ALL.iter().map(|r| r.name()).collect();
            format!("unknown recipe `{s}` (known: {})", known.join(", "))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Text,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "text" => Ok(Format::Text),
            _ => Err(format!("unknown format `{s}` (csv or text)")),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Text => "text",
        })
    }
}

/// Fully resolved settings for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub command: Command,
    pub recipe: Option<Recipe>,
    pub seed: u64,
    pub out: Option<String>,

    // task sets
    pub input: Option<String>,
    pub format: Format,
    pub n: usize,
    pub n_list: Vec<usize>,
    pub u: f64,
    pub generator: UtilizationRule,
    pub periods: PeriodRule,

    // threshold sweeps
    pub u_min: f64,
    pub u_max: f64,
    pub step: f64,
    pub trials: u64,
    pub epsilon: f64,

    // aperiodic streams
    pub streams: usize,
    pub max_cd: f64,
    pub deadline_min: f64,
    pub deadline_max: f64,
    pub duty: f64,
    pub horizon_factor: f64,
    pub peak: Option<f64>,
    pub trace: Option<String>,

    // power control
    pub set_points: Vec<f64>,
    pub loads: Vec<f64>,
    pub sessions: usize,
    pub session_min: usize,
    pub session_max: usize,
    pub think_time: f64,
    pub noise: ExecNoise,
    pub exec_scale: f64,
    pub hysteresis: f64,
    pub profile: Option<String>,
    pub static_fraction: f64,
    pub compute_fraction: f64,
}

pub const DEFAULT_SEED: u64 = 1;

impl ExperimentConfig {
    /// Defaults for `command`; recipes adjust them further.
    pub fn defaults(command: Command, recipe: Option<Recipe>) -> Self {
        let mut c = ExperimentConfig {
            command,
            recipe,
            seed: DEFAULT_SEED,
            out: None,
            input: None,
            format: Format::Csv,
            n: 64,
            n_list: vec![8, 16, 32, 64],
            u: 0.8,
            generator: UtilizationRule::UUniSort,
            periods: PeriodRule::default_uniform(),
            u_min: 0.6,
            u_max: 1.0,
            step: 0.02,
            trials: 2000,
            epsilon: 0.1,
            streams: 100,
            max_cd: 0.125,
            deadline_min: 10.0,
            deadline_max: 100.0,
            duty: 0.99,
            horizon_factor: 100.0,
            peak: None,
            trace: None,
            set_points: vec![0.75],
            loads: vec![0.5],
            sessions: 1000,
            session_min: 2,
            session_max: 16,
            think_time: 500.0,
            noise: ExecNoise::Exponential,
            exec_scale: 1.0,
            hysteresis: 100.0,
            profile: None,
            static_fraction: 0.0,
            compute_fraction: 0.9,
        };
        if command == Command::Apsim {
            c.apsim_grid();
        }
        match recipe {
            Some(Recipe::Fig3b) => c.generator = UtilizationRule::EqualSplit,
            Some(Recipe::Fig5) => {
                c.periods = PeriodRule::restricted();
                c.n_list = vec![32];
            }
            Some(Recipe::Fig4) => c.apsim_grid(),
            Some(Recipe::Fig8) => {
                c.set_points = vec![0.586, 0.65, 0.70, 0.75, 0.80];
                c.loads = vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8];
            }
            Some(Recipe::Fig3a) | None => {}
        }
        c
    }

    fn apsim_grid(&mut self) {
        self.u_min = 0.5;
        self.trials = 100;
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        let err = |m: String| ConfigError::field(key, m);
        match key {
            "command" => self.command = v.parse().map_err(err)?,
            "recipe" => self.recipe = Some(v.parse().map_err(err)?),
            "seed" => self.seed = num(key, v)?,
            "out" => self.out = Some(v.to_string()),
            "input" => self.input = Some(v.to_string()),
            "format" => self.format = v.parse().map_err(err)?,
            "n" => self.n = positive(key, num(key, v)?)?,
            "n_list" => {
                self.n_list = list(key, v)?;
                if self.n_list.iter().any(|&n| n == 0) {
                    return Err(err("sizes must be positive".into()));
                }
            }
            "u" => self.u = num(key, v)?,
            "generator" => self.generator = v.parse().map_err(|e| err(format!("{e}")))?,
            "periods" => self.periods = v.parse().map_err(|e| err(format!("{e}")))?,
            "u_min" => self.u_min = num(key, v)?,
            "u_max" => self.u_max = num(key, v)?,
            "step" => self.step = num(key, v)?,
            "trials" => self.trials = positive(key, num(key, v)?)?,
            "epsilon" => {
                self.epsilon = num(key, v)?;
                if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
                    return Err(err("must lie in (0, 0.5)".into()));
                }
            }
            "streams" => self.streams = positive(key, num(key, v)?)?,
            "max_cd" => self.max_cd = num(key, v)?,
            "deadline_min" => self.deadline_min = num(key, v)?,
            "deadline_max" => self.deadline_max = num(key, v)?,
            "duty" => self.duty = num(key, v)?,
            "horizon_factor" => self.horizon_factor = num(key, v)?,
            "peak" => self.peak = Some(num(key, v)?),
            "trace" => self.trace = Some(v.to_string()),
            "set_points" => self.set_points = nonempty(key, list(key, v)?)?,
            "loads" => self.loads = nonempty(key, list(key, v)?)?,
            "sessions" => self.sessions = positive(key, num(key, v)?)?,
            "session_min" => self.session_min = positive(key, num(key, v)?)?,
            "session_max" => self.session_max = positive(key, num(key, v)?)?,
            "think_time" => self.think_time = num(key, v)?,
            "noise" => self.noise = v.parse().map_err(|e| err(format!("{e}")))?,
            "exec_scale" => self.exec_scale = num(key, v)?,
            "hysteresis" => self.hysteresis = num(key, v)?,
            "profile" => self.profile = Some(v.to_string()),
            "static_fraction" => self.static_fraction = num(key, v)?,
            "compute_fraction" => self.compute_fraction = num(key, v)?,
            _ => return Err(err("unknown field".into())),
        }
        Ok(())
    }

    /// Serializes every field; parsing the result gives back `self`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
        put("command", self.command.name().to_string());
        if let Some(r) = self.recipe {
            put("recipe", r.name().to_string());
        }
        put("seed", self.seed.to_string());
        if let Some(o) = &self.out {
            put("out", o.clone());
        }
        if let Some(i) = &self.input {
            put("input", i.clone());
        }
        put("format", self.format.to_string());
        put("n", self.n.to_string());
        put("n_list", join(&self.n_list));
        put("u", self.u.to_string());
        put("generator", self.generator.to_string());
        put("periods", self.periods.to_string());
        put("u_min", self.u_min.to_string());
        put("u_max", self.u_max.to_string());
        put("step", self.step.to_string());
        put("trials", self.trials.to_string());
        put("epsilon", self.epsilon.to_string());
        put("streams", self.streams.to_string());
        put("max_cd", self.max_cd.to_string());
        put("deadline_min", self.deadline_min.to_string());
        put("deadline_max", self.deadline_max.to_string());
        put("duty", self.duty.to_string());
        put("horizon_factor", self.horizon_factor.to_string());
        if let Some(p) = self.peak {
            put("peak", p.to_string());
        }
        if let Some(t) = &self.trace {
            put("trace", t.clone());
        }
        put("set_points", join(&self.set_points));
        put("loads", join(&self.loads));
        put("sessions", self.sessions.to_string());
        put("session_min", self.session_min.to_string());
        put("session_max", self.session_max.to_string());
        put("think_time", self.think_time.to_string());
        put("noise", self.noise.to_string());
        put("exec_scale", self.exec_scale.to_string());
        put("hysteresis", self.hysteresis.to_string());
        if let Some(p) = &self.profile {
            put("profile", p.clone());
        }
        put("static_fraction", self.static_fraction.to_string());
        put("compute_fraction", self.compute_fraction.to_string());
        out
    }

    /// Builds a config from file text alone.
    #[cfg(test)]
    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let pairs = parse_pairs(text)?;
        let lookup = |k: &str| pairs.iter().rev().find(|p| p.1 == k);
        let command = match lookup("command") {
            Some((line, _, v)) => v
                .parse()
                .map_err(|e: String| ConfigError::field("command", e).at_line(*line))?,
            None => {
                return Err(ConfigError::field("command", "missing; name a subcommand"));
            }
        };
        let recipe = match lookup("recipe") {
            Some((line, _, v)) => Some(
                v.parse()
                    .map_err(|e: String| ConfigError::field("recipe", e).at_line(*line))?,
            ),
            None => None,
        };
        let mut cfg = ExperimentConfig::defaults(command, recipe);
        for (line, k, v) in &pairs {
            cfg.set(k, v).map_err(|e| e.at_line(*line))?;
        }
        Ok(cfg)
    }
}

/// Reads `key = value` lines; `#` starts a comment. The `version` key of run
/// records is skipped.
pub fn parse_pairs(text: &str) -> Result<Vec<(usize, String, String)>, ConfigError> {
    let mut pairs = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((k, v)) = content.split_once('=') else {
            return Err(ConfigError {
                line: Some(line),
                field: None,
                message: format!("expected `key = value`, got `{content}`"),
            });
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(ConfigError {
                line: Some(line),
                field: None,
                message: "empty key".into(),
            });
        }
        if k == "version" {
            continue;
        }
        pairs.push((line, k.to_string(), v.to_string()));
    }
    Ok(pairs)
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse()
        .map_err(|_| ConfigError::field(key, format!("invalid number `{v}`")))
}

fn positive<T: PartialEq + Default>(key: &str, v: T) -> Result<T, ConfigError> {
    if v == T::default() {
        Err(ConfigError::field(key, "must be positive"))
    } else {
        Ok(v)
    }
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, ConfigError> {
    v.split(',')
        .map(|s| num(key, s.trim()))
        .collect()
}

fn nonempty<T>(key: &str, v: Vec<T>) -> Result<Vec<T>, ConfigError> {
    if v.is_empty() {
        Err(ConfigError::field(key, "needs at least one value"))
    } else {
        Ok(v)
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}
