//! Monte Carlo estimation of the schedulability probability `mu(U)` and of
//! the threshold it exhibits as the task count grows.
//!
//! Every trial draws a fresh task set from its own seed, derived from the
//! experiment seed and the trial's coordinates, so curves are identical no
//! matter how rayon splits the work.

use rayon::prelude::*;

use crate::gen::TaskSetGenerator;
use crate::rng::{child_rng, derive_seed};
use crate::sched::rm_schedulable;
use crate::stats::{isotonic_nonincreasing, level_crossing, linear_fit, wilson_interval, Z_95};
use crate::{Error, Result};

/// Default level for the threshold interval width: the 0.9 -> 0.1 drop.
pub const DEFAULT_EPSILON: f64 = 0.1;

/// One point of a threshold curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuEstimate {
    pub utilization: f64,
    pub successes: u64,
    pub trials: u64,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl MuEstimate {
    pub fn from_counts(utilization: f64, successes: u64, trials: u64) -> Self {
        let (ci_lo, ci_hi) = wilson_interval(successes, trials, Z_95);
        MuEstimate {
            utilization,
            successes,
            trials,
            p_hat: if trials == 0 { 0.0 } else { successes as f64 / trials as f64 },
            ci_lo,
            ci_hi,
        }
    }
}

/// Empirical success probability as a function of utilization.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdCurve {
    /// Number of tasks (or job streams).
    pub n: usize,
    /// Workload generator label, e.g. `uunisort`.
    pub generator: String,
    pub seed: u64,
    pub points: Vec<MuEstimate>,
}

impl ThresholdCurve {
    pub fn grid(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.utilization).collect()
    }

    pub fn p_hat(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.p_hat).collect()
    }

    fn weights(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.trials as f64).collect()
    }

    /// Isotonic (non-increasing) fit of `p_hat`, weighted by trial counts.
    pub fn fitted(&self) -> Vec<f64> {
        isotonic_nonincreasing(&self.p_hat(), &self.weights())
    }

    /// The point estimate closest to `u`, if any lies within `tol`.
    pub fn at(&self, u: f64, tol: f64) -> Option<&MuEstimate> {
        self.points
            .iter()
            .filter(|p| (p.utilization - u).abs() <= tol)
            .min_by(|a, b| {
                (a.utilization - u)
                    .abs()
                    .total_cmp(&(b.utilization - u).abs())
            })
    }

    /// CSV with header `utilization,p_hat,ci_lo,ci_hi,trials`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("utilization,p_hat,ci_lo,ci_hi,trials\n");
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                p.utilization, p.p_hat, p.ci_lo, p.ci_hi, p.trials
            ));
        }
        out
    }
}

/// Location and sharpness of a threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdEstimate {
    /// Where the fitted curve crosses 1/2.
    pub u_star: f64,
    /// 1/2 crossing of the fitted lower and upper 95% confidence curves.
    pub u_star_lo: f64,
    pub u_star_hi: f64,
    /// `U(epsilon) - U(1 - epsilon)` on the fitted curve.
    pub width: f64,
    pub epsilon: f64,
}

/// Utilization grid `u_min, u_min + step, ...` up to `u_max` inclusive.
/// Values are rounded to 10 decimals so the grid prints cleanly.
pub fn utilization_grid(u_min: f64, u_max: f64, step: f64) -> Result<Vec<f64>> {
    if !(u_min.is_finite() && u_max.is_finite() && u_min < u_max) {
        return Err(Error::param(format!("need u_min < u_max, got [{u_min}, {u_max}]")));
    }
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::param(format!("grid step must be positive, got {step}")));
    }
    if u_min < 0.0 {
        return Err(Error::param("utilization grid must be non-negative"));
    }
    let count = ((u_max - u_min) / step + 1e-9).floor() as usize + 1;
    Ok((0..count)
        .map(|k| ((u_min + k as f64 * step) * 1e10).round() / 1e10)
        .collect())
}

/// Fraction of `trials` random task sets of `n` tasks at utilization `u` that
/// are rate monotonic schedulable. Trial `t` uses the stream derived from
/// `(seed, t)`.
pub fn estimate_mu(
    n: usize,
    u: f64,
    trials: u64,
    generator: &TaskSetGenerator,
    seed: u64,
) -> Result<MuEstimate> {
    if trials == 0 {
        return Err(Error::param("need at least one trial"));
    }
    if n == 0 {
        return Err(Error::param("number of tasks must be at least 1"));
    }
    if !(u.is_finite() && u >= 0.0 && u <= n as f64) {
        return Err(Error::param(format!("utilization {u} outside [0, {n}]")));
    }
    if u == 0.0 {
        // no demand at all
        return Ok(MuEstimate::from_counts(u, trials, trials));
    }
    let successes = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = child_rng(seed, &[t]);
            generator
                .generate(n, u, &mut rng)
                .map(|ts| u64::from(rm_schedulable(&ts)))
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(MuEstimate::from_counts(u, successes, trials))
}

/// Parameters of a utilization sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepParams {
    pub n: usize,
    pub u_min: f64,
    pub u_max: f64,
    pub step: f64,
    pub trials: u64,
    pub generator: TaskSetGenerator,
}

impl SweepParams {
    /// Grid `[0.6, 1.0]` in steps of 0.02 with 2000 trials per point.
    pub fn acceptance(n: usize, generator: TaskSetGenerator) -> Self {
        SweepParams {
            n,
            u_min: 0.6,
            u_max: 1.0,
            step: 0.02,
            trials: 2000,
            generator,
        }
    }
}

/// One [`estimate_mu`] per grid point; grid point `k` uses seed
/// `derive_seed(seed, [k])`.
pub fn sweep(params: &SweepParams, seed: u64) -> Result<ThresholdCurve> {
    let grid = utilization_grid(params.u_min, params.u_max, params.step)?;
    let points = grid
        .iter()
        .enumerate()
        .map(|(k, &u)| {
            estimate_mu(
                params.n,
                u,
                params.trials,
                &params.generator,
                derive_seed(seed, &[k as u64]),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ThresholdCurve {
        n: params.n,
        generator: params.generator.tag().to_string(),
        seed,
        points,
    })
}

/// Locates the 1/2 crossing and the `epsilon` interval width on the
/// isotonic fit of `curve`.
pub fn locate_threshold(curve: &ThresholdCurve, epsilon: f64) -> Result<ThresholdEstimate> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::param(format!("epsilon must lie in (0, 0.5), got {epsilon}")));
    }
    let grid = curve.grid();
    let fit = curve.fitted();
    let u_star = level_crossing(&grid, &fit, 0.5)?;
    let width = level_crossing(&grid, &fit, epsilon)? - level_crossing(&grid, &fit, 1.0 - epsilon)?;

    let weights = curve.weights();
    let lo_curve: Vec<f64> = curve.points.iter().map(|p| p.ci_lo).collect();
    let hi_curve: Vec<f64> = curve.points.iter().map(|p| p.ci_hi).collect();
    let u_lo = level_crossing(&grid, &isotonic_nonincreasing(&lo_curve, &weights), 0.5)
        .unwrap_or(grid[0]);
    let u_hi = level_crossing(&grid, &isotonic_nonincreasing(&hi_curve, &weights), 0.5)
        .unwrap_or(grid[grid.len() - 1]);
    Ok(ThresholdEstimate {
        u_star,
        u_star_lo: u_lo.min(u_star),
        u_star_hi: u_hi.max(u_star),
        width: width.max(0.0),
        epsilon,
    })
}

/// Threshold widths across task counts and the fitted exponent `b` of
/// `width ~ n^b`.
#[derive(Debug, Clone, PartialEq)]
pub struct WidthScaling {
    pub points: Vec<(usize, ThresholdEstimate)>,
    pub intercept: f64,
    pub slope: f64,
}

/// Runs [`sweep`] and [`locate_threshold`] for each `n` (with `params.n`
/// overridden) and fits `log(width) = a + b log(n)`. The sweep for `n` uses
/// seed `derive_seed(seed, [n])`.
pub fn width_scaling(
    n_list: &[usize],
    params: &SweepParams,
    epsilon: f64,
    seed: u64,
) -> Result<WidthScaling> {
    let mut distinct = n_list.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::param("width scaling needs at least three distinct task counts"));
    }
    let points = n_list
        .iter()
        .map(|&n| {
            let p = SweepParams { n, ..params.clone() };
            let curve = sweep(&p, derive_seed(seed, &[n as u64]))?;
            Ok((n, locate_threshold(&curve, epsilon)?))
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some((n, _)) = points.iter().find(|(_, e)| e.width <= 0.0) {
        return Err(Error::Range(format!(
            "threshold width for n = {n} is zero; refine the grid"
        )));
    }
    let xs: Vec<f64> = points.iter().map(|(n, _)| (*n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, e)| e.width.ln()).collect();
    let (intercept, slope) = linear_fit(&xs, &ys)?;
    Ok(WidthScaling {
        points,
        intercept,
        slope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sched::ll_bound;

    fn synthetic(grid: &[f64], p: &[f64]) -> ThresholdCurve {
        ThresholdCurve {
            n: 1,
            generator: "synthetic".into(),
            seed: 0,
            points: grid
                .iter()
                .zip(p)
                .map(|(&u, &p)| MuEstimate::from_counts(u, (p * 1000.0).round() as u64, 1000))
                .collect(),
        }
    }

    #[test]
    fn grid_arithmetic() {
        assert_eq!(utilization_grid(0.6, 1.0, 0.02).unwrap().len(), 21);
        let g = utilization_grid(0.0, 1.0, 0.1).unwrap();
        assert_eq!(g.len(), 11);
        assert_eq!(g[3], 0.3);
        assert_eq!(utilization_grid(0.2, 0.3, 0.5).unwrap(), vec![0.2]);
        assert!(utilization_grid(0.5, 0.5, 0.1).is_err());
        assert!(utilization_grid(0.1, 0.5, 0.0).is_err());
    }

    #[test]
    fn step_curve_threshold() {
        let grid = utilization_grid(0.71, 0.89, 0.02).unwrap();
        let p: Vec<f64> = grid.iter().map(|&u| if u < 0.8 { 1.0 } else { 0.0 }).collect();
        let est = locate_threshold(&synthetic(&grid, &p), DEFAULT_EPSILON).unwrap();
        assert!((est.u_star - 0.8).abs() < 1e-9);
        assert!(est.width > 0.0 && est.width <= 0.02 + 1e-12);
        assert!(est.u_star_lo <= est.u_star && est.u_star <= est.u_star_hi);
    }

    #[test]
    fn noisy_curve_is_regressed_before_crossing() {
        let grid = [0.6, 0.7, 0.8, 0.9, 1.0];
        let p = [1.0, 0.4, 0.6, 0.1, 0.0];
        let curve = synthetic(&grid, &p);
        let fit = curve.fitted();
        assert!(fit.windows(2).all(|w| w[0] >= w[1]));
        let est = locate_threshold(&curve, DEFAULT_EPSILON).unwrap();
        // pooled plateau at 0.5 over [0.7, 0.8]
        assert!((est.u_star - 0.75).abs() < 1e-9);
    }

    #[test]
    fn no_crossing_is_a_range_error() {
        let curve = synthetic(&[0.1, 0.2, 0.3], &[1.0, 1.0, 0.9]);
        assert!(matches!(locate_threshold(&curve, 0.1), Err(Error::Range(_))));
        assert!(locate_threshold(&curve, 0.7).is_err());
    }

    #[test]
    fn below_ll_bound_always_schedulable() {
        for n in [2, 8, 32] {
            let u = ll_bound(n).unwrap() - 0.05;
            let m = estimate_mu(n, u, 500, &TaskSetGenerator::uunisort(), 11).unwrap();
            assert_eq!(m.successes, m.trials);
        }
        let m = estimate_mu(8, 0.1, 10_000, &TaskSetGenerator::uunisort(), 12).unwrap();
        assert!(m.p_hat >= 0.999);
    }

    #[test]
    fn above_one_never_schedulable() {
        let m = estimate_mu(8, 1.01, 500, &TaskSetGenerator::uunisort(), 3).unwrap();
        assert_eq!(m.successes, 0);
        assert_eq!(m.p_hat, 0.0);
    }

    #[test]
    fn zero_utilization_is_trivially_schedulable() {
        let m = estimate_mu(8, 0.0, 10, &TaskSetGenerator::uunisort(), 3).unwrap();
        assert_eq!(m.p_hat, 1.0);
    }

    #[test]
    fn estimate_mu_errors() {
        let g = TaskSetGenerator::uunisort();
        assert!(estimate_mu(8, 0.5, 0, &g, 0).is_err());
        assert!(estimate_mu(0, 0.5, 10, &g, 0).is_err());
        assert!(estimate_mu(2, 2.5, 10, &g, 0).is_err());
        assert!(estimate_mu(2, -0.1, 10, &g, 0).is_err());
    }

    #[test]
    fn sweep_is_reproducible_and_spans_full_range() {
        let params = SweepParams {
            n: 8,
            u_min: 0.0,
            u_max: 1.0,
            step: 0.1,
            trials: 300,
            generator: TaskSetGenerator::uunisort(),
        };
        let a = sweep(&params, 5).unwrap();
        let b = sweep(&params, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.points.len(), 11);
        assert_eq!(a.points[0].p_hat, 1.0);
        assert!(a.points[10].p_hat < 0.05);
        assert!(a.to_csv().starts_with("utilization,p_hat,ci_lo,ci_hi,trials\n"));
    }

    #[test]
    fn width_scaling_requires_three_sizes() {
        let params = SweepParams::acceptance(8, TaskSetGenerator::uunisort());
        assert!(width_scaling(&[8], &params, 0.1, 0).is_err());
        assert!(width_scaling(&[8, 8, 16], &params, 0.1, 0).is_err());
    }
}
