//! Small statistics toolkit for threshold curves.

use crate::{Error, Result};

/// Two-sided 95% standard normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `successes` out of `trials` at the given `z`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if successes == trials { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

/// Weighted least-squares non-increasing fit (pool adjacent violators).
pub fn isotonic_nonincreasing(values: &[f64], weights: &[f64]) -> Vec<f64> {
    assert_eq!(values.len(), weights.len());
    // blocks of (weighted mean, total weight, length)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        let mut cur = (v, w, 1usize);
        while let Some(&(pv, pw, pl)) = blocks.last() {
            if pv >= cur.0 {
                break;
            }
            blocks.pop();
            let tw = pw + cur.1;
            let mean = if tw > 0.0 {
                (pv * pw + cur.0 * cur.1) / tw
            } else {
                (pv + cur.0) / 2.0
            };
            cur = (mean, tw, pl + cur.2);
        }
        blocks.push(cur);
    }
    blocks
        .into_iter()
        .flat_map(|(v, _, len)| std::iter::repeat_n(v, len))
        .collect()
}

/// Location where a non-increasing piecewise-linear curve through
/// `(xs[k], ys[k])` crosses `level`.
///
/// If the curve sits exactly on `level` over an interval, the midpoint of
/// that interval is returned. Errors if the curve does not reach `level`
/// from both sides inside the grid.
pub fn level_crossing(xs: &[f64], ys: &[f64], level: f64) -> Result<f64> {
    assert_eq!(xs.len(), ys.len());
    let (first, last) = match (ys.first(), ys.last()) {
        (Some(&f), Some(&l)) => (f, l),
        _ => return Err(Error::Range("empty curve".into())),
    };
    if !(first >= level && last <= level && first > last) {
        return Err(Error::Range(format!(
            "curve spans [{last:.4}, {first:.4}] and does not cross {level} inside \
             [{:.4}, {:.4}]; widen the sweep",
            xs[0],
            xs[xs.len() - 1]
        )));
    }
    let interp = |k: usize| {
        let (x0, x1, y0, y1) = (xs[k], xs[k + 1], ys[k], ys[k + 1]);
        x0 + (y0 - level) / (y0 - y1) * (x1 - x0)
    };
    // sup { x : f(x) >= level }
    let k = ys.iter().rposition(|&y| y >= level).expect("first >= level");
    let hi = if k + 1 == ys.len() { xs[k] } else { interp(k) };
    // inf { x : f(x) <= level }
    let k = ys.iter().position(|&y| y <= level).expect("last <= level");
    let lo = if k == 0 { xs[0] } else { interp(k - 1) };
    Ok((lo + hi) / 2.0)
}

/// Ordinary least squares `y = a + b x`; returns `(a, b)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::param("linear fit needs at least two points"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::param("linear fit needs distinct x values"));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let b = sxy / sxx;
    Ok((my - b * mx, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn wilson_known_values() {
        // 8/10 at 95%: textbook interval (0.4902, 0.9433)
        let (lo, hi) = wilson_interval(8, 10, Z_95);
        assert!((lo - 0.4902).abs() < 1e-4, "{lo}");
        assert!((hi - 0.9433).abs() < 1e-4, "{hi}");
        let (lo, hi) = wilson_interval(0, 100, Z_95);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.03 && hi < 0.04);
        let (lo, hi) = wilson_interval(100, 100, Z_95);
        assert_eq!(hi, 1.0);
        assert!(lo > 0.96);
    }

    #[test]
    fn pava_pools_violators() {
        let fit = isotonic_nonincreasing(&[1.0, 0.8, 0.9, 0.2, 0.3, 0.0], &[1.0; 6]);
        let expect = [1.0, 0.85, 0.85, 0.25, 0.25, 0.0];
        for (a, b) in fit.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        let fit = isotonic_nonincreasing(&[0.0, 1.0], &[3.0, 1.0]);
        assert_eq!(fit, vec![0.25, 0.25]);
    }

    #[test]
    fn crossing_of_step_curve() {
        let xs = [0.74, 0.76, 0.78, 0.82, 0.84];
        let ys = [1.0, 1.0, 1.0, 0.0, 0.0];
        assert!((level_crossing(&xs, &ys, 0.5).unwrap() - 0.8).abs() < 1e-12);
        let w = level_crossing(&xs, &ys, 0.1).unwrap() - level_crossing(&xs, &ys, 0.9).unwrap();
        assert!((w - 0.8 * 0.04).abs() < 1e-12);
    }

    #[test]
    fn crossing_on_plateau_takes_midpoint() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [1.0, 0.5, 0.5, 0.0];
        assert!((level_crossing(&xs, &ys, 0.5).unwrap() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn crossing_missing_is_range_error() {
        assert!(matches!(
            level_crossing(&[0.0, 1.0], &[1.0, 0.7], 0.5),
            Err(Error::Range(_))
        ));
        assert!(level_crossing(&[0.0, 1.0], &[0.3, 0.1], 0.5).is_err());
        assert!(level_crossing(&[], &[], 0.5).is_err());
    }

    #[test]
    fn fit_recovers_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 0.5 - 0.5 * x).collect();
        let (a, b) = linear_fit(&xs, &ys).unwrap();
        assert!((a - 0.5).abs() < 1e-12 && (b + 0.5).abs() < 1e-12);
        assert!(linear_fit(&[1.0, 1.0], &[0.0, 1.0]).is_err());
        assert!(linear_fit(&[1.0], &[0.0]).is_err());
    }

    proptest! {
        #[test]
        fn pava_output_is_nonincreasing_and_preserves_mass(
            pts in prop::collection::vec((0.0f64..1.0, 1.0f64..100.0), 1..40)
        ) {
            let (v, w): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            let fit = isotonic_nonincreasing(&v, &w);
            prop_assert!(fit.windows(2).all(|p| p[0] >= p[1] - 1e-12));
            let mass: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
            let fit_mass: f64 = fit.iter().zip(&w).map(|(a, b)| a * b).sum();
            prop_assert!((mass - fit_mass).abs() < 1e-8 * mass.max(1.0));
        }

        #[test]
        fn wilson_contains_point_estimate(trials in 1u64..5000, frac in 0.0f64..=1.0) {
            let s = (frac * trials as f64).floor() as u64;
            let (lo, hi) = wilson_interval(s, trials, Z_95);
            let p = s as f64 / trials as f64;
            prop_assert!(lo <= p + 1e-12 && p <= hi + 1e-12);
            prop_assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
        }
    }
}
