//! Operator kernels.
//!
//! Time-series kernels map one asset's history (a row of a [`Grid`]) to a
//! row of the same length; cross-sectional kernels map the values of all
//! assets at one date. Missing cells are `NaN`, and a window containing a
//! missing cell yields a missing output.
//!
//! [`Grid`]: crate::grid::Grid

use crate::grid::sanitize;

/// Average rank of `values[target]` among `values`, 1-based.
fn average_rank(values: &[f64], target: f64) -> f64 {
    let below = values.iter().filter(|&&v| v < target).count();
    let equal = values.iter().filter(|&&v| v == target).count();
    below as f64 + (equal as f64 + 1.0) / 2.0
}

/// Fractional cross-sectional rank in `(0, 1]` over present cells; ties
/// take their average rank. A single present asset ranks 1.0.
pub fn cs_rank(column: &[f64]) -> Vec<f64> {
    let mut present: Vec<f64> = column.iter().copied().filter(|v| v.is_finite()).collect();
    let n = present.len();
    if n == 0 {
        return vec![f64::NAN; column.len()];
    }
    present.sort_by(f64::total_cmp);
    column
        .iter()
        .map(|&v| {
            if !v.is_finite() {
                return f64::NAN;
            }
            if n == 1 {
                return 1.0;
            }
            let lo = present.partition_point(|&p| p < v);
            let hi = present.partition_point(|&p| p <= v);
            // positions lo+1 ..= hi share the value
            ((lo + 1 + hi) as f64 / 2.0) / n as f64
        })
        .collect()
}

pub fn cs_mean(column: &[f64]) -> Vec<f64> {
    let present: Vec<f64> = column.iter().copied().filter(|v| v.is_finite()).collect();
    let mean = if present.is_empty() {
        f64::NAN
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    };
    column
        .iter()
        .map(|v| if v.is_finite() { mean } else { f64::NAN })
        .collect()
}

pub fn delay(x: &[f64], d: usize) -> Vec<f64> {
    (0..x.len())
        .map(|t| if t >= d { x[t - d] } else { f64::NAN })
        .collect()
}

pub fn delta(x: &[f64], d: usize) -> Vec<f64> {
    (0..x.len())
        .map(|t| if t >= d { sanitize(x[t] - x[t - d]) } else { f64::NAN })
        .collect()
}

/// Applies `f` to every complete trailing window of length `w`.
fn rolling(x: &[f64], w: usize, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut out = vec![f64::NAN; x.len()];
    // last index of a missing cell seen so far
    let mut last_missing: Option<usize> = None;
    for t in 0..x.len() {
        if !x[t].is_finite() {
            last_missing = Some(t);
        }
        if t + 1 < w {
            continue;
        }
        let start = t + 1 - w;
        if last_missing.is_some_and(|m| m >= start) {
            continue;
        }
        out[t] = sanitize(f(&x[start..=t]));
    }
    out
}

fn rolling_pair(x: &[f64], y: &[f64], w: usize, f: impl Fn(&[f64], &[f64]) -> f64) -> Vec<f64> {
    let mut out = vec![f64::NAN; x.len()];
    let mut last_missing: Option<usize> = None;
    for t in 0..x.len() {
        if !x[t].is_finite() || !y[t].is_finite() {
            last_missing = Some(t);
        }
        if t + 1 < w {
            continue;
        }
        let start = t + 1 - w;
        if last_missing.is_some_and(|m| m >= start) {
            continue;
        }
        out[t] = sanitize(f(&x[start..=t], &y[start..=t]));
    }
    out
}

pub fn ts_sum(x: &[f64], w: usize) -> Vec<f64> {
    rolling(x, w, |s| s.iter().sum())
}

pub fn ts_mean(x: &[f64], w: usize) -> Vec<f64> {
    rolling(x, w, |s| s.iter().sum::<f64>() / s.len() as f64)
}

pub fn ts_min(x: &[f64], w: usize) -> Vec<f64> {
    rolling(x, w, |s| s.iter().copied().fold(f64::INFINITY, f64::min))
}

pub fn ts_max(x: &[f64], w: usize) -> Vec<f64> {
    rolling(x, w, |s| s.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

/// Centered sums `(Σ dx², Σ dy², Σ dx·dy)`. Deviations are taken from the
/// first element before centering so a constant window gives exact zeros.
fn centered_moments(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let (x0, y0) = (xs[0], ys[0]);
    let mx = xs.iter().map(|v| v - x0).sum::<f64>() / n;
    let my = ys.iter().map(|v| v - y0).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let dx = x - x0 - mx;
        let dy = y - y0 - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    (sxx, syy, sxy)
}

/// Sample standard deviation (denominator `w - 1`).
pub fn ts_std(x: &[f64], w: usize) -> Vec<f64> {
    rolling(x, w, |s| {
        let (sxx, _, _) = centered_moments(s, s);
        (sxx / (s.len() - 1) as f64).sqrt()
    })
}

/// Trailing-window Pearson correlation; missing when either side is flat.
pub fn corr(x: &[f64], y: &[f64], w: usize) -> Vec<f64> {
    rolling_pair(x, y, w, |a, b| {
        let (sxx, syy, sxy) = centered_moments(a, b);
        if sxx == 0.0 || syy == 0.0 {
            return f64::NAN;
        }
        (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
    })
}

/// Trailing-window sample covariance; missing when either side is flat.
pub fn cov(x: &[f64], y: &[f64], w: usize) -> Vec<f64> {
    rolling_pair(x, y, w, |a, b| {
        let (sxx, syy, sxy) = centered_moments(a, b);
        if sxx == 0.0 || syy == 0.0 {
            return f64::NAN;
        }
        sxy / (a.len() - 1) as f64
    })
}

/// Rank of the latest value within its window, divided by `w`.
pub fn ts_rank(x: &[f64], w: usize) -> Vec<f64> {
    rolling(x, w, |s| average_rank(s, s[s.len() - 1]) / s.len() as f64)
}

/// Linearly decaying weights `w, w-1, ..., 1` (latest first), normalized.
pub fn decay_linear(x: &[f64], w: usize) -> Vec<f64> {
    let norm = (w * (w + 1)) as f64 / 2.0;
    rolling(x, w, |s| {
        s.iter()
            .enumerate()
            .map(|(i, v)| (i + 1) as f64 * v)
            .sum::<f64>()
            / norm
    })
}

/// Recursive smoothed mean `Y_t = (m·X_t + (n-m)·Y_{t-1}) / n`.
///
/// The recursion is seeded with the first observation of the current run of
/// present values, clipped to the trailing `history` dates, and the output is
/// present once at least `n` values have entered it.
pub fn sma(x: &[f64], n: usize, m: usize, history: usize) -> Vec<f64> {
    let (nf, mf) = (n as f64, m as f64);
    let mut out = vec![f64::NAN; x.len()];
    let mut run_start = 0;
    for t in 0..x.len() {
        if !x[t].is_finite() {
            run_start = t + 1;
            continue;
        }
        let start = run_start.max((t + 1).saturating_sub(history));
        if t + 1 - start < n {
            continue;
        }
        let mut y = x[start];
        for &v in &x[start + 1..=t] {
            y = (mf * v + (nf - mf) * y) / nf;
        }
        out[t] = sanitize(y);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const NA: f64 = f64::NAN;

    fn same(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len()
            && a.iter().zip(b).all(|(x, y)| (x.is_nan() && y.is_nan()) || (x - y).abs() < 1e-12)
    }

    #[test]
    fn delay_shifts() {
        assert!(same(&delay(&[1.0, 2.0, 3.0], 1), &[NA, 1.0, 2.0]));
    }

    #[test]
    fn decay_linear_weights_latest_most() {
        let out = decay_linear(&[1.0, 2.0, 3.0], 3);
        assert!((out[2] - 14.0 / 6.0).abs() < 1e-15);
        assert!(out[0].is_nan() && out[1].is_nan());
    }

    #[test]
    fn ts_rank_of_last_value() {
        let out = ts_rank(&[5.0, 1.0, 3.0], 3);
        assert!((out[2] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn cross_sectional_rank_conventions() {
        assert!(same(&cs_rank(&[NA, 4.0, NA]), &[NA, 1.0, NA]));
        assert!(same(&cs_rank(&[3.0, 1.0, 2.0, 2.0]), &[1.0, 0.25, 0.625, 0.625]));
        assert!(same(&cs_rank(&[NA, NA]), &[NA, NA]));
    }

    #[test]
    fn corr_of_flat_window_is_missing() {
        let x = [1.0, 1.0, 1.0, 2.0];
        let y = [1.0, 2.0, 3.0, 4.0];
        let c = corr(&x, &y, 3);
        assert!(c[2].is_nan());
        assert!(c[3].is_finite());
        assert!(cov(&x, &y, 3)[2].is_nan());
    }

    #[test]
    fn missing_cell_blanks_every_window_touching_it() {
        let out = ts_sum(&[1.0, 2.0, NA, 4.0, 5.0, 6.0], 2);
        assert!(same(&out, &[NA, 3.0, NA, NA, 9.0, 11.0]));
    }

    #[test]
    fn sma_with_m_equal_n_is_identity() {
        let x = [3.0, 1.0, 4.0, 1.0, 5.0];
        let out = sma(&x, 2, 2, 252);
        assert!(same(&out, &[NA, 1.0, 4.0, 1.0, 5.0]));
    }

    #[test]
    fn sma_recursion_and_reset() {
        // n = 3, m = 1: Y = (X + 2 Y_prev) / 3 seeded at the run start
        let out = sma(&[3.0, 6.0, 9.0, NA, 3.0], 3, 1, 252);
        let y1 = (6.0 + 2.0 * 3.0) / 3.0;
        let y2 = (9.0 + 2.0 * y1) / 3.0;
        assert!(same(&out, &[NA, NA, y2, NA, NA]));
    }
}
