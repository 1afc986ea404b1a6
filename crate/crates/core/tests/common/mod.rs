//! Independent reference implementations and fixtures shared by the
//! integration tests. Nothing here calls the code under test except to build
//! inputs.
#![allow(dead_code)]

use chrono::NaiveDate;
use factorsieve::grid::Grid;
use factorsieve::portfolio::MarketData;
use factorsieve::rng::SeededRng;
use nalgebra::{DMatrix, DVector};

pub fn random_matrix(rng: &mut SeededRng, n: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| rng.standard_normal())
}

pub fn random_vec(rng: &mut SeededRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.standard_normal()).collect()
}

/// Random row with roughly `missing_share` of cells set to `NaN`.
pub fn random_row(rng: &mut SeededRng, t: usize, missing_share: f64) -> Vec<f64> {
    (0..t)
        .map(|_| if rng.uniform() < missing_share { f64::NAN } else { rng.standard_normal() })
        .collect()
}

/// Least squares via the normal equations with an explicit inverse, and the
/// HC3 sandwich written out term by term.
pub struct TextbookOls {
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
}

pub fn textbook_hc3(x: &DMatrix<f64>, y: &[f64]) -> TextbookOls {
    let (n, k) = x.shape();
    let xtx_inv = (x.transpose() * x).try_inverse().expect("full rank");
    let yv = DVector::from_column_slice(y);
    let beta = &xtx_inv * x.transpose() * &yv;
    let resid = &yv - x * &beta;
    let mut meat = DMatrix::zeros(k, k);
    for i in 0..n {
        let xi = x.row(i).transpose();
        let h = (xi.transpose() * &xtx_inv * &xi)[(0, 0)];
        let w = resid[i] * resid[i] / ((1.0 - h) * (1.0 - h));
        meat += &xi * xi.transpose() * w;
    }
    let cov = &xtx_inv * meat * &xtx_inv;
    TextbookOls {
        coefficients: beta.iter().copied().collect(),
        std_errors: (0..k).map(|j| cov[(j, j)].sqrt()).collect(),
    }
}

pub fn same_or_both_missing(a: f64, b: f64, tol: f64) -> bool {
    (a.is_nan() && b.is_nan()) || (a - b).abs() <= tol
}

/// Largest deviation between two rows, infinite when missingness differs.
pub fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| match (x.is_nan(), y.is_nan()) {
            (true, true) => 0.0,
            (false, false) => (x - y).abs(),
            _ => f64::INFINITY,
        })
        .fold(0.0, f64::max)
}

/// Naive trailing-window operators: each output recomputed from scratch.
pub mod naive {
    fn window(x: &[f64], t: usize, w: usize) -> Option<&[f64]> {
        if t + 1 < w {
            return None;
        }
        let s = &x[t + 1 - w..=t];
        s.iter().all(|v| v.is_finite()).then_some(s)
    }

    fn map_windows(x: &[f64], w: usize, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        (0..x.len()).map(|t| window(x, t, w).map_or(f64::NAN, &f)).collect()
    }

    fn map_pairs(x: &[f64], y: &[f64], w: usize, f: impl Fn(&[f64], &[f64]) -> f64) -> Vec<f64> {
        (0..x.len())
            .map(|t| match (window(x, t, w), window(y, t, w)) {
                (Some(a), Some(b)) => f(a, b),
                _ => f64::NAN,
            })
            .collect()
    }

    fn mean(s: &[f64]) -> f64 {
        s.iter().sum::<f64>() / s.len() as f64
    }

    pub fn ts_sum(x: &[f64], w: usize) -> Vec<f64> {
        map_windows(x, w, |s| s.iter().sum())
    }
    pub fn ts_mean(x: &[f64], w: usize) -> Vec<f64> {
        map_windows(x, w, mean)
    }
    pub fn ts_min(x: &[f64], w: usize) -> Vec<f64> {
        map_windows(x, w, |s| s.iter().copied().reduce(f64::min).unwrap())
    }
    pub fn ts_max(x: &[f64], w: usize) -> Vec<f64> {
        map_windows(x, w, |s| s.iter().copied().reduce(f64::max).unwrap())
    }
    pub fn ts_std(x: &[f64], w: usize) -> Vec<f64> {
        map_windows(x, w, |s| {
            let m = mean(s);
            (s.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (s.len() - 1) as f64).sqrt()
        })
    }
    pub fn cov(x: &[f64], y: &[f64], w: usize) -> Vec<f64> {
        map_pairs(x, y, w, |a, b| {
            let (ma, mb) = (mean(a), mean(b));
            a.iter().zip(b).map(|(u, v)| (u - ma) * (v - mb)).sum::<f64>() / (a.len() - 1) as f64
        })
    }
    pub fn corr(x: &[f64], y: &[f64], w: usize) -> Vec<f64> {
        map_pairs(x, y, w, |a, b| {
            let (ma, mb) = (mean(a), mean(b));
            let sab: f64 = a.iter().zip(b).map(|(u, v)| (u - ma) * (v - mb)).sum();
            let saa: f64 = a.iter().map(|u| (u - ma).powi(2)).sum();
            let sbb: f64 = b.iter().map(|v| (v - mb).powi(2)).sum();
            sab / (saa * sbb).sqrt()
        })
    }
    /// Position of the latest value among the window (ties averaged), over `w`.
    pub fn ts_rank(x: &[f64], w: usize) -> Vec<f64> {
        map_windows(x, w, |s| {
            let last = s[s.len() - 1];
            let mut sum = 0.0;
            let mut count = 0.0;
            let mut sorted = s.to_vec();
            sorted.sort_by(f64::total_cmp);
            for (i, v) in sorted.iter().enumerate() {
                if *v == last {
                    sum += (i + 1) as f64;
                    count += 1.0;
                }
            }
            sum / count / s.len() as f64
        })
    }
    pub fn decay_linear(x: &[f64], w: usize) -> Vec<f64> {
        map_windows(x, w, |s| {
            let weights: Vec<f64> = (1..=s.len()).map(|i| i as f64).collect();
            let total: f64 = weights.iter().sum();
            s.iter().zip(&weights).map(|(v, k)| v * k).sum::<f64>() / total
        })
    }
    pub fn delay(x: &[f64], d: usize) -> Vec<f64> {
        (0..x.len()).map(|t| if t >= d { x[t - d] } else { f64::NAN }).collect()
    }
    pub fn delta(x: &[f64], d: usize) -> Vec<f64> {
        (0..x.len()).map(|t| if t >= d { x[t] - x[t - d] } else { f64::NAN }).collect()
    }
    /// Smoothed mean restarted at each gap, over at most `history` dates,
    /// reported once `n` values have entered.
    pub fn sma(x: &[f64], n: usize, m: usize, history: usize) -> Vec<f64> {
        (0..x.len())
            .map(|t| {
                if !x[t].is_finite() {
                    return f64::NAN;
                }
                let mut start = t;
                while start > 0 && x[start - 1].is_finite() && t - (start - 1) < history {
                    start -= 1;
                }
                if t - start + 1 < n {
                    return f64::NAN;
                }
                let mut y = x[start];
                for v in &x[start + 1..=t] {
                    y = (m as f64 * v + (n - m) as f64 * y) / n as f64;
                }
                y
            })
            .collect()
    }
    /// Average 1-based rank among present values, divided by their count.
    pub fn cs_rank(col: &[f64]) -> Vec<f64> {
        let present: Vec<f64> = col.iter().copied().filter(|v| v.is_finite()).collect();
        col.iter()
            .map(|&v| {
                if !v.is_finite() {
                    return f64::NAN;
                }
                let below = present.iter().filter(|&&p| p < v).count() as f64;
                let equal = present.iter().filter(|&&p| p == v).count() as f64;
                (below + (equal + 1.0) / 2.0) / present.len() as f64
            })
            .collect()
    }
    pub fn cs_mean(col: &[f64]) -> Vec<f64> {
        let present: Vec<f64> = col.iter().copied().filter(|v| v.is_finite()).collect();
        let m = present.iter().sum::<f64>() / present.len() as f64;
        col.iter().map(|v| if v.is_finite() { m } else { f64::NAN }).collect()
    }
}

pub fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    use chrono::{Datelike, Weekday};
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.succ_opt().unwrap();
    }
    out
}

/// Random market: lognormal caps, normal daily returns, a few gaps.
pub fn random_market(rng: &mut SeededRng, n_assets: usize, n_days: usize) -> MarketData {
    let calendar = business_days(NaiveDate::from_ymd_opt(2019, 1, 1).unwrap(), n_days);
    let mut returns = Grid::missing(n_assets, n_days);
    let mut caps = Grid::missing(n_assets, n_days);
    for a in 0..n_assets {
        let mut cap = (rng.standard_normal() + 5.0).exp();
        for d in 0..n_days {
            let r = 0.02 * rng.standard_normal();
            if d > 0 && rng.uniform() > 0.02 {
                returns.set(a, d, r);
            }
            cap *= 1.0 + r;
            if rng.uniform() > 0.01 {
                caps.set(a, d, cap);
            }
        }
    }
    MarketData::new((0..n_assets).map(|a| format!("A{a:03}")).collect(), calendar, returns, caps).unwrap()
}

/// Random signal grid on the market's shape with a share of ties.
pub fn random_signal_grid(rng: &mut SeededRng, n_assets: usize, n_days: usize) -> Grid {
    let mut g = Grid::missing(n_assets, n_days);
    for a in 0..n_assets {
        for d in 0..n_days {
            let u = rng.uniform();
            if u < 0.05 {
                continue;
            }
            let v = if u < 0.15 { (rng.below(5) as f64) - 2.0 } else { rng.standard_normal() };
            g.set(a, d, v);
        }
    }
    g
}

fn premium_row(name: &str, coefficient: f64, t: Option<f64>) -> factorsieve::pipeline::PremiumRow {
    factorsieve::pipeline::PremiumRow {
        factor: name.into(),
        coefficient,
        t,
        std_error: 0.0,
    }
}

/// DS and SS tables behind the golden report files, rows in input order.
pub fn golden_tables() -> Vec<factorsieve::pipeline::PremiumTable> {
    use factorsieve::pipeline::{Estimator, PremiumTable, Significance};
    let table = |estimator, alphas| PremiumTable {
        estimator,
        significance: Significance::default(),
        alphas,
        intercept: premium_row("intercept", 0.001, Some(0.5)),
        controls: Vec::new(),
        n_assets: 100,
    };
    vec![
        table(
            Estimator::Ds,
            vec![
                premium_row("undefined_t", 0.0, None),
                premium_row("boundary_5pct", 0.0012, Some(1.96)),
                premium_row("below_5pct", 0.0011, Some(1.95)),
                premium_row("Multi-Period Mean Reversion Ratio (046)", 0.0079, Some(3.68)),
                premium_row("tiny", -0.00004, Some(-0.3)),
                premium_row("boundary_1pct", -0.0030, Some(-2.576)),
                premium_row("below_1pct", 0.0025, Some(2.5759)),
            ],
        ),
        table(
            Estimator::Ss,
            vec![
                premium_row("boundary_1pct", -0.0031, Some(-3.1)),
                premium_row("Multi-Period Mean Reversion Ratio (046)", 0.0050, Some(1.2)),
            ],
        ),
    ]
}
