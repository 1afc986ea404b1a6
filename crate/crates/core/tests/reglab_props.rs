mod common;

use factorsieve::reglab::{
    elastic_net_fit, lasso_cv, lasso_fit, lasso_path, ols_hc3, penalized_fit, select_one_se, tau_max, CvOptions, DesignMatrix,
    PenaltyOptions,
};
use factorsieve::rng::SeededRng;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use common::{random_matrix, random_vec, textbook_hc3};

fn raw() -> PenaltyOptions {
    PenaltyOptions {
        standardize: false,
        ..PenaltyOptions::default()
    }
}

/// Sparse linear response plus noise.
fn problem(seed: u64, n: usize, p: usize) -> (DMatrix<f64>, Vec<f64>) {
    let mut rng = SeededRng::new(seed);
    let x = random_matrix(&mut rng, n, p);
    let beta: Vec<f64> = (0..p).map(|j| if j % 3 == 0 { 1.0 + rng.uniform() } else { 0.0 }).collect();
    let y = (0..n)
        .map(|i| 0.5 + (0..p).map(|j| x[(i, j)] * beta[j]).sum::<f64>() + rng.standard_normal())
        .collect();
    (x, y)
}

/// Worst stationarity violation of the raw-scale objective, computed from
/// the residuals of the returned fit.
fn kkt_violation(x: &DMatrix<f64>, y: &[f64], intercept: f64, beta: &[f64], tau: f64, rho: f64) -> f64 {
    let n = x.nrows() as f64;
    let b = DVector::from_column_slice(beta);
    let r = DVector::from_column_slice(y) - (x * &b).add_scalar(intercept);
    (0..x.ncols())
        .map(|j| {
            let g = 2.0 * x.column(j).dot(&r) / n - tau / n * (1.0 - rho) * beta[j];
            let l1 = tau * rho / n;
            if beta[j] != 0.0 {
                (g - l1 * beta[j].signum()).abs()
            } else {
                (g.abs() - l1).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Centered design with orthonormal columns.
fn orthonormal(rng: &mut SeededRng, n: usize, p: usize) -> DMatrix<f64> {
    let mut x = random_matrix(rng, n, p);
    for j in 0..p {
        let m = x.column(j).mean();
        x.column_mut(j).add_scalar_mut(-m);
    }
    x.qr().q().columns(0, p).into_owned()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fits_satisfy_stationarity(seed in 0u64..10_000, frac in 0.01f64..0.9, rho in prop::sample::select(vec![1.0, 0.5, 0.1])) {
        let (x, y) = problem(seed, 80, 12);
        let d = DesignMatrix::unlabeled(x.clone()).unwrap();
        let tau = frac * tau_max(&d, &y, rho, false).unwrap();
        let fit = penalized_fit(&d, &y, tau, rho, &raw()).unwrap();
        let v = kkt_violation(&x, &y, fit.intercept, &fit.coefficients, tau, rho);
        prop_assert!(v <= 1e-8, "violation {}", v);
        prop_assert!(fit.kkt_violation <= 1e-8);
    }

    #[test]
    fn objective_trace_never_increases(seed in 0u64..10_000, frac in 0.01f64..0.9) {
        let (x, y) = problem(seed, 60, 20);
        let d = DesignMatrix::unlabeled(x).unwrap();
        let tau = frac * tau_max(&d, &y, 1.0, true).unwrap();
        let fit = lasso_fit(&d, &y, tau, &PenaltyOptions { polish: false, ..PenaltyOptions::default() }).unwrap();
        for w in fit.objective_trace.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-15, "{} then {}", w[0], w[1]);
        }
    }

    #[test]
    fn warm_path_matches_cold_fits(seed in 0u64..10_000, rho in prop::sample::select(vec![1.0, 0.5])) {
        let (x, y) = problem(seed, 70, 15);
        let d = DesignMatrix::unlabeled(x).unwrap();
        let opts = PenaltyOptions::default();
        let path = lasso_path(&d, &y, 25, 0.05, rho, &opts).unwrap();
        for (tau, warm) in path.taus.iter().zip(&path.fits) {
            let cold = penalized_fit(&d, &y, *tau, rho, &opts).unwrap();
            for (a, b) in warm.coefficients.iter().zip(&cold.coefficients) {
                prop_assert!((a - b).abs() <= 1e-8, "tau {}: {} vs {}", tau, a, b);
            }
        }
    }

    #[test]
    fn rescaling_a_column_rescales_its_coefficient(seed in 0u64..10_000, scale in 0.01f64..100.0, frac in 0.05f64..0.8) {
        let (x, y) = problem(seed, 60, 8);
        let mut moved = x.clone();
        moved.column_mut(0).scale_mut(scale);
        let (d, dm) = (DesignMatrix::unlabeled(x).unwrap(), DesignMatrix::unlabeled(moved).unwrap());
        let tau = frac * tau_max(&d, &y, 1.0, true).unwrap();
        let a = lasso_fit(&d, &y, tau, &PenaltyOptions::default()).unwrap();
        let b = lasso_fit(&dm, &y, tau, &PenaltyOptions::default()).unwrap();
        prop_assert!((a.coefficients[0] - scale * b.coefficients[0]).abs() <= 1e-8 * (1.0 + a.coefficients[0].abs()));
        for j in 1..8 {
            prop_assert!((a.coefficients[j] - b.coefficients[j]).abs() <= 1e-8);
        }
        prop_assert!((a.intercept - b.intercept).abs() <= 1e-8);
    }

    #[test]
    fn one_se_choice_is_sparser_and_close(mean in prop::collection::vec(0.0f64..5.0, 2..60), se in prop::collection::vec(0.0f64..1.0, 60)) {
        let taus: Vec<f64> = (0..mean.len()).map(|k| 0.9f64.powi(k as i32)).collect();
        let se = &se[..mean.len()];
        let (imin, i1se) = select_one_se(&taus, &mean, se);
        prop_assert!(mean.iter().all(|m| *m >= mean[imin]));
        prop_assert!(i1se <= imin);
        prop_assert!(mean[i1se] <= mean[imin] + se[imin]);
        prop_assert!(mean[..i1se].iter().all(|m| *m > mean[imin] + se[imin]));
    }

    #[test]
    fn hc3_matches_textbook_sandwich(seed in 0u64..10_000, n in 15usize..80, k in 1usize..6) {
        let mut rng = SeededRng::new(seed);
        let mut x = random_matrix(&mut rng, n, k + 1);
        x.column_mut(0).fill(1.0);
        let y = random_vec(&mut rng, n);
        let fit = ols_hc3(&DesignMatrix::unlabeled(x.clone()).unwrap(), &y).unwrap();
        let oracle = textbook_hc3(&x, &y);
        for j in 0..=k {
            let b = oracle.coefficients[j];
            let s = oracle.std_errors[j];
            prop_assert!((fit.coefficients[j] - b).abs() <= 1e-8 * (1.0 + b.abs()));
            prop_assert!((fit.std_errors[j] - s).abs() <= 1e-8 * (1.0 + s));
            prop_assert!((fit.t_stats[j].unwrap() - b / s).abs() <= 1e-6 * (1.0 + (b / s).abs()));
        }
    }
}

#[test]
fn orthonormal_design_has_closed_form_solution() {
    let mut rng = SeededRng::new(3);
    let x = orthonormal(&mut rng, 50, 6);
    let y = random_vec(&mut rng, 50);
    let d = DesignMatrix::unlabeled(x.clone()).unwrap();
    let z = x.tr_mul(&DVector::from_column_slice(&y));
    for rho in [1.0, 0.7, 0.2] {
        for tau in [0.05, 0.3, 1.0] {
            let fit = elastic_net_fit(&d, &y, tau, rho, &raw()).unwrap();
            for j in 0..6 {
                let shrunk = z[j].signum() * (z[j].abs() - tau * rho / 2.0).max(0.0) / (1.0 + tau * (1.0 - rho) / 2.0);
                assert!((fit.coefficients[j] - shrunk).abs() <= 1e-10, "rho {rho} tau {tau} j {j}");
            }
        }
    }
}

#[test]
fn orthonormal_lasso_path_has_nested_supports() {
    let mut rng = SeededRng::new(4);
    let x = orthonormal(&mut rng, 60, 10);
    let y = random_vec(&mut rng, 60);
    let d = DesignMatrix::unlabeled(x).unwrap();
    let path = lasso_path(&d, &y, 40, 0.01, 1.0, &raw()).unwrap();
    assert!(path.fits[0].active_set.is_empty());
    for w in path.fits.windows(2) {
        assert!(w[0].active_set.iter().all(|j| w[1].active_set.contains(j)));
    }
    let cv = lasso_cv(&d, &y, &CvOptions { penalty: raw(), ..CvOptions::default() }).unwrap();
    let at_min = &cv.path.fits[cv.curve.index_min].active_set;
    assert!(cv.fit.active_set.iter().all(|j| at_min.contains(j)));
}

#[test]
fn elastic_net_spreads_weight_over_duplicate_columns() {
    let (x, y) = problem(8, 80, 5);
    let mut dup = x.clone().insert_column(5, 0.0);
    let first = x.column(0).into_owned();
    dup.set_column(5, &first);
    let d = DesignMatrix::unlabeled(dup).unwrap();
    let tau = 0.1 * tau_max(&d, &y, 0.5, true).unwrap();
    let fit = elastic_net_fit(&d, &y, tau, 0.5, &PenaltyOptions::default()).unwrap();
    assert!(fit.coefficients[0] != 0.0);
    assert!((fit.coefficients[0] - fit.coefficients[5]).abs() <= 1e-9);
}

#[test]
fn stationarity_holds_after_standardizing() {
    let (x, y) = problem(12, 90, 10);
    let n = x.nrows() as f64;
    let mut z = x.clone();
    let mut sd = Vec::new();
    for j in 0..10 {
        let m = x.column(j).mean();
        let s = (x.column(j).iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
        z.column_mut(j).add_scalar_mut(-m);
        z.column_mut(j).unscale_mut(s);
        sd.push(s);
    }
    let d = DesignMatrix::unlabeled(x).unwrap();
    let tau = 0.2 * tau_max(&d, &y, 1.0, true).unwrap();
    let fit = lasso_fit(&d, &y, tau, &PenaltyOptions::default()).unwrap();
    let on_unit_scale: Vec<f64> = fit.coefficients.iter().zip(&sd).map(|(b, s)| b * s).collect();
    let ybar = y.iter().sum::<f64>() / n;
    assert!(kkt_violation(&z, &y, ybar, &on_unit_scale, tau, 1.0) <= 1e-8);
    assert_eq!(fit.fitted_scale_coefficients().len(), 10);
    for (a, b) in fit.fitted_scale_coefficients().iter().zip(&on_unit_scale) {
        assert!((a - b).abs() <= 1e-10);
    }
}
