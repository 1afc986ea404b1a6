use nalgebra::{DMatrix, DVector};

/// Exact lasso minimizer of `(1/n)‖y − γ − Xβ‖² + (τ/n)‖β‖₁` on the raw
/// columns by enumerating every sign pattern in `{−, 0, +}^p`, solving the
/// stationarity equations of each and keeping the best sign-consistent
/// candidate. Returns `(γ, β)`. Only for small `p`.
pub fn oracle_lasso(x: &DMatrix<f64>, y: &[f64], tau: f64) -> (f64, Vec<f64>) {
    let (n, p) = x.shape();
    assert!(p <= 12, "exhaustive search is limited to 12 columns");
    let nf = n as f64;
    let y_mean = y.iter().sum::<f64>() / nf;
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
    let means: Vec<f64> = (0..p).map(|j| x.column(j).mean()).collect();
    let xc = DMatrix::from_fn(n, p, |i, j| x[(i, j)] - means[j]);
    let objective = |beta: &DVector<f64>| {
        let r = &yc - &xc * beta;
        (r.norm_squared() + tau * beta.lp_norm(1)) / nf
    };
    let mut best = DVector::zeros(p);
    let mut best_obj = objective(&best);
    let mut signs = vec![0i8; p];
    let total = 3usize.pow(p as u32);
    for code in 1..total {
        let mut c = code;
        for s in signs.iter_mut() {
            *s = (c % 3) as i8 - 1;
            c /= 3;
        }
        let active: Vec<usize> = (0..p).filter(|&j| signs[j] != 0).collect();
        let xa = xc.select_columns(active.iter());
        let gram = xa.tr_mul(&xa);
        let rhs = DVector::from_iterator(
            active.len(),
            active.iter().map(|&j| xc.column(j).dot(&yc) - tau / 2.0 * f64::from(signs[j])),
        );
        let Some(chol) = gram.cholesky() else { continue };
        let sol = chol.solve(&rhs);
        if active.iter().zip(sol.iter()).any(|(&j, &b)| b * f64::from(signs[j]) <= 0.0) {
            continue;
        }
        let mut beta = DVector::zeros(p);
        for (&j, &b) in active.iter().zip(sol.iter()) {
            beta[j] = b;
        }
        let obj = objective(&beta);
        if obj < best_obj {
            best_obj = obj;
            best = beta;
        }
    }
    let intercept = y_mean - best.iter().zip(&means).map(|(b, m)| b * m).sum::<f64>();
    (intercept, best.iter().copied().collect())
}
