//! Coordinate descent on the Gram matrix with active-set cycling.
//!
//! After the sweeps converge the fit is polished by solving the stationarity
//! equations on the active set with the signs fixed. The polished solution
//! is kept only if the signs agree, every inactive coordinate satisfies its
//! subgradient bound and the objective does not increase, so warm and cold
//! starts that reach the same support return the same coefficients.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::design::{DesignError, DesignMatrix};
use super::soft_threshold;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PenaltyOptions {
    /// Scale columns to unit population variance before fitting.
    pub standardize: bool,
    /// Stop when no coefficient moves more than this in a sweep.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Solve the active-set stationarity system after the sweeps.
    pub polish: bool,
}

impl Default for PenaltyOptions {
    fn default() -> Self {
        Self {
            standardize: true,
            tol: 1e-7,
            max_sweeps: 10_000,
            polish: true,
        }
    }
}

/// Centered (and optionally scaled) cross products of one design.
#[derive(Debug, Clone)]
pub(crate) struct Prepared {
    n: usize,
    means: Vec<f64>,
    scales: Vec<f64>,
    live: Vec<bool>,
    gram: DMatrix<f64>,
    xty: DVector<f64>,
    y_mean: f64,
    yy: f64,
}

impl Prepared {
    pub(crate) fn new(x: &DMatrix<f64>, y: &DVector<f64>, standardize: bool) -> Self {
        let (n, p) = x.shape();
        let nf = n as f64;
        let y_mean = y.mean();
        let yc = y.add_scalar(-y_mean);
        let mut means = vec![0.0; p];
        let mut scales = vec![1.0; p];
        let mut live = vec![true; p];
        let mut xs = x.clone();
        for j in 0..p {
            let m = x.column(j).mean();
            let mut col = xs.column_mut(j);
            col.add_scalar_mut(-m);
            let ss = col.norm_squared();
            let sd = (ss / nf).sqrt();
            means[j] = m;
            if sd <= 1e-13 * m.abs().max(1.0) {
                live[j] = false;
                col.fill(0.0);
                scales[j] = 0.0;
            } else if standardize {
                col /= sd;
                scales[j] = sd;
            }
        }
        Prepared {
            n,
            gram: xs.tr_mul(&xs),
            xty: xs.tr_mul(&yc),
            means,
            scales,
            live,
            y_mean,
            yy: yc.norm_squared(),
        }
    }

    pub(crate) fn p(&self) -> usize {
        self.means.len()
    }

    fn degenerate(&self) -> bool {
        self.yy <= 1e-28 * (self.y_mean * self.y_mean * self.n as f64).max(f64::MIN_POSITIVE)
    }

    /// Smallest penalty with an all-zero solution.
    pub(crate) fn tau_max(&self, l1_ratio: f64) -> f64 {
        let top = (0..self.p())
            .filter(|&j| self.live[j])
            .map(|j| self.xty[j].abs())
            .fold(0.0, f64::max);
        2.0 * top / l1_ratio.max(1e-3)
    }

    fn objective(&self, beta: &DVector<f64>, q: &DVector<f64>, tau: f64, rho: f64) -> f64 {
        let n = self.n as f64;
        let loss = (self.yy - 2.0 * self.xty.dot(beta) + beta.dot(q)) / n;
        let pen = tau / n * (rho * beta.lp_norm(1) + 0.5 * (1.0 - rho) * beta.norm_squared());
        loss.max(0.0) + pen
    }

    fn kkt_violation(&self, beta: &DVector<f64>, q: &DVector<f64>, tau: f64, rho: f64) -> f64 {
        let n = self.n as f64;
        let mut worst: f64 = 0.0;
        for j in 0..self.p() {
            if !self.live[j] {
                continue;
            }
            let g = 2.0 * (self.xty[j] - q[j]) / n - tau / n * (1.0 - rho) * beta[j];
            let l1 = tau / n * rho;
            let v = if beta[j] != 0.0 {
                (g - l1 * beta[j].signum()).abs()
            } else {
                (g.abs() - l1).max(0.0)
            };
            worst = worst.max(v);
        }
        worst
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Solution {
    pub beta: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub polished: bool,
    pub trace: Vec<f64>,
}

fn coordinate(prep: &Prepared, beta: &mut DVector<f64>, q: &mut DVector<f64>, j: usize, thr: f64, ridge: f64) -> f64 {
    if !prep.live[j] {
        return 0.0;
    }
    let gjj = prep.gram[(j, j)];
    let z = prep.xty[j] - q[j] + gjj * beta[j];
    // exact ties with the threshold stay at zero so collinear twins do not split
    let new = if z.abs() <= thr * (1.0 + 1e-12) {
        0.0
    } else {
        soft_threshold(z, thr) / (gjj + ridge)
    };
    let d = new - beta[j];
    if d != 0.0 {
        q.axpy(d, &prep.gram.column(j), 1.0);
        beta[j] = new;
    }
    d.abs()
}

fn polish(prep: &Prepared, beta: &DVector<f64>, tau: f64, rho: f64) -> Option<DVector<f64>> {
    let active: Vec<usize> = (0..prep.p()).filter(|&j| beta[j] != 0.0).collect();
    if active.is_empty() {
        return None;
    }
    let thr = tau * rho / 2.0;
    let ridge = tau * (1.0 - rho) / 2.0;
    let k = active.len();
    let m = DMatrix::from_fn(k, k, |a, b| prep.gram[(active[a], active[b])] + if a == b { ridge } else { 0.0 });
    let rhs = DVector::from_fn(k, |a, _| prep.xty[active[a]] - thr * beta[active[a]].signum());
    let sol = m.cholesky()?.solve(&rhs);
    if active.iter().zip(sol.iter()).any(|(&j, &b)| b == 0.0 || b.signum() != beta[j].signum()) {
        return None;
    }
    let mut out = DVector::zeros(prep.p());
    for (&j, &b) in active.iter().zip(sol.iter()) {
        out[j] = b;
    }
    let q = &prep.gram * &out;
    let slack = thr * 1e-9 + 1e-11 * prep.xty.amax();
    for j in 0..prep.p() {
        if prep.live[j] && out[j] == 0.0 && (prep.xty[j] - q[j]).abs() > thr + slack {
            return None;
        }
    }
    let q_old = &prep.gram * beta;
    let before = prep.objective(beta, &q_old, tau, rho);
    let after = prep.objective(&out, &q, tau, rho);
    (after <= before + 1e-12 * before.abs().max(1e-300)).then_some(out)
}

pub(crate) fn solve(prep: &Prepared, tau: f64, rho: f64, start: Option<&DVector<f64>>, opts: &PenaltyOptions) -> Solution {
    let p = prep.p();
    let mut beta = start.cloned().unwrap_or_else(|| DVector::zeros(p));
    if prep.degenerate() {
        return Solution {
            beta: DVector::zeros(p),
            iterations: 0,
            converged: true,
            polished: false,
            trace: vec![0.0],
        };
    }
    let thr = tau * rho / 2.0;
    let ridge = tau * (1.0 - rho) / 2.0;
    let mut q = &prep.gram * &beta;
    let mut trace = vec![prep.objective(&beta, &q, tau, rho)];
    let mut sweeps = 0;
    let mut converged = false;
    'outer: while sweeps < opts.max_sweeps {
        let mut moved: f64 = 0.0;
        for j in 0..p {
            moved = moved.max(coordinate(prep, &mut beta, &mut q, j, thr, ridge));
        }
        sweeps += 1;
        trace.push(prep.objective(&beta, &q, tau, rho));
        if moved < opts.tol {
            converged = true;
            break;
        }
        loop {
            if sweeps >= opts.max_sweeps {
                break 'outer;
            }
            let active: Vec<usize> = (0..p).filter(|&j| beta[j] != 0.0).collect();
            let mut moved: f64 = 0.0;
            for j in active {
                moved = moved.max(coordinate(prep, &mut beta, &mut q, j, thr, ridge));
            }
            sweeps += 1;
            trace.push(prep.objective(&beta, &q, tau, rho));
            if moved < opts.tol {
                break;
            }
        }
    }
    let mut polished = false;
    if opts.polish && converged {
        if let Some(b) = polish(prep, &beta, tau, rho) {
            beta = b;
            polished = true;
        }
    }
    Solution {
        beta,
        iterations: sweeps,
        converged,
        polished,
        trace,
    }
}

/// One penalized fit in the original column units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoFit {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub tau: f64,
    pub l1_ratio: f64,
    pub active_set: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    pub polished: bool,
    /// Penalized objective at the solution (penalty on fitted-scale coefficients).
    pub objective: f64,
    /// Largest violation of the stationarity conditions, in objective units.
    pub kkt_violation: f64,
    /// Objective after each sweep, starting from the initial point.
    #[serde(skip)]
    pub objective_trace: Vec<f64>,
    #[serde(skip)]
    pub(crate) fitted_scale: Vec<f64>,
}

/// Per-fit summary for diagnostic dumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub tau: f64,
    pub l1_ratio: f64,
    pub active_set: Vec<usize>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub kkt_max_violation: f64,
}

impl LassoFit {
    pub fn predict(&self, x: &DMatrix<f64>) -> DVector<f64> {
        let b = DVector::from_column_slice(&self.coefficients);
        (x * b).add_scalar(self.intercept)
    }

    pub fn diagnostics(&self) -> FitDiagnostics {
        FitDiagnostics {
            tau: self.tau,
            l1_ratio: self.l1_ratio,
            active_set: self.active_set.clone(),
            objective: self.objective,
            iterations: self.iterations,
            converged: self.converged,
            kkt_max_violation: self.kkt_violation,
        }
    }

    /// Coefficients on the scale the penalty acts on.
    pub fn fitted_scale_coefficients(&self) -> &[f64] {
        &self.fitted_scale
    }
}

pub(crate) fn finish(prep: &Prepared, sol: Solution, tau: f64, rho: f64) -> LassoFit {
    let q = &prep.gram * &sol.beta;
    let coefficients: Vec<f64> = (0..prep.p())
        .map(|j| if prep.live[j] && sol.beta[j] != 0.0 { sol.beta[j] / prep.scales[j] } else { 0.0 })
        .collect();
    let intercept = prep.y_mean - coefficients.iter().zip(&prep.means).map(|(b, m)| b * m).sum::<f64>();
    if !sol.converged {
        log::warn!("penalized fit at tau {tau} did not converge in {} sweeps", sol.iterations);
    }
    LassoFit {
        intercept,
        active_set: (0..prep.p()).filter(|&j| coefficients[j] != 0.0).collect(),
        coefficients,
        tau,
        l1_ratio: rho,
        iterations: sol.iterations,
        converged: sol.converged,
        polished: sol.polished,
        objective: prep.objective(&sol.beta, &q, tau, rho),
        kkt_violation: prep.kkt_violation(&sol.beta, &q, tau, rho),
        objective_trace: sol.trace,
        fitted_scale: sol.beta.iter().copied().collect(),
    }
}

fn check_penalty(tau: f64, rho: f64) -> Result<(), DesignError> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(DesignError::InvalidParameter(format!("tau must be finite and non-negative, got {tau}")));
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(DesignError::InvalidParameter(format!("l1_ratio must lie in [0, 1], got {rho}")));
    }
    Ok(())
}

pub fn penalized_fit(x: &DesignMatrix, y: &[f64], tau: f64, l1_ratio: f64, opts: &PenaltyOptions) -> Result<LassoFit, DesignError> {
    check_penalty(tau, l1_ratio)?;
    let yv = x.check_response(y)?;
    let prep = Prepared::new(x.matrix(), &yv, opts.standardize);
    let sol = solve(&prep, tau, l1_ratio, None, opts);
    Ok(finish(&prep, sol, tau, l1_ratio))
}

pub fn lasso_fit(x: &DesignMatrix, y: &[f64], tau: f64, opts: &PenaltyOptions) -> Result<LassoFit, DesignError> {
    penalized_fit(x, y, tau, 1.0, opts)
}

pub fn elastic_net_fit(x: &DesignMatrix, y: &[f64], tau: f64, l1_ratio: f64, opts: &PenaltyOptions) -> Result<LassoFit, DesignError> {
    penalized_fit(x, y, tau, l1_ratio, opts)
}

/// Smallest penalty at which every coefficient is zero.
pub fn tau_max(x: &DesignMatrix, y: &[f64], l1_ratio: f64, standardize: bool) -> Result<f64, DesignError> {
    let yv = x.check_response(y)?;
    Ok(Prepared::new(x.matrix(), &yv, standardize).tau_max(l1_ratio))
}

/// `len` penalties log-spaced from `top` down to `eps·top`.
pub fn tau_grid(top: f64, len: usize, eps: f64) -> Vec<f64> {
    match len {
        0 => Vec::new(),
        1 => vec![top],
        _ => (0..len)
            .map(|k| if k == 0 { top } else { top * eps.powf(k as f64 / (len - 1) as f64) })
            .collect(),
    }
}

/// Warm-started fits along a decreasing grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoPath {
    pub taus: Vec<f64>,
    pub l1_ratio: f64,
    pub fits: Vec<LassoFit>,
    /// The response has no variation; every fit is zero.
    pub degenerate: bool,
}

pub(crate) fn path_solutions(prep: &Prepared, taus: &[f64], rho: f64, opts: &PenaltyOptions) -> Vec<Solution> {
    let mut out: Vec<Solution> = Vec::with_capacity(taus.len());
    for &tau in taus {
        let start = out.last().map(|s| s.beta.clone());
        out.push(solve(prep, tau, rho, start.as_ref(), opts));
    }
    out
}

pub(crate) fn path_on(prep: &Prepared, taus: &[f64], rho: f64, opts: &PenaltyOptions) -> LassoPath {
    let fits = path_solutions(prep, taus, rho, opts)
        .into_iter()
        .zip(taus)
        .map(|(s, &tau)| finish(prep, s, tau, rho))
        .collect();
    LassoPath {
        taus: taus.to_vec(),
        l1_ratio: rho,
        fits,
        degenerate: prep.degenerate(),
    }
}

/// Path from `tau_max` down to `eps·tau_max` over `len` log-spaced points.
pub fn lasso_path(x: &DesignMatrix, y: &[f64], len: usize, eps: f64, l1_ratio: f64, opts: &PenaltyOptions) -> Result<LassoPath, DesignError> {
    check_penalty(0.0, l1_ratio)?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(DesignError::InvalidParameter(format!("path eps must lie in (0, 1), got {eps}")));
    }
    let yv = x.check_response(y)?;
    let prep = Prepared::new(x.matrix(), &yv, opts.standardize);
    let taus = tau_grid(prep.tau_max(l1_ratio), len, eps);
    let path = path_on(&prep, &taus, l1_ratio, opts);
    if path.degenerate {
        log::warn!("response has zero variance; the path is identically zero");
    }
    Ok(path)
}
