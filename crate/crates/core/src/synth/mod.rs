//! Synthetic cross-sections from a known sparse factor model, and
//! brute-force references for the estimators.
//!
//! Controls `h_t` and independent innovations `u_t` are standard normal.
//! Alphas are `g_t = A·h_t + s ∘ u_t` with `s_j = sqrt(1 − ‖A_j‖²)`, so
//! every factor has unit variance and `A` holds the alpha–control
//! correlations. With `whiten` set, `(h, u)` is transformed so its sample
//! mean is zero and its sample covariance is exactly the identity.
//!
//! Test-asset returns are `r_it = μ_i + b_iᵀh_t + c_iᵀu_t + σ·e_it` with
//! loadings `b_i, c_i` drawn once per asset. Covariances with the
//! standardized factors are then `b_i` (controls) and `A·b_i + s ∘ c_i`
//! (alphas), and expected returns follow the pricing equation
//! `μ_i = γ₀ + b_iᵀλ_h + (A·b_i + s ∘ c_i)ᵀλ_g (+ optional pricing error)`.
//!
//! Draw order for a seed: `b` (asset-major), `c`, pricing errors, factors
//! (month-major, controls then innovations), residuals (asset-major).

mod oracle;
mod recovery;

use chrono::NaiveDate;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::pipeline::AssetReturns;
use crate::portfolio::{FactorSeries, Frequency};
use crate::rng::SeededRng;

pub use oracle::oracle_lasso;
pub use recovery::{monte_carlo, support_recovery_rate, RecoveryReport, RunRecord, RunSummary};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DgpError {
    #[error("invalid synthetic design: {0}")]
    Invalid(String),
}

/// Premium `value` on factor `index`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Premium {
    pub index: usize,
    pub value: f64,
}

/// Correlation `loading` of alpha `alpha` with control `control`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Confounding {
    pub alpha: usize,
    pub control: usize,
    pub loading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticDgp {
    pub n_assets: usize,
    pub months: usize,
    pub n_controls: usize,
    pub n_alphas: usize,
    #[serde(default)]
    pub zero_beta: f64,
    #[serde(default)]
    pub control_premia: Vec<Premium>,
    #[serde(default)]
    pub alpha_premia: Vec<Premium>,
    #[serde(default)]
    pub confounding: Vec<Confounding>,
    /// Standard deviation of the asset loadings.
    pub loading_sd: f64,
    /// Residual return volatility.
    pub noise_sd: f64,
    #[serde(default)]
    pub pricing_error_sd: f64,
    #[serde(default = "default_true")]
    pub whiten: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_true() -> bool {
    true
}

impl SyntheticDgp {
    pub fn validate(&self) -> Result<(), DgpError> {
        let bad = |m: String| Err(DgpError::Invalid(m));
        if self.n_assets < 2 || self.n_controls == 0 {
            return bad("need at least 2 assets and 1 control".into());
        }
        if self.months <= self.n_controls + self.n_alphas {
            return bad(format!("{} months cannot whiten {} factors", self.months, self.n_controls + self.n_alphas));
        }
        if !(self.noise_sd > 0.0) || !(self.loading_sd > 0.0) || self.pricing_error_sd < 0.0 {
            return bad("noise and loading scales must be positive".into());
        }
        if self.control_premia.len() >= self.n_controls {
            return bad("control premium support must be smaller than the control count".into());
        }
        for p in &self.control_premia {
            if p.index >= self.n_controls {
                return bad(format!("control premium index {} out of range", p.index));
            }
        }
        for p in &self.alpha_premia {
            if p.index >= self.n_alphas {
                return bad(format!("alpha premium index {} out of range", p.index));
            }
        }
        for c in &self.confounding {
            if c.alpha >= self.n_alphas || c.control >= self.n_controls {
                return bad("confounding index out of range".into());
            }
        }
        for (j, row) in self.confounding_matrix().row_iter().enumerate() {
            if row.norm_squared() >= 1.0 {
                return bad(format!("alpha {j} loadings must have squared norm below 1"));
            }
        }
        Ok(())
    }

    /// Alphas × controls.
    pub fn confounding_matrix(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n_alphas, self.n_controls);
        for c in &self.confounding {
            if c.alpha < self.n_alphas && c.control < self.n_controls {
                a[(c.alpha, c.control)] = c.loading;
            }
        }
        a
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    /// Smallest nonzero control premium divided by the residual volatility.
    pub fn premium_to_noise(&self) -> f64 {
        self.control_premia.iter().map(|p| p.value.abs()).fold(f64::INFINITY, f64::min) / self.noise_sd
    }

    fn dense(premia: &[Premium], len: usize) -> Vec<f64> {
        let mut v = vec![0.0; len];
        for p in premia {
            v[p.index] = p.value;
        }
        v
    }
}

/// Every latent quantity behind one synthetic sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub dgp: SyntheticDgp,
    pub control_premia: Vec<f64>,
    pub alpha_premia: Vec<f64>,
    /// `confounding[j][k]`.
    pub confounding: Vec<Vec<f64>>,
    pub innovation_scale: Vec<f64>,
    /// `control_loadings[i][k]`.
    pub control_loadings: Vec<Vec<f64>>,
    pub innovation_loadings: Vec<Vec<f64>>,
    pub pricing_errors: Vec<f64>,
    pub expected_returns: Vec<f64>,
    /// Population covariances of each asset with the alphas.
    pub alpha_covariances: Vec<Vec<f64>>,
}

impl TruthRecord {
    pub fn control_support(&self) -> Vec<usize> {
        (0..self.control_premia.len()).filter(|&k| self.control_premia[k] != 0.0).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample {
    pub assets: AssetReturns,
    pub controls: Vec<FactorSeries>,
    pub alphas: Vec<FactorSeries>,
    pub truth: TruthRecord,
}

/// Last day of each month starting January 2000.
pub fn month_ends(n: usize) -> Vec<NaiveDate> {
    (0..n)
        .map(|i| {
            let (y, m) = (2000 + (i / 12) as i32, (i % 12) as u32 + 1);
            let next = if m == 12 {
                NaiveDate::from_ymd_opt(y + 1, 1, 1)
            } else {
                NaiveDate::from_ymd_opt(y, m + 1, 1)
            };
            next.and_then(|d| d.pred_opt()).expect("valid month")
        })
        .collect()
}

pub fn control_name(k: usize) -> String {
    format!("h{:03}", k + 1)
}

pub fn alpha_name(j: usize) -> String {
    format!("g{:03}", j + 1)
}

fn draw_matrix(rng: &mut SeededRng, rows: usize, cols: usize, sd: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = rng.normal(0.0, sd);
        }
    }
    m
}

/// Demeans and rotates the columns so their sample covariance is the identity.
fn whiten(z: &mut DMatrix<f64>) {
    let t = z.nrows() as f64;
    for mut col in z.column_iter_mut() {
        let m = col.mean();
        col.add_scalar_mut(-m);
    }
    let cov = z.tr_mul(z) / (t - 1.0);
    let chol = cov.cholesky().expect("factor draws are full rank");
    let l = chol.l();
    // z ← z · L⁻ᵀ
    let solved = l.solve_lower_triangular(&z.transpose()).expect("triangular solve");
    *z = solved.transpose();
}

pub fn generate(dgp: &SyntheticDgp) -> Result<SyntheticSample, DgpError> {
    dgp.validate()?;
    let (n, t, p, d) = (dgp.n_assets, dgp.months, dgp.n_controls, dgp.n_alphas);
    let mut rng = SeededRng::new(dgp.seed);
    let b = draw_matrix(&mut rng, n, p, dgp.loading_sd);
    let c = draw_matrix(&mut rng, n, d, dgp.loading_sd);
    let pricing: Vec<f64> = (0..n).map(|_| rng.normal(0.0, dgp.pricing_error_sd)).collect();
    let mut z = draw_matrix(&mut rng, t, p + d, 1.0);
    if dgp.whiten {
        whiten(&mut z);
    }
    let h = z.columns(0, p).clone_owned();
    let u = z.columns(p, d).clone_owned();
    let a = dgp.confounding_matrix();
    let s: Vec<f64> = (0..d).map(|j| (1.0 - a.row(j).norm_squared()).sqrt()).collect();
    let s_diag = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&s));
    // T × d
    let g = &h * a.transpose() + &u * &s_diag;
    let lam_h = SyntheticDgp::dense(&dgp.control_premia, p);
    let lam_g = SyntheticDgp::dense(&dgp.alpha_premia, d);
    // n × d: A·b_i + s ∘ c_i per asset
    let cov_g = &b * a.transpose() + &c * &s_diag;
    let mu: Vec<f64> = (0..n)
        .map(|i| {
            dgp.zero_beta
                + (0..p).map(|k| b[(i, k)] * lam_h[k]).sum::<f64>()
                + (0..d).map(|j| cov_g[(i, j)] * lam_g[j]).sum::<f64>()
                + pricing[i]
        })
        .collect();
    // n × T systematic part
    let systematic = &b * h.transpose() + &c * u.transpose();
    let mut returns = Vec::with_capacity(n);
    for i in 0..n {
        let row: Vec<f64> = (0..t).map(|m| mu[i] + systematic[(i, m)] + dgp.noise_sd * rng.standard_normal()).collect();
        returns.push(row);
    }
    let dates = month_ends(t);
    let controls = (0..p)
        .map(|k| FactorSeries::new(control_name(k), Frequency::Monthly, dates.clone(), h.column(k).iter().copied().collect()))
        .collect();
    let alphas = (0..d)
        .map(|j| FactorSeries::new(alpha_name(j), Frequency::Monthly, dates.clone(), g.column(j).iter().copied().collect()))
        .collect();
    let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> { m.row_iter().map(|r| r.iter().copied().collect()).collect() };
    let truth = TruthRecord {
        dgp: dgp.clone(),
        control_premia: lam_h,
        alpha_premia: lam_g,
        confounding: rows(&a),
        innovation_scale: s,
        control_loadings: rows(&b),
        innovation_loadings: rows(&c),
        pricing_errors: pricing,
        expected_returns: mu,
        alpha_covariances: rows(&cov_g),
    };
    Ok(SyntheticSample {
        assets: AssetReturns {
            ids: (0..n).map(|i| format!("p{:04}", i + 1)).collect(),
            dates,
            returns,
        },
        controls,
        alphas,
        truth,
    })
}

/// Reference designs used by the acceptance suite and the `synth` command.
pub mod scenarios {
    use super::{Confounding, Premium, SyntheticDgp};

    /// Five strongly priced controls among fifty.
    pub fn strong_signal(seed: u64) -> SyntheticDgp {
        SyntheticDgp {
            n_assets: 200,
            months: 600,
            n_controls: 50,
            n_alphas: 3,
            zero_beta: 0.002,
            control_premia: [3, 11, 22, 34, 47]
                .iter()
                .zip([0.30, -0.25, 0.25, 0.35, -0.30])
                .map(|(&index, value)| Premium { index, value })
                .collect(),
            alpha_premia: Vec::new(),
            confounding: Vec::new(),
            loading_sd: 0.05,
            noise_sd: 0.05,
            pricing_error_sd: 0.0,
            whiten: true,
            seed,
        }
    }

    /// No priced factor at all.
    pub fn pure_noise(seed: u64) -> SyntheticDgp {
        SyntheticDgp {
            control_premia: Vec::new(),
            ..strong_signal(seed)
        }
    }

    /// Alpha 0 is unpriced but loads 0.9 on control 7, whose premium is too
    /// weak for the first-stage screen to pick up reliably.
    pub fn confounded(seed: u64) -> SyntheticDgp {
        SyntheticDgp {
            control_premia: [3, 7, 22]
                .iter()
                .zip([0.30, 0.004, -0.25])
                .map(|(&index, value)| Premium { index, value })
                .collect(),
            alpha_premia: Vec::new(),
            confounding: vec![Confounding {
                alpha: 0,
                control: 7,
                loading: 0.9,
            }],
            ..strong_signal(seed)
        }
    }

    /// Alpha 0 carries a 50bp premium; the other alphas and the controls
    /// outside the strong-signal support are unpriced.
    pub fn planted_alpha(seed: u64) -> SyntheticDgp {
        SyntheticDgp {
            alpha_premia: vec![Premium { index: 0, value: 0.005 }],
            ..strong_signal(seed)
        }
    }
}
