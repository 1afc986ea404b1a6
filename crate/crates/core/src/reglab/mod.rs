//! Penalized and ordinary least squares.
//!
//! Penalized fits minimize
//!
//! ```text
//! (1/n)·‖y − γ − Xλ‖² + (τ/n)·(ρ·‖λ‖₁ + (1 − ρ)/2·‖λ‖²)
//! ```
//!
//! with the intercept `γ` unpenalized and `ρ = 1` giving the lasso. By
//! default the columns of `X` are centered and scaled to unit population
//! variance before fitting and the coefficients are mapped back afterwards,
//! so `τ` acts on standardized coefficients. In scikit-learn terms
//! `alpha = τ / (2n)`.

mod cv;
mod design;
mod lasso;
mod ols;
mod pca;

pub use cv::{
    elastic_net_cv, fold_assignment, kfold_cv, lasso_cv, select_one_se, CvCurve, CvOptions, ElasticNetCv, LassoCv,
};
pub use design::{find_dependencies, DesignError, DesignMatrix, Dependence};
pub use lasso::{
    elastic_net_fit, lasso_fit, lasso_path, penalized_fit, tau_grid, tau_max, FitDiagnostics, LassoFit, LassoPath,
    PenaltyOptions,
};
pub use ols::{ols_hc3, OlsError, OlsFit};
pub use pca::{pca_reduce, PcaFit};

/// `sign(z)·max(|z| − g, 0)`.
pub fn soft_threshold(z: f64, g: f64) -> f64 {
    debug_assert!(g >= 0.0);
    if z > g {
        z - g
    } else if z < -g {
        z + g
    } else {
        0.0
    }
}

/// Default grid length for regularization paths.
pub const DEFAULT_PATH_LEN: usize = 200;
/// Default ratio of the smallest to the largest penalty on a path.
pub const DEFAULT_PATH_EPS: f64 = 0.05;
