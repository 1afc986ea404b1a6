use nalgebra::{DMatrix, SymmetricEigen};

/// Principal components of the column-centered data.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaFit {
    pub means: Vec<f64>,
    /// Sample-covariance eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// Unit eigenvectors as columns, in eigenvalue order; the entry of
    /// largest magnitude in each is positive.
    pub loadings: DMatrix<f64>,
    /// Share of total variance per component.
    pub explained: Vec<f64>,
    pub retained: usize,
    /// Centered data projected on the retained components.
    pub scores: DMatrix<f64>,
}

/// Keeps the fewest leading components whose cumulative share reaches
/// `var_target`; a target of 1 or more keeps every component.
pub fn pca_reduce(x: &DMatrix<f64>, var_target: f64) -> PcaFit {
    let (n, p) = x.shape();
    assert!(n >= 2 && p >= 1, "PCA needs at least 2 rows and 1 column");
    let means: Vec<f64> = (0..p).map(|j| x.column(j).mean()).collect();
    let centered = DMatrix::from_fn(n, p, |i, j| x[(i, j)] - means[j]);
    let cov = centered.tr_mul(&centered) / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k].max(0.0)).collect();
    let mut loadings = DMatrix::zeros(p, p);
    for (c, &k) in order.iter().enumerate() {
        let v = eig.eigenvectors.column(k);
        let lead = v.iter().copied().fold(0.0_f64, |m, e| if e.abs() > m.abs() { e } else { m });
        let sign = if lead < 0.0 { -1.0 } else { 1.0 };
        loadings.set_column(c, &(v * sign));
    }
    let total: f64 = eigenvalues.iter().sum();
    let explained: Vec<f64> = if total > 0.0 {
        eigenvalues.iter().map(|e| e / total).collect()
    } else {
        vec![0.0; p]
    };
    let retained = if var_target >= 1.0 {
        p
    } else if total > 0.0 {
        let mut cum = 0.0;
        explained
            .iter()
            .position(|e| {
                cum += e;
                cum >= var_target - 1e-12
            })
            .map_or(p, |m| m + 1)
    } else {
        0
    };
    let scores = &centered * loadings.columns(0, retained);
    PcaFit {
        means,
        eigenvalues,
        loadings,
        explained,
        retained,
        scores,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_covariance_keeps_two() {
        // orthogonal ±1 patterns scaled so the sample covariance is diag(4, 1, 0.01)
        let s = [2.0, 1.0, 0.1].map(|v: f64| v * (3.0f64 / 4.0).sqrt());
        let pat = [[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]];
        let x = DMatrix::from_fn(4, 3, |i, j| pat[i][j] * s[j]);
        let f = pca_reduce(&x, 0.9);
        assert!((f.eigenvalues[0] - 4.0).abs() < 1e-12);
        assert_eq!(f.retained, 2);
        assert_eq!(f.scores.ncols(), 2);
    }

    #[test]
    fn points_on_a_line() {
        let x = DMatrix::from_fn(6, 3, |i, j| (i as f64) * [1.0, -2.0, 0.5][j] + 3.0);
        let f = pca_reduce(&x, 0.9);
        assert_eq!(f.retained, 1);
        assert!((f.explained[0] - 1.0).abs() < 1e-12);
        let gram = f.loadings.tr_mul(&f.loadings);
        assert!((gram - DMatrix::identity(3, 3)).amax() < 1e-10);
        assert!(f.loadings[(1, 0)] > 0.0);
    }
}
