mod common;

use factorsieve::pipeline::{
    infer_with_controls, run_double_selection, run_enet_benchmark, run_pca_benchmark, run_single_selection, stage3_infer, Estimator,
    MomentSet, PipelineOptions, PremiumTable,
};
use factorsieve::rng::SeededRng;
use nalgebra::DMatrix;
use proptest::prelude::*;

use common::random_matrix;

/// Cross-sectional moments with a sparse pricing structure: mean returns
/// load on a few controls, and each alpha's covariances overlap with them.
fn moments(seed: u64, n: usize, p: usize, k: usize) -> MomentSet {
    let mut rng = SeededRng::new(seed);
    let c_h = random_matrix(&mut rng, n, p) * 0.01;
    let mut c_g = random_matrix(&mut rng, n, k) * 0.01;
    for j in 0..k {
        let src = c_h.column(j % p).into_owned();
        c_g.column_mut(j).axpy(0.8, &src, 1.0);
    }
    let rbar = (0..n)
        .map(|i| 0.002 + 0.6 * c_h[(i, 0)] - 0.4 * c_h[(i, 1)] + 0.3 * c_g[(i, 0)] + 0.001 * rng.standard_normal())
        .collect();
    MomentSet::new(
        (0..n).map(|i| format!("p{i}")).collect(),
        (0..p).map(|j| format!("c{j}")).collect(),
        (0..k).map(|j| format!("a{j}")).collect(),
        rbar,
        c_h,
        c_g,
        240,
    )
    .unwrap()
}

fn assert_alphas_close(a: &PremiumTable, b: &PremiumTable, tol: f64) {
    assert_eq!(a.alphas.len(), b.alphas.len());
    for (x, y) in a.alphas.iter().zip(&b.alphas) {
        assert_eq!(x.factor, y.factor);
        let scale = 1.0 + x.coefficient.abs();
        assert!((x.coefficient - y.coefficient).abs() <= tol * scale, "{}: {} vs {}", x.factor, x.coefficient, y.coefficient);
        assert!((x.std_error - y.std_error).abs() <= tol * (1.0 + x.std_error), "{} std error", x.factor);
    }
}

fn random_rotation(rng: &mut SeededRng, p: usize) -> DMatrix<f64> {
    random_matrix(rng, p, p).qr().q()
}

#[test]
fn redundant_control_leaves_estimates_unchanged() {
    let m = moments(1, 150, 10, 3);
    let opts = PipelineOptions::default();
    let base = infer_with_controls(&m, &[0, 1, 2], Estimator::Ds, &opts).unwrap();
    let mut c_h = m.c_h.clone().insert_column(10, 0.0);
    let combo = m.c_h.column(0) * 2.0 - m.c_h.column(2) * 0.5;
    c_h.set_column(10, &combo);
    let mut labels = m.control_labels.clone();
    labels.push("combo".into());
    let wider = MomentSet::new(m.asset_ids.clone(), labels, m.alpha_labels.clone(), m.rbar.clone(), c_h, m.c_g.clone(), m.months).unwrap();
    let with = infer_with_controls(&wider, &[0, 1, 10, 2], Estimator::Ds, &opts).unwrap();
    assert_eq!(with.controls.len(), 3);
    assert_alphas_close(&base, &with, 1e-8);
}

#[test]
fn final_regression_uses_the_union_of_both_stages() {
    let m = moments(2, 160, 12, 3);
    let opts = PipelineOptions::default();
    let ds = run_double_selection(&m, &opts).unwrap();
    let mut expect: Vec<usize> = ds.sets.stage1.iter().chain(ds.sets.stage2.iter().flatten()).copied().collect();
    expect.sort_unstable();
    expect.dedup();
    assert_eq!(ds.sets.union(), expect);
    assert!(ds.sets.stage1.contains(&0));
    let direct = infer_with_controls(&m, &expect, Estimator::Ds, &opts).unwrap();
    assert_eq!(stage3_infer(&m, &ds.sets, &opts).unwrap(), direct);
    assert_eq!(ds.table, direct);
}

#[test]
fn pure_lasso_net_matches_single_selection() {
    let m = moments(3, 140, 10, 2);
    let opts = PipelineOptions {
        l1_ratios: vec![1.0],
        ..PipelineOptions::default()
    };
    let enet = run_enet_benchmark(&m, &opts).unwrap();
    let ss = run_single_selection(&m, &opts).unwrap();
    assert_eq!(enet.controls.len(), ss.controls.len());
    assert_alphas_close(&enet, &ss, 1e-8);
}

#[test]
fn full_retention_pca_matches_all_controls() {
    let m = moments(4, 130, 8, 2);
    let opts = PipelineOptions {
        pca_target: 1.0,
        ..PipelineOptions::default()
    };
    let pca = run_pca_benchmark(&m, &opts).unwrap();
    let all: Vec<usize> = (0..8).collect();
    let ols = infer_with_controls(&m, &all, Estimator::Pca, &opts).unwrap();
    assert_eq!(pca.controls.len(), 8);
    assert_alphas_close(&pca, &ols, 1e-8);
}

#[test]
fn selection_is_reproducible() {
    let m = moments(5, 120, 10, 3);
    let opts = PipelineOptions::default();
    assert_eq!(run_double_selection(&m, &opts).unwrap(), run_double_selection(&m, &opts).unwrap());
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let single = pool.install(|| run_double_selection(&m, &opts).unwrap());
    assert_eq!(single, run_double_selection(&m, &opts).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn pca_benchmark_ignores_rotations_of_controls(seed in 0u64..10_000, target in 0.3f64..0.95) {
        let m = moments(seed, 100, 6, 2);
        let mut rng = SeededRng::new(seed ^ 0xabc);
        let rotated = MomentSet::new(
            m.asset_ids.clone(),
            m.control_labels.clone(),
            m.alpha_labels.clone(),
            m.rbar.clone(),
            &m.c_h * random_rotation(&mut rng, 6),
            m.c_g.clone(),
            m.months,
        )
        .unwrap();
        let opts = PipelineOptions { pca_target: target, ..PipelineOptions::default() };
        let a = run_pca_benchmark(&m, &opts).unwrap();
        let b = run_pca_benchmark(&rotated, &opts).unwrap();
        prop_assert_eq!(a.controls.len(), b.controls.len());
        for (x, y) in a.alphas.iter().zip(&b.alphas) {
            prop_assert!((x.coefficient - y.coefficient).abs() <= 1e-7 * (1.0 + x.coefficient.abs()));
        }
    }
}
