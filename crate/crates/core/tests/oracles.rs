mod common;

use latent_atlas::align::{self, FitOptions, MethodConfig, ProcrustesOptions};
use latent_atlas::metrics::{auroc, average_precision, BinaryLabeledScores};
use latent_atlas::par::Exec;
use nalgebra::DMatrix;
use rand::Rng;

use common::*;

fn instances() -> impl Iterator<Item = (u64, usize, usize, usize, FitOptions)> {
    let mut r = rng(31337);
    (0..100u64).map(move |case| {
        let n = r.random_range(2..=500);
        let d_s = r.random_range(1..=16);
        let d_c = r.random_range(1..=16);
        let exec = if r.random::<bool>() { Exec::Parallel } else { Exec::Sequential };
        (case, n, d_s, d_c, FitOptions { block_rows: r.random_range(1..=128), exec })
    })
}

fn dense(m: &latent_atlas::ActivationMatrix) -> DMatrix<f64> {
    DMatrix::from_fn(m.n_rows(), m.n_cols(), |i, j| m.get(i, j) as f64)
}

#[test]
fn covariance_matches_triple_loop() {
    for (case, n, d_s, d_c, opts) in instances() {
        let p = random_pair(case, n, d_s, d_c);
        let t = align::fit(&p, &MethodConfig::Covariance, &opts).unwrap();
        assert!(max_abs_diff(&t.data, &covariance_oracle(&p)) <= 1e-9, "case {case}");
    }
}

#[test]
fn correlation_matches_triple_loop() {
    for (case, n, d_s, d_c, opts) in instances() {
        let p = random_pair(case, n, d_s, d_c);
        let t = align::fit(&p, &MethodConfig::Correlation { eps: 1e-12 }, &opts).unwrap();
        assert!(max_abs_diff(&t.data, &correlation_oracle(&p, 1e-12)) <= 1e-9, "case {case}");
    }
}

#[test]
fn semantic_lens_matches_sorted_reference() {
    for (case, n, d_s, d_c, opts) in instances() {
        let p = random_pair(case, n, d_s, d_c);
        for k in [1, n.div_ceil(2), n] {
            let t = align::fit(&p, &MethodConfig::SemanticLens { k }, &opts).unwrap();
            assert!(max_abs_diff(&t.data, &lens_oracle(&p, k)) <= 1e-9, "case {case} k {k}");
        }
    }
}

#[test]
fn auroc_and_ap_match_enumeration() {
    let mut r = rng(4);
    for case in 0..100 {
        let n = r.random_range(2..=500);
        let (scores, labels) = random_scores(&mut r, n);
        let x = BinaryLabeledScores::new(scores.clone(), labels.clone()).unwrap();
        assert!((auroc(&x).unwrap() - auroc_oracle(&scores, &labels)).abs() <= 1e-12, "case {case}");
        assert!((average_precision(&x).unwrap() - ap_oracle(&scores, &labels)).abs() <= 1e-12, "case {case}");
    }
}

#[test]
fn signed_zero_scores_tie() {
    let labels = vec![false, true];
    let x = BinaryLabeledScores::new(vec![0.0, -0.0], labels.clone()).unwrap();
    assert_eq!(auroc(&x).unwrap(), 0.5);
    assert_eq!(average_precision(&x).unwrap(), ap_oracle(&[0.0, -0.0], &labels));
    assert_eq!(average_precision(&x).unwrap(), 0.5);
}

#[test]
fn full_rank_regression_matches_cholesky_solve() {
    for (case, n, d_s, d_c, opts) in instances().filter(|&(_, n, _, d_c, _)| n > 4 * d_c) {
        let p = random_pair(case, n, d_s, d_c);
        let (s, c) = (dense(&p.subject), dense(&p.atlas));
        let want = (c.transpose() * &c).cholesky().unwrap().solve(&(c.transpose() * s)).transpose();
        let t = align::fit(&p, &MethodConfig::LinearRegression { ridge: 0.0, rcond: 1e-10 }, &opts).unwrap();
        let scale = want.abs().max().max(1.0);
        assert!(max_abs_diff(&t.data, &want) / scale <= 1e-8, "case {case}");
    }
}

#[test]
fn square_procrustes_matches_svd_closed_form() {
    for (case, n, d, _, opts) in instances().filter(|&(_, n, d, _, _)| n > 2 * d) {
        let p = random_pair(case, n, d, d);
        let m = dense(&p.atlas).transpose() * dense(&p.subject);
        let svd = m.transpose().svd(true, true);
        let want = svd.u.unwrap() * svd.v_t.unwrap();
        let cfg = MethodConfig::OrthogonalProcrustes(ProcrustesOptions { normalize_rows: false, ..Default::default() });
        let t = align::fit(&p, &cfg, &opts).unwrap();
        assert!(max_abs_diff(&t.data, &want) <= 1e-8, "case {case}");
    }
}
