mod common;

use latent_atlas::align::{self, row_normalize, FitOptions, MethodConfig, ProcrustesOptions, TranslationMatrix};
use latent_atlas::mapping::{map_vector, rank_features};
use latent_atlas::metrics::{
    auroc, average_precision, faithfulness, predicted_probabilities, reciprocal_ranks, BinaryLabeledScores,
    FaithfulnessOptions, Rating, RatingsTable, RetrievalMatrix,
};
use latent_atlas::npy;
use latent_atlas::par::Exec;
use latent_atlas::query::query_from_indices;
use latent_atlas::steering::{apply_steering, SteeringRequest};
use latent_atlas::tensorstore::PairedActivations;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

use common::*;

fn gaussian(seed: u64, r: usize, c: usize) -> DMatrix<f64> {
    let mut g = rng(seed);
    DMatrix::from_fn(r, c, |_, _| g.sample(StandardNormal))
}

fn dense(m: &latent_atlas::ActivationMatrix) -> DMatrix<f64> {
    DMatrix::from_fn(m.n_rows(), m.n_cols(), |i, j| m.get(i, j) as f64)
}

fn procrustes_objective(p: &PairedActivations, t: &DMatrix<f64>) -> f64 {
    (dense(&p.subject) - dense(&p.atlas) * t.transpose()).norm_squared()
}

fn semi_orthogonal(seed: u64, d_s: usize, d_c: usize) -> DMatrix<f64> {
    gaussian(seed, d_c, d_s).qr().q().transpose()
}

fn raw_procrustes() -> MethodConfig {
    MethodConfig::OrthogonalProcrustes(ProcrustesOptions { normalize_rows: false, ..Default::default() })
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn procrustes_beats_random_semi_orthogonal_maps(seed in any::<u64>(), n in 8usize..120, d_s in 1usize..6, extra in 0usize..4) {
        let d_c = d_s + extra;
        let p = random_pair(seed, n, d_s, d_c);
        let t = align::fit(&p, &raw_procrustes(), &FitOptions::default()).unwrap();
        let best = procrustes_objective(&p, &t.data);
        for k in 0..20 {
            let q = semi_orthogonal(seed ^ (k + 1), d_s, d_c);
            prop_assert!(best <= procrustes_objective(&p, &q) * (1.0 + 1e-9) + 1e-9);
        }
        // Small rotations of the fitted map do not improve it either.
        let skew = {
            let g = gaussian(seed.wrapping_add(7), d_c, d_c) * 1e-3;
            &g - g.transpose()
        };
        let eye = DMatrix::<f64>::identity(d_c, d_c);
        let rot = (&eye - &skew * 0.5).try_inverse().unwrap() * (&eye + &skew * 0.5);
        prop_assert!((&rot * rot.transpose() - &eye).abs().max() < 1e-12);
        let nearby = &t.data * rot;
        prop_assert!(best <= procrustes_objective(&p, &nearby) * (1.0 + 1e-9) + 1e-9);
    }

    #[test]
    fn procrustes_rows_are_orthonormal(seed in any::<u64>(), n in 4usize..200, d_s in 1usize..8, extra in 0usize..8, norm in any::<bool>()) {
        let p = random_pair(seed, n, d_s, d_s + extra);
        let cfg = MethodConfig::OrthogonalProcrustes(ProcrustesOptions { normalize_rows: norm, ..Default::default() });
        let t = align::fit(&p, &cfg, &FitOptions::default()).unwrap();
        let gram = &t.data * t.data.transpose();
        prop_assert!((gram - DMatrix::identity(d_s, d_s)).abs().max() < 1e-8);
    }

    #[test]
    fn regression_satisfies_normal_equations(seed in any::<u64>(), n in 20usize..200, d_s in 1usize..6, d_c in 1usize..6, ridge in 0.0f64..5.0) {
        let p = random_pair(seed, n, d_s, d_c);
        let t = align::fit(&p, &MethodConfig::LinearRegression { ridge, rcond: 1e-10 }, &FitOptions::default()).unwrap();
        let (s, c) = (dense(&p.subject), dense(&p.atlas));
        let grad = c.transpose() * (&s - &c * t.data.transpose()) - t.data.transpose() * ridge;
        let scale = (c.transpose() * &s).abs().max().max(1.0);
        prop_assert!(grad.abs().max() / scale < 1e-8, "{}", grad.abs().max());
    }

    #[test]
    fn covariance_is_bilinear_in_scale(seed in any::<u64>(), n in 2usize..100, d in 1usize..6, e in -4i32..4) {
        let p = random_pair(seed, n, d, d);
        let a = 2f32.powi(e);
        let scaled = latent_atlas::tensorstore::pair(
            matrix(n, d, p.subject.data().iter().map(|v| v * a).collect()),
            p.atlas.clone(),
            true,
        ).unwrap();
        let base = align::fit(&p, &MethodConfig::Covariance, &FitOptions::default()).unwrap();
        let got = align::fit(&scaled, &MethodConfig::Covariance, &FitOptions::default()).unwrap();
        prop_assert!(max_abs_diff(&(base.data * a as f64), &got.data) <= 1e-9 * (1.0 + got.data.abs().max()));
    }

    #[test]
    fn correlation_is_bounded(seed in any::<u64>(), n in 2usize..100, d_s in 1usize..6, d_c in 1usize..6) {
        let p = random_pair(seed, n, d_s, d_c);
        let t = align::fit(&p, &MethodConfig::Correlation { eps: 1e-12 }, &FitOptions::default()).unwrap();
        prop_assert!(t.data.iter().all(|v| v.abs() <= 1.0 + 1e-12));
    }

    #[test]
    fn lens_rows_lie_in_atlas_column_range(seed in any::<u64>(), n in 2usize..100, d_s in 1usize..6, d_c in 1usize..6, kf in 0.0f64..1.0) {
        let p = random_pair(seed, n, d_s, d_c);
        let k = 1 + ((n - 1) as f64 * kf) as usize;
        let t = align::fit(&p, &MethodConfig::SemanticLens { k }, &FitOptions::default()).unwrap();
        for c in 0..d_c {
            let col = p.atlas.column(c);
            let lo = col.iter().cloned().fold(f32::INFINITY, f32::min) as f64;
            let hi = col.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
            for j in 0..d_s {
                prop_assert!(t.data[(j, c)] >= lo - 1e-12 && t.data[(j, c)] <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn fits_are_bit_identical_across_exec_and_block_size(seed in any::<u64>(), n in 2usize..300, d_s in 1usize..6, extra in 0usize..4, block in 1usize..50) {
        let p = random_pair(seed, n, d_s, d_s + extra);
        let configs = [
            MethodConfig::Covariance,
            MethodConfig::Correlation { eps: 1e-12 },
            MethodConfig::LinearRegression { ridge: 0.1, rcond: 1e-10 },
            raw_procrustes(),
            MethodConfig::SemanticLens { k: 1 + n / 3 },
        ];
        for cfg in &configs {
            let a = align::fit(&p, cfg, &FitOptions { block_rows: block, exec: Exec::Parallel }).unwrap();
            let b = align::fit(&p, cfg, &FitOptions { block_rows: block, exec: Exec::Sequential }).unwrap();
            prop_assert_eq!(a.data, b.data);
        }
    }

    #[test]
    fn auroc_flips_with_labels_and_scores(seed in any::<u64>(), n in 2usize..200) {
        let (scores, labels) = random_scores(&mut rng(seed), n);
        let a = auroc(&BinaryLabeledScores::new(scores.clone(), labels.clone()).unwrap()).unwrap();
        let flipped: Vec<bool> = labels.iter().map(|l| !l).collect();
        let negated: Vec<f64> = scores.iter().map(|s| -s).collect();
        let b = auroc(&BinaryLabeledScores::new(scores, flipped).unwrap()).unwrap();
        let c = auroc(&BinaryLabeledScores::new(negated, labels).unwrap()).unwrap();
        prop_assert!((a + b - 1.0).abs() < 1e-12);
        prop_assert!((a + c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_ranking_gives_unit_ap_and_auroc(seed in any::<u64>(), n in 2usize..200) {
        let (_, labels) = random_scores(&mut rng(seed), n);
        let scores: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
        let x = BinaryLabeledScores::new(scores, labels).unwrap();
        prop_assert_eq!(auroc(&x).unwrap(), 1.0);
        prop_assert_eq!(average_precision(&x).unwrap(), 1.0);
    }

    #[test]
    fn map_vector_is_scale_invariant_and_bounded(seed in any::<u64>(), d_s in 1usize..10, d_c in 1usize..20, e in -30i32..30) {
        let t = row_normalize(&TranslationMatrix::external(gaussian(seed, d_s, d_c)).unwrap());
        let q: Vec<f64> = gaussian(seed ^ 1, 1, d_c).iter().copied().collect();
        let alpha = 1.7f64 * 10f64.powi(e);
        let a = map_vector(&t, &q).unwrap();
        let b = map_vector(&t, &q.iter().map(|v| v * alpha).collect::<Vec<_>>()).unwrap();
        for (x, y) in a.scores.iter().zip(&b.scores) {
            prop_assert!((x - y).abs() <= 1e-12);
            prop_assert!(x.abs() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn ranking_is_sorted_and_clamped(seed in any::<u64>(), d in 1usize..40, top in 0usize..60) {
        let mut g = rng(seed);
        let scores: Vec<f64> = (0..d).map(|_| (g.random_range(-3.0f64..3.0) * 2.0).round()).collect();
        let ranked = rank_features(&latent_atlas::SimilarityVector::new(scores), top);
        prop_assert_eq!(ranked.0.len(), top.min(d));
        for w in ranked.0.windows(2) {
            prop_assert!(w[0].1 > w[1].1 || (w[0].1 == w[1].1 && w[0].0 < w[1].0));
        }
    }

    #[test]
    fn steering_preserves_norm(seed in any::<u64>(), d in 1usize..50, lambda in -1e3f64..1e3) {
        let a: Vec<f64> = gaussian(seed, 1, d).iter().copied().collect();
        let s: Vec<f64> = gaussian(seed ^ 2, 1, d).iter().copied().collect();
        if let Ok(out) = apply_steering(&a, &SteeringRequest::new(s, lambda, 0).unwrap()) {
            prop_assert!((l2(&out) - l2(&a)).abs() <= 1e-9 * l2(&a));
        }
    }

    #[test]
    fn steering_is_scale_equivariant(seed in any::<u64>(), d in 1usize..50, lambda in -50f64..50.0, e in -8i32..8) {
        let a: Vec<f64> = gaussian(seed, 1, d).iter().copied().collect();
        let s: Vec<f64> = gaussian(seed ^ 3, 1, d).iter().copied().collect();
        let c = 3f64.powi(e);
        let base = apply_steering(&a, &SteeringRequest::new(s.clone(), lambda, 0).unwrap());
        let ca: Vec<f64> = a.iter().map(|v| v * c).collect();
        let cs: Vec<f64> = s.iter().map(|v| v * c).collect();
        let scaled = apply_steering(&ca, &SteeringRequest::new(cs, lambda, 0).unwrap());
        // Rescaling the direction is the same as rescaling lambda.
        let rescaled = apply_steering(&a, &SteeringRequest::new(s.iter().map(|v| v * c).collect(), lambda / c, 0).unwrap());
        if let (Ok(b), Ok(sc), Ok(rs)) = (base, scaled, rescaled) {
            for i in 0..d {
                prop_assert!((sc[i] - c * b[i]).abs() <= 1e-9 * c * l2(&a));
                prop_assert!((rs[i] - b[i]).abs() <= 1e-9 * l2(&a));
            }
        }
    }

    #[test]
    fn query_ignores_entry_order(seed in any::<u64>(), d_c in 1usize..100, count in 1usize..20) {
        let mut g = rng(seed);
        let idx = rand::seq::index::sample(&mut g, d_c, count.min(d_c)).into_vec();
        let entries: Vec<(usize, f64)> = idx.iter().map(|&i| (i, g.random_range(0.1..3.0))).collect();
        let mut rev = entries.clone();
        rev.reverse();
        prop_assert_eq!(query_from_indices(&entries, d_c).unwrap().vector, query_from_indices(&rev, d_c).unwrap().vector);
    }

    #[test]
    fn retrieval_scores_are_probabilities(seed in any::<u64>(), rows in 1usize..10, d in 1usize..50, shift in -100f64..100.0, e in -5i32..5) {
        let mut g = rng(seed);
        let scores: Vec<Vec<f64>> = (0..rows).map(|_| (0..d).map(|_| g.random_range(-1.0..1.0)).collect()).collect();
        let targets: Vec<usize> = (0..rows).map(|_| g.random_range(0..d)).collect();
        let m = RetrievalMatrix::new(scores.clone(), targets.clone()).unwrap();
        let pp = predicted_probabilities(&m, Exec::Sequential);
        let rr = reciprocal_ranks(&m, Exec::Sequential);
        prop_assert!(pp.iter().all(|&p| p > 0.0 && p <= 1.0));
        prop_assert!(rr.iter().all(|&r| r > 0.0 && r <= 1.0));
        // z-scoring removes any positive affine change of a score row.
        let a = 2f64.powi(e);
        let moved: Vec<Vec<f64>> = scores.iter().map(|r| r.iter().map(|v| a * v + shift).collect()).collect();
        let m2 = RetrievalMatrix::new(moved, targets).unwrap();
        for (x, y) in pp.iter().zip(predicted_probabilities(&m2, Exec::Parallel)) {
            prop_assert!((x - y).abs() < 1e-9);
        }
        prop_assert_eq!(rr, reciprocal_ranks(&m2, Exec::Parallel));
    }

    #[test]
    fn faithfulness_is_at_most_100(seed in any::<u64>(), prompts in 1usize..15) {
        let mut g = rng(seed);
        let mut records = Vec::new();
        for lambda in [0.0, 1.0, 10.0, -5.0] {
            for i in 0..prompts {
                let label = if lambda == 0.0 && i == 0 { 0 } else { g.random_range(0..=2u8) };
                records.push(Rating { query_id: "q".into(), lambda, prompt_id: format!("p{i}"), label });
            }
        }
        let table = RatingsTable::new(records).unwrap();
        if let Ok(f) = faithfulness(&table, "q", FaithfulnessOptions::default()) {
            prop_assert!(f.faithfulness <= 100.0);
            prop_assert!(f.best_lambda != 0.0);
        }
    }

    #[test]
    fn npy_round_trip(seed in any::<u64>(), rows in 0usize..20, cols in 0usize..20) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.npy");
        let data: Vec<f64> = gaussian(seed, 1, rows * cols).iter().copied().collect();
        npy::write_f64(&path, &[rows, cols], &data).unwrap();
        let (shape, back) = npy::read_f64(&path).unwrap();
        prop_assert_eq!(shape, vec![rows, cols]);
        prop_assert_eq!(back, data);
    }

    #[test]
    fn translation_save_load_is_exact(seed in any::<u64>(), d_s in 1usize..8, d_c in 1usize..8) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.npy");
        let t = TranslationMatrix::external(gaussian(seed, d_s, d_c)).unwrap();
        t.save(&path).unwrap();
        prop_assert_eq!(TranslationMatrix::load(&path).unwrap(), t);
    }

    #[test]
    fn normalized_rows_are_unit_or_zero(seed in any::<u64>(), d_s in 1usize..8, d_c in 1usize..8, zero_row in 0usize..8) {
        let mut m = gaussian(seed, d_s, d_c);
        if zero_row < d_s {
            m.row_mut(zero_row).fill(0.0);
        }
        let n = row_normalize(&TranslationMatrix::external(m).unwrap());
        for j in 0..d_s {
            let norm = n.data.row(j).norm();
            if n.zero_rows.contains(&j) {
                prop_assert_eq!(norm, 0.0);
            } else {
                prop_assert!((norm - 1.0).abs() < 1e-12);
            }
        }
    }
}
