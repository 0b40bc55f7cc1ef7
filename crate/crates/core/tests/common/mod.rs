//! Straightforward reference implementations used to cross-check the
//! optimized code paths, plus small fixture helpers.
#![allow(dead_code)]

use latent_atlas::tensorstore::{pair, ActivationMatrix, MatrixMeta, PairedActivations};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn matrix(rows: usize, cols: usize, data: Vec<f32>) -> ActivationMatrix {
    ActivationMatrix::new(data, rows, cols, MatrixMeta::anonymous(rows, cols)).unwrap()
}

/// Dense random pair; about a third of atlas entries are zero so ties and
/// sparsity both occur.
pub fn random_pair(seed: u64, n: usize, d_s: usize, d_c: usize) -> PairedActivations {
    let mut r = rng(seed);
    let s: Vec<f32> = (0..n * d_s).map(|_| r.random_range(-2.0f32..2.0)).collect();
    let c: Vec<f32> =
        (0..n * d_c).map(|_| if r.random::<f64>() < 0.33 { 0.0 } else { r.random_range(0.0f32..3.0) }).collect();
    pair(matrix(n, d_s, s), matrix(n, d_c, c), true).unwrap()
}

fn col(m: &ActivationMatrix, j: usize) -> Vec<f64> {
    (0..m.n_rows()).map(|i| m.get(i, j) as f64).collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Centered cross-product by explicit triple loop.
pub fn covariance_oracle(p: &PairedActivations) -> DMatrix<f64> {
    let n = p.n_samples();
    let ms: Vec<f64> = (0..p.d_s()).map(|j| mean(&col(&p.subject, j))).collect();
    let mc: Vec<f64> = (0..p.d_c()).map(|k| mean(&col(&p.atlas, k))).collect();
    let mut t = DMatrix::zeros(p.d_s(), p.d_c());
    for j in 0..p.d_s() {
        for k in 0..p.d_c() {
            let mut acc = 0.0;
            for i in 0..n {
                acc += (p.subject.get(i, j) as f64 - ms[j]) * (p.atlas.get(i, k) as f64 - mc[k]);
            }
            t[(j, k)] = acc;
        }
    }
    t
}

/// Pearson correlation, zero where either column has deviation below eps.
pub fn correlation_oracle(p: &PairedActivations, eps: f64) -> DMatrix<f64> {
    let n = p.n_samples();
    let mut t = DMatrix::zeros(p.d_s(), p.d_c());
    for j in 0..p.d_s() {
        let x = col(&p.subject, j);
        let mx = mean(&x);
        let sx = (x.iter().map(|v| (v - mx).powi(2)).sum::<f64>() / n as f64).sqrt();
        for k in 0..p.d_c() {
            let y = col(&p.atlas, k);
            let my = mean(&y);
            let sy = (y.iter().map(|v| (v - my).powi(2)).sum::<f64>() / n as f64).sqrt();
            if sx < eps || sy < eps {
                continue;
            }
            let mut acc = 0.0;
            for i in 0..n {
                acc += (x[i] - mx) * (y[i] - my);
            }
            t[(j, k)] = acc / n as f64 / (sx * sy);
        }
    }
    t
}

/// Row j = mean atlas row over the k samples with the largest subject
/// activation j, ties to the lower sample index.
pub fn lens_oracle(p: &PairedActivations, k: usize) -> DMatrix<f64> {
    let mut t = DMatrix::zeros(p.d_s(), p.d_c());
    for j in 0..p.d_s() {
        let x = col(&p.subject, j);
        let mut order: Vec<usize> = (0..x.len()).collect();
        order.sort_by(|&a, &b| x[b].partial_cmp(&x[a]).unwrap().then(a.cmp(&b)));
        for c in 0..p.d_c() {
            let s: f64 = order[..k].iter().map(|&i| p.atlas.get(i, c) as f64).sum();
            t[(j, c)] = s / k as f64;
        }
    }
    t
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half, by enumerating all pairs.
pub fn auroc_oracle(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Mean over positives of the precision among all items ranked at or above
/// it (descending score, ties to the lower index).
pub fn ap_oracle(scores: &[f64], labels: &[bool]) -> f64 {
    let above = |j: usize, i: usize| scores[j] > scores[i] || (scores[j] == scores[i] && j <= i);
    let mut total = 0.0;
    let mut n_pos = 0;
    for i in 0..scores.len() {
        if !labels[i] {
            continue;
        }
        n_pos += 1;
        let ranked: Vec<usize> = (0..scores.len()).filter(|&j| above(j, i)).collect();
        let hits = ranked.iter().filter(|&&j| labels[j]).count();
        total += hits as f64 / ranked.len() as f64;
    }
    total / n_pos as f64
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Mean over rows of the cosine between corresponding rows.
pub fn mean_row_cosine(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let mut s = 0.0;
    for j in 0..a.nrows() {
        let (x, y) = (a.row(j), b.row(j));
        s += x.dot(&y) / (x.norm() * y.norm());
    }
    s / a.nrows() as f64
}

/// H_d / d, the expected reciprocal rank of a uniformly random ranking.
pub fn harmonic_baseline(d: usize) -> f64 {
    (1..=d).map(|k| 1.0 / k as f64).sum::<f64>() / d as f64
}

/// Random scores with deliberate ties (values rounded to a coarse grid).
pub fn random_scores(r: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<bool>) {
    loop {
        let scores: Vec<f64> = (0..n).map(|_| (r.random_range(-5.0f64..5.0) * 4.0).round() / 4.0).collect();
        let rate = r.random_range(0.05..0.6);
        let labels: Vec<bool> = (0..n).map(|_| r.random::<f64>() < rate).collect();
        if labels.iter().any(|&l| l) && labels.iter().any(|&l| !l) {
            return (scores, labels);
        }
    }
}
