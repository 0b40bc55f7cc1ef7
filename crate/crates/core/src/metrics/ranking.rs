use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BinaryLabeledScores {
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
}

impl BinaryLabeledScores {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::DimensionMismatch { expected: scores.len(), got: labels.len() });
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::ParseError("scores must be finite".into()));
        }
        Ok(BinaryLabeledScores { scores, labels })
    }

    pub fn n_positive(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    pub fn n_negative(&self) -> usize {
        self.labels.len() - self.n_positive()
    }
}

/// Area under the ROC curve as the normalized Mann–Whitney U statistic;
/// tied positive/negative pairs count one half.
pub fn auroc(x: &BinaryLabeledScores) -> Result<f64> {
    let (n_pos, n_neg) = (x.n_positive(), x.n_negative());
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Undefined(format!("AUROC needs both classes (pos={n_pos}, neg={n_neg})")));
    }
    let mut idx: Vec<usize> = (0..x.scores.len()).collect();
    idx.sort_by(|&a, &b| crate::cmp_score(x.scores[a], x.scores[b]));
    // Sum of 1-based mid-ranks of the positives.
    let mut rank_sum = 0.0f64;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x.scores[idx[j + 1]] == x.scores[idx[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        let pos_in_group = idx[i..=j].iter().filter(|&&k| x.labels[k]).count();
        rank_sum += mid * pos_in_group as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    let u = rank_sum - p * (p + 1.0) / 2.0;
    Ok(u / (p * n))
}

/// Step-interpolated average precision, Σ_k (R_k − R_{k−1}) P_k, over the
/// list sorted by descending score with ties in ascending sample order.
pub fn average_precision(x: &BinaryLabeledScores) -> Result<f64> {
    let n_pos = x.n_positive();
    if n_pos == 0 {
        return Err(Error::Undefined("average precision needs at least one positive".into()));
    }
    let mut idx: Vec<usize> = (0..x.scores.len()).collect();
    idx.sort_by(|&a, &b| crate::cmp_score(x.scores[b], x.scores[a]).then(a.cmp(&b)));
    let mut tp = 0usize;
    let mut sum = 0.0f64;
    for (k, &i) in idx.iter().enumerate() {
        if x.labels[i] {
            tp += 1;
            sum += tp as f64 / (k + 1) as f64;
        }
    }
    Ok(sum / n_pos as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bls(s: &[f64], l: &[u8]) -> BinaryLabeledScores {
        BinaryLabeledScores::new(s.to_vec(), l.iter().map(|&v| v == 1).collect()).unwrap()
    }

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&bls(&[3.0, 2.0, 1.0], &[1, 0, 0])).unwrap(), 1.0);
        assert_eq!(auroc(&bls(&[1.0, 1.0, 1.0, 1.0], &[1, 0, 1, 0])).unwrap(), 0.5);
        assert_eq!(auroc(&bls(&[1.0, 2.0, 3.0], &[1, 0, 0])).unwrap(), 0.0);
        assert!(matches!(auroc(&bls(&[1.0, 2.0], &[1, 1])), Err(Error::Undefined(_))));
    }

    #[test]
    fn ap_examples() {
        assert_eq!(average_precision(&bls(&[4.0, 3.0, 2.0, 1.0], &[1, 1, 0, 0])).unwrap(), 1.0);
        for n in 1..20 {
            let s: Vec<f64> = (0..n).map(|i| (n - i) as f64).collect();
            let mut l = vec![0u8; n];
            l[n - 1] = 1;
            let ap = average_precision(&bls(&s, &l)).unwrap();
            assert!((ap - 1.0 / n as f64).abs() < 1e-15);
        }
        assert!(matches!(average_precision(&bls(&[1.0], &[0])), Err(Error::Undefined(_))));
    }

    #[test]
    fn ap_ties_follow_sample_order() {
        // All tied: order is the sample order, positives at ranks 2 and 3.
        let ap = average_precision(&bls(&[0.0, 0.0, 0.0], &[0, 1, 1])).unwrap();
        assert!((ap - (0.5 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
    }
}
