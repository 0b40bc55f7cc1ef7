use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mapping::csv_err;
use crate::metrics::mean_std;
use crate::tensorstore::ActivationMatrix;

/// Judge label: 0 = concept absent, 1 = vague/partial (excluded from rates),
/// 2 = concept present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rating {
    pub query_id: String,
    pub lambda: f64,
    pub prompt_id: String,
    pub label: u8,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RatingsTable {
    pub records: Vec<Rating>,
}

impl RatingsTable {
    pub fn new(records: Vec<Rating>) -> Result<Self> {
        for r in &records {
            if r.label > 2 {
                return Err(Error::ParseError(format!("label {} outside {{0, 1, 2}}", r.label)));
            }
            if !r.lambda.is_finite() {
                return Err(Error::ParseError("lambda must be finite".into()));
            }
        }
        Ok(RatingsTable { records })
    }

    /// CSV with header `query_id,lambda,prompt_id,label`.
    pub fn load_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
        let records =
            rdr.deserialize::<Rating>().map(|r| r.map_err(|e| csv_err(path, e))).collect::<Result<Vec<_>>>()?;
        RatingsTable::new(records)
    }

    pub fn query_ids(&self) -> Vec<String> {
        let ids: BTreeSet<&str> = self.records.iter().map(|r| r.query_id.as_str()).collect();
        ids.into_iter().map(String::from).collect()
    }

    /// Share of label 2 among labels {0, 2} per distinct lambda, ascending
    /// by lambda. Lambdas with no decisive label are omitted.
    pub fn rates(&self, query_id: &str) -> Vec<(f64, f64)> {
        self.counts(query_id).into_iter().map(|(l, p, d)| (l, p as f64 / d as f64)).collect()
    }

    /// `(lambda, #label 2, #label in {0, 2})` per distinct lambda.
    fn counts(&self, query_id: &str) -> Vec<(f64, usize, usize)> {
        let mut lambdas: Vec<f64> = self.records.iter().filter(|r| r.query_id == query_id).map(|r| r.lambda).collect();
        lambdas.sort_by(f64::total_cmp);
        lambdas.dedup();
        lambdas
            .into_iter()
            .filter_map(|l| {
                let (mut present, mut decisive) = (0usize, 0usize);
                for r in self.records.iter().filter(|r| r.query_id == query_id && r.lambda == l) {
                    match r.label {
                        2 => {
                            present += 1;
                            decisive += 1;
                        }
                        0 => decisive += 1,
                        _ => {}
                    }
                }
                (decisive > 0).then_some((l, present, decisive))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FaithfulnessOptions {
    /// Only consider λ > 0 when taking the maximum.
    pub positive_only: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaithfulnessResult {
    pub query_id: String,
    pub faithfulness: f64,
    pub baseline_rate: f64,
    pub best_lambda: f64,
}

/// max_λ≠0 (r_λ − r_0) / (1 − r_0) × 100.
pub fn faithfulness(r: &RatingsTable, query_id: &str, opts: FaithfulnessOptions) -> Result<FaithfulnessResult> {
    let counts = r.counts(query_id);
    let has_zero = r.records.iter().any(|x| x.query_id == query_id && x.lambda == 0.0);
    let (p0, n0) = match counts.iter().find(|(l, _, _)| *l == 0.0) {
        Some(&(_, p, n)) => (p, n),
        None if has_zero => return Err(Error::Undefined(format!("baseline of {query_id} has only label-1 ratings"))),
        None => return Err(Error::MissingBaseline(query_id.into())),
    };
    if p0 == n0 {
        return Err(Error::SaturatedBaseline(query_id.into()));
    }
    // (p/n − p0/n0) / (1 − p0/n0) = (p·n0 − p0·n) / (n·(n0 − p0)), kept in
    // integers so that hand-checkable cases come out exact.
    let best = counts
        .iter()
        .filter(|(l, _, _)| *l != 0.0 && (!opts.positive_only || *l > 0.0))
        .map(|&(l, p, n)| {
            let num = (p * n0) as f64 - (p0 * n) as f64;
            let den = (n * (n0 - p0)) as f64;
            (l, num / den * 100.0)
        })
        .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.total_cmp(&a.0)))
        .ok_or_else(|| Error::Undefined(format!("{query_id} has no steered ratings")))?;
    Ok(FaithfulnessResult {
        query_id: query_id.into(),
        faithfulness: best.1,
        baseline_rate: p0 as f64 / n0 as f64,
        best_lambda: best.0,
    })
}

/// Faithfulness for every query in the table, plus the mean over queries.
pub fn faithfulness_all(r: &RatingsTable, opts: FaithfulnessOptions) -> Result<(Vec<FaithfulnessResult>, f64)> {
    let results = r.query_ids().iter().map(|q| faithfulness(r, q, opts)).collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = results.iter().map(|f| f.faithfulness).collect();
    Ok((results, mean_std(&values).0))
}

pub struct ActivationDeltaInput<'a> {
    pub baseline: &'a ActivationMatrix,
    pub steered: &'a ActivationMatrix,
    pub query_support: &'a [usize],
}

/// Mean over the query's atlas features of the change in column mean.
pub fn activation_delta(x: &ActivationDeltaInput<'_>) -> Result<f64> {
    let d = x.baseline.n_cols();
    if x.steered.n_cols() != d {
        return Err(Error::WidthMismatch { expected: d, got: x.steered.n_cols() });
    }
    if x.query_support.is_empty() {
        return Err(Error::Undefined("activation delta needs a nonempty query support".into()));
    }
    if let Some(&bad) = x.query_support.iter().find(|&&i| i >= d) {
        return Err(Error::IndexOutOfRange { index: bad, width: d });
    }
    let mb = x.baseline.column_means();
    let ms = x.steered.column_means();
    let total: f64 = x.query_support.iter().map(|&k| ms[k] - mb[k]).sum();
    Ok(total / x.query_support.len() as f64)
}

/// One (query, layer) activation-change measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaCell {
    pub query_id: String,
    pub layer: i64,
    pub delta: f64,
    /// Steered generations were byte-identical to the baseline.
    pub no_effect: bool,
}

/// True when every steered generation equals its baseline counterpart.
pub fn no_effect<S: AsRef<[u8]>>(baseline: &[S], steered: &[S]) -> bool {
    baseline.len() == steered.len() && baseline.iter().zip(steered).all(|(a, b)| a.as_ref() == b.as_ref())
}

/// Mean Δa over cells, optionally dropping cells flagged as no-effect.
pub fn summarize_deltas(cells: &[DeltaCell], drop_no_effect: bool) -> Option<f64> {
    let kept: Vec<f64> = cells.iter().filter(|c| !(drop_no_effect && c.no_effect)).map(|c| c.delta).collect();
    (!kept.is_empty()).then(|| mean_std(&kept).0)
}
