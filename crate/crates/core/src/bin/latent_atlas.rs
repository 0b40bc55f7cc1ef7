//! `latent-atlas`: fit translations, build concept queries, identify and
//! steer, evaluate.
//!
//! Exit codes: 0 success, 1 numerical or validation failure, 2 usage error.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use latent_atlas::align::{
    self, row_normalize, FitOptions, Method, MethodConfig, ProcrustesOptions, TranslationMatrix, DEFAULT_EPS,
    DEFAULT_LENS_K, DEFAULT_RCOND,
};
use latent_atlas::manifest::RunManifest;
use latent_atlas::mapping::{map_query, rank_features, ScoreMode};
use latent_atlas::metrics::{
    activation_delta, faithfulness_all, predicted_probabilities, reciprocal_ranks, retrieval_from_probes,
    sample_features, translation_quality, ActivationDeltaInput, FaithfulnessOptions, QualityOptions, RatingsTable,
};
use latent_atlas::npy;
use latent_atlas::par::{Exec, DEFAULT_BLOCK_ROWS};
use latent_atlas::query::{
    query_from_activations, query_from_description_similarity, query_from_indices, EmbeddingTable, Selection, Weighting,
};
use latent_atlas::steering::{build_bundle, DEFAULT_LAMBDAS};
use latent_atlas::synth::{generate, read_probe_targets, retrieval_instance, SynthConfig};
use latent_atlas::tensorstore::{load_catalog, load_matrix, pair};
use latent_atlas::{ConceptQuery, Error, FORMAT_VERSION};

const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (format version 1)");

#[derive(Parser)]
#[command(name = "latent-atlas", version = VERSION, about = "Align a latent space to a labeled concept atlas")]
struct Cli {
    /// Run single-threaded. Results are bit-identical to the parallel path.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit a translation matrix T (d_s × d_c) from paired activations.
    Fit(FitArgs),
    /// Build a concept query in atlas space.
    Query(QueryArgs),
    /// Rank subject features by their similarity to a concept query.
    Identify(IdentifyArgs),
    /// Export per-layer steering vectors for a concept query.
    Steer(SteerArgs),
    /// Evaluation protocols.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Generate a synthetic instance with a planted semi-orthogonal map.
    Synth(SynthArgs),
}

#[derive(Args)]
struct FitArgs {
    subject: PathBuf,
    atlas: PathBuf,
    /// covariance, correlation, linear_regression, orthogonal_procrustes or semantic_lens.
    #[arg(long, value_parser = parse_method)]
    method: Method,
    /// Samples per subject feature for semantic_lens [default: 64].
    #[arg(long)]
    k: Option<usize>,
    /// Ridge penalty for linear_regression.
    #[arg(long, default_value_t = 0.0)]
    ridge: f64,
    /// Relative eigenvalue cutoff of the regression pseudo-inverse.
    #[arg(long, default_value_t = DEFAULT_RCOND)]
    rcond: f64,
    /// Standard deviations below this give zero correlation.
    #[arg(long, default_value_t = DEFAULT_EPS)]
    eps: f64,
    /// Skip per-sample L2 normalization before Procrustes.
    #[arg(long)]
    no_row_norm: bool,
    /// Iteration cap of the Procrustes refinement (used when d_s < d_c).
    #[arg(long, default_value_t = ProcrustesOptions::default().max_iter)]
    max_iter: usize,
    /// Convergence tolerance of the Procrustes refinement.
    #[arg(long, default_value_t = ProcrustesOptions::default().tol)]
    tol: f64,
    /// Sample rows per accumulation block.
    #[arg(long, default_value_t = DEFAULT_BLOCK_ROWS)]
    block_rows: usize,
    /// Fail instead of warning when the dataset hashes differ.
    #[arg(long)]
    strict: bool,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("selector").required(true).multiple(false))]
struct QueryArgs {
    /// Comma-separated atlas indices, each optionally weighted as `idx:w`.
    #[arg(long, group = "selector", requires = "d_c")]
    indices: Option<String>,
    /// Query embedding and description-embedding table (`table.index.jsonl` alongside).
    #[arg(long, group = "selector", num_args = 2, value_names = ["QUERY", "TABLE"], requires = "d_c")]
    embed: Option<Vec<PathBuf>>,
    /// Atlas activations of positive examples, optionally followed by negatives.
    #[arg(long, group = "selector", num_args = 1..=2, value_names = ["POS", "NEG"])]
    activations: Option<Vec<PathBuf>>,
    /// Atlas width.
    #[arg(long)]
    d_c: Option<usize>,
    /// Number of closest descriptions to select [default: 10 unless --threshold].
    #[arg(long, conflicts_with = "threshold")]
    top_k: Option<usize>,
    /// Select every description with cosine similarity at least this.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, value_enum, default_value_t = WeightingArg::Binary)]
    weighting: WeightingArg,
    #[arg(long, default_value = "")]
    atlas_id: String,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightingArg {
    Binary,
    Similarity,
}

#[derive(Args)]
struct IdentifyArgs {
    translation: PathBuf,
    query: PathBuf,
    #[arg(long, default_value_t = 10)]
    top_n: usize,
    /// Subject feature descriptions (JSONL) to attach to the ranking.
    #[arg(long)]
    catalog: Option<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct SteerArgs {
    query: PathBuf,
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    layers: Vec<i64>,
    /// One translation matrix per layer, in the order of --layers.
    #[arg(long, value_delimiter = ',', required = true)]
    translations: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = DEFAULT_LAMBDAS)]
    lambdas: Vec<f64>,
    #[arg(long)]
    bundle_id: Option<String>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Subcommand)]
enum EvalCmd {
    /// AUROC/AP of subject-space scores against atlas-feature labels.
    Translation(EvalTranslationArgs),
    /// MRR/MPP of probe queries against their target subject features.
    Retrieval(EvalRetrievalArgs),
    /// Faithfulness of steering from rated generations.
    Steering(EvalSteeringArgs),
    /// Mean change of the query's atlas activations under steering.
    Delta(EvalDeltaArgs),
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("which").required(true).multiple(false))]
struct EvalTranslationArgs {
    translation: PathBuf,
    subject: PathBuf,
    atlas: PathBuf,
    /// Comma-separated atlas features to evaluate.
    #[arg(long, group = "which")]
    features: Option<String>,
    /// Evaluate this many atlas features drawn at random.
    #[arg(long, group = "which")]
    n_features: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// A sample is positive for feature k when its atlas activation exceeds this.
    #[arg(long, default_value_t = 0.0)]
    theta: f64,
    #[arg(long, value_enum, default_value_t = ScoreModeArg::Cosine)]
    score_mode: ScoreModeArg,
    #[arg(long)]
    strict: bool,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScoreModeArg {
    Cosine,
    Dot,
}

#[derive(Args)]
struct EvalRetrievalArgs {
    translation: PathBuf,
    /// Atlas-space probe activations.
    probes: PathBuf,
    /// CSV `row,target` giving the target subject feature of each probe.
    probe_targets: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct EvalSteeringArgs {
    /// CSV `query_id,lambda,prompt_id,label` with labels 0, 1 or 2.
    ratings: PathBuf,
    /// Only take the maximum over positive lambdas.
    #[arg(long)]
    positive_only: bool,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct EvalDeltaArgs {
    /// Atlas activations without steering.
    baseline: PathBuf,
    /// Atlas activations with steering.
    steered: PathBuf,
    query: PathBuf,
    #[arg(long, default_value = "")]
    query_id: String,
    #[arg(long, default_value_t = 0)]
    layer: i64,
    /// Baseline generations, one per line.
    #[arg(long, requires = "steered_texts")]
    baseline_texts: Option<PathBuf>,
    /// Steered generations, one per line.
    #[arg(long, requires = "baseline_texts")]
    steered_texts: Option<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 5000)]
    n_samples: usize,
    #[arg(long, default_value_t = 64)]
    d_c: usize,
    #[arg(long, default_value_t = 32)]
    d_s: usize,
    #[arg(long, default_value_t = 0.1)]
    sparsity: f64,
    #[arg(long, default_value_t = 0.01)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write retrieval probes, this many per target.
    #[arg(long)]
    probes_per_target: Option<usize>,
    /// Number of probe targets [default: d_s].
    #[arg(long, requires = "probes_per_target")]
    n_targets: Option<usize>,
    #[arg(short, long)]
    output: PathBuf,
}

enum Failure {
    Usage(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type CmdResult = Result<(), Failure>;

fn parse_method(s: &str) -> Result<Method, String> {
    match s.parse::<Method>() {
        Ok(Method::External) | Err(_) => {
            Err(format!("expected one of {}", Method::FITTED.iter().map(|m| m.name()).collect::<Vec<_>>().join(", ")))
        }
        Ok(m) => Ok(m),
    }
}

fn exec(cli_sequential: bool) -> Exec {
    if cli_sequential {
        Exec::Sequential
    } else {
        Exec::Parallel
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn write_manifest(m: &RunManifest, output: &Path) -> CmdResult {
    let path = m.write_for(output)?;
    info!("wrote {}", path.display());
    Ok(())
}

fn cmd_fit(a: FitArgs, ex: Exec) -> CmdResult {
    let mut m = RunManifest::new("fit");
    let subject = load_matrix(&a.subject)?;
    let atlas = load_matrix(&a.atlas)?;
    m.input(&a.subject)?.input(&a.atlas)?;
    let p = pair(subject, atlas, a.strict)?;
    for w in &p.warnings {
        warn!("{w}");
        m.warn(w.clone());
    }
    let config = match a.method {
        Method::Covariance => MethodConfig::Covariance,
        Method::Correlation => MethodConfig::Correlation { eps: a.eps },
        Method::LinearRegression => MethodConfig::LinearRegression { ridge: a.ridge, rcond: a.rcond },
        Method::OrthogonalProcrustes => MethodConfig::OrthogonalProcrustes(ProcrustesOptions {
            normalize_rows: !a.no_row_norm,
            max_iter: a.max_iter,
            tol: a.tol,
        }),
        Method::SemanticLens => {
            let k = a.k.unwrap_or_else(|| {
                info!("--k not given, using k={DEFAULT_LENS_K}");
                DEFAULT_LENS_K
            });
            MethodConfig::SemanticLens { k }
        }
        Method::External => return Err(usage("external is not a fitting method")),
    };
    let opts = FitOptions { block_rows: a.block_rows, exec: ex };
    let t = align::fit(&p, &config, &opts)?;
    t.save(&a.output)?;
    m.param("method", a.method.name())
        .param("k", a.k.unwrap_or(DEFAULT_LENS_K))
        .param("ridge", a.ridge)
        .param("rcond", a.rcond)
        .param("eps", a.eps)
        .param("normalize_rows", !a.no_row_norm)
        .param("max_iter", a.max_iter)
        .param("tol", a.tol)
        .param("block_rows", a.block_rows)
        .param("strict", a.strict)
        .param("output", a.output.display().to_string());
    for (k, v) in &t.fit_meta.method_params {
        m.param(&format!("fit.{k}"), v.clone());
    }
    write_manifest(&m, &a.output)
}

fn parse_indices(text: &str) -> Result<Vec<(usize, f64)>, Failure> {
    let mut out = Vec::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (idx, w) = match item.split_once(':') {
            Some((i, w)) => (i, w.parse::<f64>().map_err(|_| usage(format!("bad weight in {item:?}")))?),
            None => (item, 1.0),
        };
        let idx = idx.trim().parse::<usize>().map_err(|_| usage(format!("bad index in {item:?}")))?;
        out.push((idx, w));
    }
    if out.is_empty() {
        return Err(usage("--indices is empty"));
    }
    Ok(out)
}

fn cmd_query(a: QueryArgs) -> CmdResult {
    let mut m = RunManifest::new("query");
    let mut q: ConceptQuery = if let Some(text) = &a.indices {
        let d_c = a.d_c.ok_or_else(|| usage("--indices needs --d-c"))?;
        m.param("indices", text.clone()).param("d_c", d_c);
        query_from_indices(&parse_indices(text)?, d_c)?
    } else if let Some(paths) = &a.embed {
        let d_c = a.d_c.ok_or_else(|| usage("--embed needs --d-c"))?;
        let (q_path, table_path) = (&paths[0], &paths[1]);
        let (shape, emb) = npy::read_f64(q_path)?;
        if shape.iter().filter(|&&s| s != 1).count() > 1 {
            return Err(usage("query embedding must be a single vector"));
        }
        let table = EmbeddingTable::load(table_path, d_c)?;
        m.input(q_path)?.input(table_path)?;
        let select = match (a.top_k, a.threshold) {
            (_, Some(t)) => Selection::Threshold(t),
            (Some(k), None) => Selection::TopK(k),
            (None, None) => {
                info!("neither --top-k nor --threshold given, using top-k 10");
                Selection::TopK(10)
            }
        };
        let weighting = match a.weighting {
            WeightingArg::Binary => Weighting::Binary,
            WeightingArg::Similarity => Weighting::Similarity,
        };
        match select {
            Selection::TopK(k) => m.param("top_k", k),
            Selection::Threshold(t) => m.param("threshold", t),
        };
        m.param("weighting", if weighting == Weighting::Binary { "binary" } else { "similarity" }).param("d_c", d_c);
        query_from_description_similarity(&emb, &table, select, weighting, d_c)?
    } else if let Some(paths) = &a.activations {
        let pos = load_matrix(&paths[0])?;
        m.input(&paths[0])?;
        let neg = match paths.get(1) {
            Some(p) => {
                m.input(p)?;
                Some(load_matrix(p)?)
            }
            None => None,
        };
        query_from_activations(&pos, neg.as_ref())?
    } else {
        return Err(usage("one of --indices, --embed or --activations is required"));
    };
    q.atlas_id = a.atlas_id.clone();
    m.param("atlas_id", a.atlas_id).param("output", a.output.display().to_string());
    q.save(&a.output)?;
    write_manifest(&m, &a.output)
}

fn cmd_identify(a: IdentifyArgs) -> CmdResult {
    let mut m = RunManifest::new("identify");
    let t = TranslationMatrix::load(&a.translation)?;
    let q = ConceptQuery::load(&a.query)?;
    m.input(&a.translation)?.input(&a.query)?;
    let catalog = match &a.catalog {
        Some(p) => {
            m.input(p)?;
            Some(load_catalog(p, Some(t.d_s()))?)
        }
        None => None,
    };
    let s = map_query(&row_normalize(&t), &q)?;
    if a.top_n > s.len() {
        let msg = format!("--top-n {} exceeds d_s={}, clamped", a.top_n, s.len());
        warn!("{msg}");
        m.warn(msg);
    }
    let ranked = rank_features(&s, a.top_n);
    ranked.write_csv(&a.output, catalog.as_ref())?;
    m.param("top_n", a.top_n).param("output", a.output.display().to_string());
    write_manifest(&m, &a.output)
}

fn cmd_steer(a: SteerArgs) -> CmdResult {
    if a.layers.len() != a.translations.len() {
        return Err(usage(format!("{} layers but {} translation files", a.layers.len(), a.translations.len())));
    }
    let mut m = RunManifest::new("steer");
    let q = ConceptQuery::load(&a.query)?;
    m.input(&a.query)?;
    let mut ts = BTreeMap::new();
    for (&layer, path) in a.layers.iter().zip(&a.translations) {
        let t = TranslationMatrix::load(path)?;
        m.input(path)?;
        if ts.insert(layer, row_normalize(&t)).is_some() {
            return Err(usage(format!("layer {layer} given twice")));
        }
    }
    let bundle_id = a.bundle_id.clone().unwrap_or_else(|| {
        a.output.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "bundle".into())
    });
    let bundle = build_bundle(bundle_id.clone(), &q, a.query.display().to_string(), &ts, &a.lambdas)?;
    if !bundle.has_baseline() {
        let msg = "lambda schedule has no 0; faithfulness needs an unsteered baseline";
        warn!("{msg}");
        m.warn(msg);
    }
    bundle.save(&a.output)?;
    m.param("layers", a.layers.clone())
        .param("lambdas", a.lambdas.clone())
        .param("bundle_id", bundle_id)
        .param("output", a.output.display().to_string());
    write_manifest(&m, &a.output)
}

fn parse_feature_list(s: &str) -> Result<Vec<usize>, Failure> {
    let v = s
        .split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| x.parse::<usize>().map_err(|_| usage(format!("bad feature index {x:?}"))))
        .collect::<Result<Vec<_>, _>>()?;
    if v.is_empty() {
        return Err(usage("feature list is empty"));
    }
    Ok(v)
}

struct Csv(String);

impl Csv {
    fn new(header: &str) -> Self {
        Csv(format!("{header}\n"))
    }

    fn row(&mut self, cells: &[String]) {
        self.0.push_str(&cells.join(","));
        self.0.push('\n');
    }

    fn save(&self, path: &Path) -> Result<(), Failure> {
        fs::write(path, &self.0).map_err(|e| Failure::Lib(Error::IoFailure { path: path.into(), source: e }))
    }
}

fn num(v: f64) -> String {
    format!("{v:.17e}")
}

fn cmd_eval_translation(a: EvalTranslationArgs, ex: Exec) -> CmdResult {
    let mut m = RunManifest::new("eval translation");
    let t = TranslationMatrix::load(&a.translation)?;
    let subject = load_matrix(&a.subject)?;
    let atlas = load_matrix(&a.atlas)?;
    m.input(&a.translation)?.input(&a.subject)?.input(&a.atlas)?;
    let p = pair(subject, atlas, a.strict)?;
    let features = match (&a.features, a.n_features) {
        (Some(s), _) => parse_feature_list(s)?,
        (None, Some(0)) => return Err(usage("--n-features must be positive")),
        (None, Some(n)) => sample_features(p.d_c(), n, a.seed),
        (None, None) => return Err(usage("one of --features or --n-features is required")),
    };
    let mode = match a.score_mode {
        ScoreModeArg::Cosine => ScoreMode::Cosine,
        ScoreModeArg::Dot => ScoreMode::Dot,
    };
    let opts = QualityOptions { theta: a.theta, mode, exec: ex };
    let report = translation_quality(&row_normalize(&t), &p, &features, &opts)?;
    let mut csv = Csv::new("feature,n_positive,auroc,ap");
    for f in &report.features {
        csv.row(&[f.feature.to_string(), f.n_positive.to_string(), num(f.auroc), num(f.ap)]);
    }
    csv.row(&["mean".into(), report.features.len().to_string(), num(report.mean_auroc), num(report.mean_ap)]);
    csv.save(&a.output)?;
    for (k, why) in &report.skipped {
        let msg = format!("feature {k} skipped: {why}");
        warn!("{msg}");
        m.warn(msg);
    }
    m.param("features", features)
        .param("seed", a.seed)
        .param("theta", a.theta)
        .param("score_mode", mode.name())
        .param("strict", a.strict)
        .param("output", a.output.display().to_string());
    write_manifest(&m, &a.output)
}

fn cmd_eval_retrieval(a: EvalRetrievalArgs, ex: Exec) -> CmdResult {
    let mut m = RunManifest::new("eval retrieval");
    let t = TranslationMatrix::load(&a.translation)?;
    let probes = load_matrix(&a.probes)?;
    let targets = read_probe_targets(&a.probe_targets)?;
    m.input(&a.translation)?.input(&a.probes)?.input(&a.probe_targets)?;
    let r = retrieval_from_probes(&row_normalize(&t), &probes, &targets)?;
    let rr = reciprocal_ranks(&r, ex);
    let pp = predicted_probabilities(&r, ex);
    let mut csv = Csv::new("target,rr,pp");
    for ((t, rr), pp) in r.target_index.iter().zip(&rr).zip(&pp) {
        csv.row(&[t.to_string(), num(*rr), num(*pp)]);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    csv.row(&["mean".into(), num(mean(&rr)), num(mean(&pp))]);
    csv.save(&a.output)?;
    m.param("n_candidates", r.n_candidates()).param("output", a.output.display().to_string());
    write_manifest(&m, &a.output)
}

fn cmd_eval_steering(a: EvalSteeringArgs) -> CmdResult {
    let mut m = RunManifest::new("eval steering");
    let ratings = RatingsTable::load_csv(&a.ratings)?;
    m.input(&a.ratings)?;
    let (results, mean) = faithfulness_all(&ratings, FaithfulnessOptions { positive_only: a.positive_only })?;
    let mut csv = Csv::new("query_id,baseline_rate,best_lambda,faithfulness");
    for r in &results {
        csv.row(&[r.query_id.clone(), num(r.baseline_rate), num(r.best_lambda), num(r.faithfulness)]);
    }
    csv.row(&["mean".into(), String::new(), String::new(), num(mean)]);
    csv.save(&a.output)?;
    m.param("positive_only", a.positive_only).param("output", a.output.display().to_string());
    write_manifest(&m, &a.output)
}

fn read_lines(path: &Path) -> Result<Vec<String>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Lib(Error::IoFailure { path: path.into(), source: e }))?;
    Ok(text.lines().map(str::to_owned).collect())
}

fn cmd_eval_delta(a: EvalDeltaArgs) -> CmdResult {
    let mut m = RunManifest::new("eval delta");
    let baseline = load_matrix(&a.baseline)?;
    let steered = load_matrix(&a.steered)?;
    let q = ConceptQuery::load(&a.query)?;
    m.input(&a.baseline)?.input(&a.steered)?.input(&a.query)?;
    let support: Vec<usize> = q.support().into_iter().map(|(i, _)| i).collect();
    let delta =
        activation_delta(&ActivationDeltaInput { baseline: &baseline, steered: &steered, query_support: &support })?;
    let no_effect = match (&a.baseline_texts, &a.steered_texts) {
        (Some(b), Some(s)) => {
            m.input(b)?.input(s)?;
            Some(latent_atlas::metrics::no_effect(&read_lines(b)?, &read_lines(s)?))
        }
        _ => None,
    };
    let mut csv = Csv::new("query_id,layer,delta,no_effect");
    csv.row(&[a.query_id.clone(), a.layer.to_string(), num(delta), no_effect.map_or(String::new(), |b| b.to_string())]);
    csv.save(&a.output)?;
    m.param("query_id", a.query_id).param("layer", a.layer).param("output", a.output.display().to_string());
    write_manifest(&m, &a.output)
}

fn cmd_synth(a: SynthArgs) -> CmdResult {
    let cfg = SynthConfig {
        n_samples: a.n_samples,
        d_c: a.d_c,
        d_s: a.d_s,
        sparsity: a.sparsity,
        noise_sigma: a.noise,
        seed: a.seed,
    };
    let mut m = RunManifest::new("synth");
    match a.probes_per_target {
        Some(ppt) => {
            let n_targets = a.n_targets.unwrap_or(a.d_s);
            let (inst, probes) = retrieval_instance(&cfg, n_targets, ppt)?;
            inst.save(&a.output)?;
            probes.save(&a.output)?;
            m.param("probes_per_target", ppt).param("n_targets", n_targets);
        }
        None => generate(&cfg)?.save(&a.output)?,
    }
    m.param("n_samples", a.n_samples)
        .param("d_c", a.d_c)
        .param("d_s", a.d_s)
        .param("sparsity", a.sparsity)
        .param("noise", a.noise)
        .param("seed", a.seed)
        .param("dataset_hash", cfg.dataset_hash())
        .param("output", a.output.display().to_string());
    write_manifest(&m, &a.output)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    debug_assert!(VERSION.ends_with(&format!("format version {FORMAT_VERSION})")));
    let ex = exec(cli.sequential);
    let result = match cli.cmd {
        Cmd::Fit(a) => cmd_fit(a, ex),
        Cmd::Query(a) => cmd_query(a),
        Cmd::Identify(a) => cmd_identify(a),
        Cmd::Steer(a) => cmd_steer(a),
        Cmd::Eval(EvalCmd::Translation(a)) => cmd_eval_translation(a, ex),
        Cmd::Eval(EvalCmd::Retrieval(a)) => cmd_eval_retrieval(a, ex),
        Cmd::Eval(EvalCmd::Steering(a)) => cmd_eval_steering(a),
        Cmd::Eval(EvalCmd::Delta(a)) => cmd_eval_delta(a),
        Cmd::Synth(a) => cmd_synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
