//! Synthetic paired latent spaces with a planted semi-orthogonal map.
//!
//! Randomness comes from ChaCha8 (a counter-based stream cipher) seeded with
//! `seed`, one stream per component: 0 = atlas codes, 1 = planted map,
//! 2 = subject noise, 3 = probes, 4 = target selection. Instances are
//! therefore reproducible bit-for-bit from the config alone.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::align::{FitMeta, Method, TranslationMatrix};
use crate::error::{Error, Result};
use crate::metrics::sample_features;
use crate::tensorstore::{pair, save_matrix, write_json, ActivationMatrix, MatrixMeta, PairedActivations, Pooling};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_samples: usize,
    pub d_c: usize,
    pub d_s: usize,
    /// Expected fraction of active atlas features per sample.
    pub sparsity: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ConfigInvalid(m));
        if self.n_samples == 0 || self.d_s == 0 || self.d_c == 0 {
            return bad("n_samples, d_s and d_c must be positive".into());
        }
        if self.d_s > self.d_c {
            return bad(format!("d_s={} must not exceed d_c={}", self.d_s, self.d_c));
        }
        if !(self.sparsity > 0.0 && self.sparsity <= 1.0) {
            return bad(format!("sparsity {} outside (0, 1]", self.sparsity));
        }
        if self.sparsity * (self.d_c as f64) < 1.0 {
            return bad(format!("sparsity * d_c = {} < 1", self.sparsity * self.d_c as f64));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma {} must be finite and >= 0", self.noise_sigma));
        }
        Ok(())
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(stream);
        r
    }

    /// 16-hex-digit digest identifying the generated "dataset".
    pub fn dataset_hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SynthInstance {
    pub config: SynthConfig,
    pub pair: PairedActivations,
    /// Planted map R (d_s × d_c) with R Rᵀ = I.
    pub t_true: TranslationMatrix,
    /// Active atlas features of each sample.
    pub active_support: Vec<Vec<usize>>,
}

fn meta(cfg: &SynthConfig, model: &str, d: usize) -> MatrixMeta {
    MatrixMeta {
        model_id: model.into(),
        layer: 0,
        hook_point: "synthetic".into(),
        pooling: Pooling::Max,
        dataset_id: format!("synth-seed-{}", cfg.seed),
        dataset_hash: cfg.dataset_hash(),
        n_samples: cfg.n_samples,
        n_features: d,
    }
}

fn half_normal(rng: &mut ChaCha8Rng) -> f64 {
    let g: f64 = rng.sample(StandardNormal);
    g.abs()
}

/// Semi-orthogonal d_s × d_c matrix from the QR factorization of a Gaussian
/// d_c × d_s matrix.
pub(crate) fn planted_map(cfg: &SynthConfig) -> DMatrix<f64> {
    let mut rng = cfg.rng(1);
    let g = DMatrix::<f64>::from_fn(cfg.d_c, cfg.d_s, |_, _| rng.sample(StandardNormal));
    g.qr().q().transpose()
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthInstance> {
    cfg.validate()?;
    let (n, d_c, d_s) = (cfg.n_samples, cfg.d_c, cfg.d_s);

    let mut rng = cfg.rng(0);
    let mut codes = vec![0.0f32; n * d_c];
    let mut active_support = Vec::with_capacity(n);
    for i in 0..n {
        let mut support = Vec::new();
        for k in 0..d_c {
            if rng.random::<f64>() < cfg.sparsity {
                codes[i * d_c + k] = half_normal(&mut rng) as f32;
                support.push(k);
            }
        }
        active_support.push(support);
    }

    let r = planted_map(cfg);
    let mut noise_rng = cfg.rng(2);
    let mut subject = vec![0.0f32; n * d_s];
    for i in 0..n {
        let row = &codes[i * d_c..(i + 1) * d_c];
        for j in 0..d_s {
            let mut v = 0.0f64;
            for &k in &active_support[i] {
                v += r[(j, k)] * row[k] as f64;
            }
            if cfg.noise_sigma > 0.0 {
                let g: f64 = noise_rng.sample(StandardNormal);
                v += cfg.noise_sigma * g;
            }
            subject[i * d_s + j] = v as f32;
        }
    }

    let atlas = ActivationMatrix::new(codes, n, d_c, meta(cfg, "synth-atlas", d_c))?;
    let subject = ActivationMatrix::new(subject, n, d_s, meta(cfg, "synth-subject", d_s))?;
    let pair = pair(subject, atlas, true)?;
    let fit_meta = FitMeta::for_pair(&pair).param("planted", true).param("seed", cfg.seed);
    let t_true = TranslationMatrix::new(r, Method::External, fit_meta)?;
    Ok(SynthInstance { config: cfg.clone(), pair, t_true, active_support })
}

/// Atlas-space probe activations for retrieval evaluation.
#[derive(Debug, Clone)]
pub struct RetrievalProbes {
    /// `n_targets * probes_per_target` rows, grouped by target.
    pub probes: ActivationMatrix,
    /// Target subject feature of each probe row.
    pub probe_targets: Vec<usize>,
    /// Distinct targets, ascending.
    pub targets: Vec<usize>,
}

/// Generates an instance plus probes for `n_targets` subject features. A
/// probe for target j activates the atlas features with positive weight in
/// row j of the planted map, each with magnitude R[j, k] · |g|, g ~ N(0, 1).
pub fn retrieval_instance(
    cfg: &SynthConfig,
    n_targets: usize,
    probes_per_target: usize,
) -> Result<(SynthInstance, RetrievalProbes)> {
    if n_targets == 0 || n_targets > cfg.d_s {
        return Err(Error::ConfigInvalid(format!("n_targets={n_targets} must be in 1..={}", cfg.d_s)));
    }
    if probes_per_target == 0 {
        return Err(Error::ConfigInvalid("probes_per_target must be >= 1".into()));
    }
    let inst = generate(cfg)?;
    let targets = {
        let mut rng = cfg.rng(4);
        let seed: u64 = rng.random();
        sample_features(cfg.d_s, n_targets, seed)
    };
    let r = &inst.t_true.data;
    let mut rng = cfg.rng(3);
    let rows = n_targets * probes_per_target;
    let mut data = vec![0.0f32; rows * cfg.d_c];
    let mut probe_targets = Vec::with_capacity(rows);
    for (t, &j) in targets.iter().enumerate() {
        for p in 0..probes_per_target {
            let row = t * probes_per_target + p;
            for k in 0..cfg.d_c {
                let w = r[(j, k)];
                if w > 0.0 {
                    data[row * cfg.d_c + k] = (w * half_normal(&mut rng)) as f32;
                }
            }
            probe_targets.push(j);
        }
    }
    let probe_meta = MatrixMeta {
        dataset_id: format!("synth-probes-seed-{}", cfg.seed),
        n_samples: rows,
        ..meta(cfg, "synth-atlas", cfg.d_c)
    };
    let probes = ActivationMatrix::new(data, rows, cfg.d_c, probe_meta)?;
    Ok((inst, RetrievalProbes { probes, probe_targets, targets }))
}

impl SynthInstance {
    /// Writes `subject.npy`, `atlas.npy`, `t_true.npy` (each with sidecar)
    /// and `config.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        save_matrix(&self.pair.subject, &dir.join("subject.npy"))?;
        save_matrix(&self.pair.atlas, &dir.join("atlas.npy"))?;
        self.t_true.save(&dir.join("t_true.npy"))?;
        write_json(&dir.join("config.json"), &self.config)
    }
}

impl RetrievalProbes {
    /// Writes `probes.npy` (+ sidecar) and `probe_targets.csv` (`row,target`).
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        save_matrix(&self.probes, &dir.join("probes.npy"))?;
        write_probe_targets(&dir.join("probe_targets.csv"), &self.probe_targets)
    }
}

pub fn write_probe_targets(path: &Path, targets: &[usize]) -> Result<()> {
    let mut text = String::from("row,target\n");
    for (row, t) in targets.iter().enumerate() {
        text.push_str(&format!("{row},{t}\n"));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads a `row,target` CSV; rows must be exactly 0..n in order.
pub fn read_probe_targets(path: &Path) -> Result<Vec<usize>> {
    #[derive(Deserialize)]
    struct Rec {
        row: usize,
        target: usize,
    }
    let mut rdr = csv::Reader::from_path(path).map_err(|e| crate::mapping::csv_err(path, e))?;
    let mut out = Vec::new();
    for rec in rdr.deserialize::<Rec>() {
        let rec = rec.map_err(|e| crate::mapping::csv_err(path, e))?;
        if rec.row != out.len() {
            return Err(Error::ParseError(format!("probe_targets rows must be 0..n in order, got row {}", rec.row)));
        }
        out.push(rec.target);
    }
    Ok(out)
}
