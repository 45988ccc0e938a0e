//! End-to-end orchestration shared by the CLI and the acceptance suite:
//! dataset synthesis, rendering to features, training, held-out evaluation
//! and rendering comparison.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::image::RgbImage;
use crate::imager::{apply_annulus_mask, radial_features, FeatureVector, RenderPlan, SceneConfig};
use crate::metrics::{evaluate_set, psnr, psnr_json, Metrics};
use crate::mlp::{predict_spd, train, Checkpoint, EpochStats, MlpModel, TrainConfig};
use crate::spectral::{ColorResponse, SpectralGrid, Spd};
use crate::synth::{generate_dataset, Seed, SpdGenConfig};

/// Caps rayon parallelism when set to a positive integer.
pub const THREADS_ENV: &str = "SPD_FORGE_THREADS";

/// Runs `f` on a pool sized by [`THREADS_ENV`], or on the global pool when
/// the variable is unset or unparsable.
pub fn with_thread_limit<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    let threads = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()).filter(|n| *n > 0);
    match threads.and_then(|n| rayon::ThreadPoolBuilder::new().num_threads(n).build().ok()) {
        Some(pool) => pool.install(f),
        None => f(),
    }
}

/// Short content hash of a scene, used to key feature caches.
pub fn scene_hash(scene: &SceneConfig) -> String {
    let json = serde_json::to_vec(scene).expect("scene serializes");
    hex::encode(&Sha256::digest(&json)[..8])
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Render, mask and bin for one scene and grid.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    scene: SceneConfig,
    plan: RenderPlan,
}

impl FeatureExtractor {
    pub fn new(scene: &SceneConfig, response: &ColorResponse, grid: &SpectralGrid) -> Result<Self> {
        Ok(FeatureExtractor { scene: scene.clone(), plan: RenderPlan::new(scene, response, grid)? })
    }

    pub fn scene(&self) -> &SceneConfig {
        &self.scene
    }

    pub fn render_masked(&self, spd: &Spd) -> Result<RgbImage> {
        Ok(apply_annulus_mask(&self.plan.render(spd)?, &self.scene))
    }

    pub fn features(&self, spd: &Spd) -> Result<FeatureVector> {
        Ok(radial_features(&self.render_masked(spd)?, &self.scene))
    }

    /// Features for every SPD, computed in parallel, returned in input order.
    pub fn features_all(&self, spds: &[Spd]) -> Result<Vec<FeatureVector>> {
        spds.par_iter().map(|s| self.features(s)).collect()
    }
}

/// PSNR (peak 1, linear RGB) between masked renders of two SPDs.
pub fn render_psnr(extractor: &FeatureExtractor, pred: &Spd, truth: &Spd) -> Result<f64> {
    psnr(&extractor.render_masked(pred)?, &extractor.render_masked(truth)?, 1.0)
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[mid] } else { 0.5 * (v[mid - 1] + v[mid]) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n_spds: usize,
    pub gen_config: SpdGenConfig,
    pub gen_seed: Seed,
    pub grid: SpectralGrid,
    pub scene: SceneConfig,
    pub train: TrainConfig,
    /// Held-out SPDs re-rendered for the PSNR comparison.
    pub n_render_compare: usize,
}

/// Numbers an experiment reports; serialized as the metrics JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentMetrics {
    pub train: Metrics,
    pub validation: Metrics,
    pub best_epoch: usize,
    pub epochs_run: usize,
    #[serde(with = "psnr_json")]
    pub median_render_psnr_db: f64,
    pub render_psnr_db: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub model: MlpModel,
    pub checkpoint: Checkpoint,
    pub checkpoint_hash: String,
    pub metrics: ExperimentMetrics,
    pub metrics_json: String,
    pub history: Vec<EpochStats>,
    pub val_indices: Vec<usize>,
    pub spds: Vec<Spd>,
    pub features: Vec<FeatureVector>,
}

fn predict_all(model: &MlpModel, features: &[FeatureVector], grid: &SpectralGrid) -> Result<Vec<Spd>> {
    features.iter().map(|f| predict_spd(model, f, grid)).collect()
}

/// Generates, renders, trains and evaluates in one go.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let response = ColorResponse::default();
    let extractor = FeatureExtractor::new(&config.scene, &response, &config.grid)?;
    let spds = generate_dataset(config.n_spds, &config.gen_config, config.gen_seed, &config.grid)?;
    let features = extractor.features_all(&spds)?;
    let samples: Vec<(FeatureVector, Spd)> = features.iter().cloned().zip(spds.iter().cloned()).collect();
    let outcome = train(&samples, &config.train)?;

    let pick = |idx: &[usize]| -> (Vec<FeatureVector>, Vec<Spd>) {
        idx.iter().map(|&i| (features[i].clone(), spds[i].clone())).unzip()
    };
    let (train_f, train_t) = pick(&outcome.train_indices);
    let (val_f, val_t) = pick(&outcome.val_indices);
    let train_metrics = evaluate_set(&predict_all(&outcome.model, &train_f, &config.grid)?, &train_t)?;
    let val_preds = predict_all(&outcome.model, &val_f, &config.grid)?;
    let val_metrics = evaluate_set(&val_preds, &val_t)?;

    let n_cmp = config.n_render_compare.min(val_preds.len());
    if n_cmp == 0 && config.n_render_compare > 0 {
        return Err(Error::InvalidArgument("no held-out SPDs to render".into()));
    }
    let psnrs: Vec<f64> = (0..n_cmp)
        .into_par_iter()
        .map(|i| render_psnr(&extractor, &val_preds[i], &val_t[i]))
        .collect::<Result<_>>()?;

    let mut checkpoint = Checkpoint::from_model(&outcome.model);
    checkpoint.grid = Some(config.grid);
    checkpoint.train_config = Some(config.train.clone());
    checkpoint.best_epoch = Some(outcome.best_epoch);
    checkpoint.train_metrics = Some(train_metrics);
    checkpoint.val_metrics = Some(val_metrics);
    let checkpoint_hash = sha256_hex(checkpoint.to_json().as_bytes());

    let metrics = ExperimentMetrics {
        train: train_metrics,
        validation: val_metrics,
        best_epoch: outcome.best_epoch,
        epochs_run: outcome.history.len(),
        median_render_psnr_db: median(&psnrs).unwrap_or(f64::NAN),
        render_psnr_db: psnrs,
    };
    let metrics_json = serde_json::to_string_pretty(&metrics).expect("metrics serialize");
    Ok(ExperimentReport {
        model: outcome.model,
        checkpoint,
        checkpoint_hash,
        metrics,
        metrics_json,
        history: outcome.history,
        val_indices: outcome.val_indices,
        spds,
        features,
    })
}
