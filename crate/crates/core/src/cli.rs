//! The `spd-forge` command line.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::RgbImage;
use crate::imager::{coverage_report, radial_features, FeatureVector, SceneConfig};
use crate::metrics::{evaluate_set, mae, pearson, psnr_json, rmse, Metrics};
use crate::mlp::{predict_spd, train, Checkpoint, TrainConfig};
use crate::pipeline::{render_psnr, scene_hash, sha256_hex, with_thread_limit, FeatureExtractor};
use crate::plot::spd_plot_svg;
use crate::spectral::{ColorResponse, SpectralGrid, Spd};
use crate::synth::{generate_dataset, write_dataset, DatasetManifest, Seed, SpdGenConfig};

#[derive(Debug, Parser)]
#[command(name = "spd-forge", version, about = "Recover a light's spectrum from its diffraction on a compact disc")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded dataset of synthetic SPDs.
    Gen {
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        count: u64,
        #[arg(long, default_value_t = 0)]
        seed: Seed,
        /// Generator config JSON; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// `default` or `MIN,MAX,BINS` in nm.
        #[arg(long, default_value = "default")]
        grid: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render the masked disc image of one SPD.
    Render {
        #[arg(long)]
        spd: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write an 8-bit sRGB preview.
        #[arg(long)]
        png: Option<PathBuf>,
    },
    /// Render a dataset, extract features and train the regressor.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        train_config: Option<PathBuf>,
        /// Overrides the seed in the training config.
        #[arg(long)]
        seed: Option<Seed>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict an SPD from a rendered image.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a directory of predicted SPDs against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render two SPDs and compare the images.
    RenderCompare {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Plot one or more SPDs as SVG.
    Plot {
        #[arg(long = "spd", required = true)]
        spds: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a preset scene config.
    Scene {
        #[arg(long, value_enum, default_value_t = ScenePreset::Coverage)]
        preset: ScenePreset,
        #[arg(long)]
        out: PathBuf,
    },
    /// Report which wavelengths a scene can image at all.
    Coverage {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value = "default")]
        grid: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenePreset {
    Coverage,
    FinePitch,
}

/// Record tying a training run's inputs and outputs together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineManifest {
    pub tool_version: String,
    pub dataset_dir: PathBuf,
    pub dataset_seed: Seed,
    pub scene_path: PathBuf,
    pub scene_hash: String,
    pub feature_cache_dir: PathBuf,
    pub train_seed: Seed,
    pub checkpoint: PathBuf,
    pub checkpoint_sha256: String,
    pub history: PathBuf,
    pub metrics: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train: Metrics,
    pub validation: Metrics,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub files: Vec<String>,
    #[serde(flatten)]
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderCompareReport {
    pub pred: PathBuf,
    pub truth: PathBuf,
    pub pred_image: PathBuf,
    pub truth_image: PathBuf,
    pub mae: f64,
    pub rmse: f64,
    /// `None` when either spectrum is constant.
    pub pearson: Option<f64>,
    #[serde(with = "psnr_json")]
    pub psnr_db: f64,
}

/// Process exit code for a failed command.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_input_error() {
        2
    } else {
        1
    }
}

pub fn parse_grid(s: &str) -> Result<SpectralGrid> {
    if s == "default" {
        return Ok(SpectralGrid::default());
    }
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let bad = || Error::InvalidArgument(format!("grid must be `default` or MIN,MAX,BINS, got `{s}`"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let n: usize = parts[2].parse().map_err(|_| bad())?;
    SpectralGrid::new(lo, hi, n)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    write_text(path, &(json + "\n"))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `dir/model.json` + `history.csv` -> `dir/model.history.csv`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn read_gen_config(path: &Path) -> Result<SpdGenConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

fn read_features_csv(path: &Path) -> Result<FeatureVector> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut values = Vec::new();
    for record in reader.deserialize::<(usize, f64)>() {
        values.push(record.map_err(|e| Error::csv(path, e))?.1);
    }
    Ok(FeatureVector(values))
}

fn write_features_csv(path: &Path, features: &FeatureVector) -> Result<()> {
    let mut text = String::from("index,value\n");
    for (i, v) in features.values().iter().enumerate() {
        text.push_str(&format!("{i},{v}\n"));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Features for every dataset item, read from the per-item cache when
/// present and otherwise rendered. New cache entries are written after all
/// items are done.
fn cached_features(extractor: &FeatureExtractor, spds: &[Spd], cache_dir: &Path) -> Result<Vec<FeatureVector>> {
    use rayon::prelude::*;

    let expected = extractor.scene().feature_len();
    let names: Vec<String> = (0..spds.len()).map(DatasetManifest::item_file_name).collect();
    let results: Vec<(FeatureVector, bool)> = spds
        .par_iter()
        .zip(&names)
        .map(|(spd, name)| {
            let path = cache_dir.join(name);
            if path.is_file() {
                if let Ok(f) = read_features_csv(&path) {
                    if f.len() == expected {
                        return Ok((f, false));
                    }
                }
            }
            Ok((extractor.features(spd)?, true))
        })
        .collect::<Result<_>>()?;
    fs::create_dir_all(cache_dir).map_err(|e| Error::io(cache_dir, e))?;
    for ((features, fresh), name) in results.iter().zip(&names) {
        if *fresh {
            write_features_csv(&cache_dir.join(name), features)?;
        }
    }
    Ok(results.into_iter().map(|(f, _)| f).collect())
}

fn list_csv(dir: &Path) -> Result<Vec<String>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut names = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "csv") {
            names.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    names.sort();
    Ok(names)
}

fn cmd_gen(count: u64, seed: Seed, config: Option<&Path>, grid: &str, out: &Path) -> Result<()> {
    let config = match config {
        Some(p) => read_gen_config(p)?,
        None => SpdGenConfig::default(),
    };
    let grid = parse_grid(grid)?;
    let spds = generate_dataset(count as usize, &config, seed, &grid)?;
    let manifest = write_dataset(out, &spds, &config, seed, &grid)?;
    println!("wrote {} SPDs to {}", manifest.count, out.display());
    Ok(())
}

fn cmd_render(spd: &Path, scene: &Path, out: &Path, png: Option<&Path>) -> Result<()> {
    let scene = SceneConfig::read(scene)?;
    let spd = Spd::read_csv(spd)?;
    let extractor = FeatureExtractor::new(&scene, &ColorResponse::default(), spd.grid())?;
    let img = extractor.render_masked(&spd)?;
    img.write_pfm(out)?;
    if let Some(png) = png {
        img.write_png(png)?;
    }
    Ok(())
}

fn cmd_train(dataset: &Path, scene_path: &Path, tc: Option<&Path>, seed: Option<Seed>, out: &Path) -> Result<()> {
    let scene = SceneConfig::read(scene_path)?;
    let mut config = match tc {
        Some(p) => TrainConfig::read(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    let manifest = DatasetManifest::read(dataset)?;
    let spds = manifest.load_spds(dataset)?;
    let grid = manifest.grid;

    let hash = scene_hash(&scene);
    let cache_dir = dataset.join(format!("features-{hash}"));
    let extractor = FeatureExtractor::new(&scene, &ColorResponse::default(), &grid)?;
    let features = cached_features(&extractor, &spds, &cache_dir)?;

    let samples: Vec<(FeatureVector, Spd)> = features.into_iter().zip(spds).collect();
    let outcome = train(&samples, &config)?;
    let eval = |idx: &[usize]| -> Result<Metrics> {
        let preds =
            idx.iter().map(|&i| predict_spd(&outcome.model, &samples[i].0, &grid)).collect::<Result<Vec<_>>>()?;
        let truths: Vec<Spd> = idx.iter().map(|&i| samples[i].1.clone()).collect();
        evaluate_set(&preds, &truths)
    };
    let report = TrainReport {
        train: eval(&outcome.train_indices)?,
        validation: eval(&outcome.val_indices)?,
        best_epoch: outcome.best_epoch,
        epochs_run: outcome.history.len(),
    };

    let mut checkpoint = Checkpoint::from_model(&outcome.model);
    checkpoint.grid = Some(grid);
    checkpoint.train_config = Some(config.clone());
    checkpoint.best_epoch = Some(outcome.best_epoch);
    checkpoint.train_metrics = Some(report.train);
    checkpoint.val_metrics = Some(report.validation);
    let checkpoint_json = checkpoint.to_json();
    write_text(out, &checkpoint_json)?;

    let history_path = sibling(out, "history.csv");
    let mut history = String::from("epoch,train_loss,val_loss\n");
    for h in &outcome.history {
        history.push_str(&format!("{},{},{}\n", h.epoch, h.train_loss, h.val_loss));
    }
    write_text(&history_path, &history)?;

    let metrics_path = sibling(out, "metrics.json");
    write_json(&metrics_path, &report)?;

    let pipeline = PipelineManifest {
        tool_version: crate::VERSION.to_string(),
        dataset_dir: dataset.to_path_buf(),
        dataset_seed: manifest.master_seed,
        scene_path: scene_path.to_path_buf(),
        scene_hash: hash,
        feature_cache_dir: cache_dir,
        train_seed: config.seed,
        checkpoint: out.to_path_buf(),
        checkpoint_sha256: sha256_hex(checkpoint_json.as_bytes()),
        history: history_path,
        metrics: metrics_path,
    };
    write_json(&sibling(out, "manifest.json"), &pipeline)?;
    println!(
        "best epoch {} of {}: val mae {:.4}, pearson {:.4}",
        report.best_epoch, report.epochs_run, report.validation.mae, report.validation.pearson
    );
    Ok(())
}

fn cmd_predict(model: &Path, image: &Path, scene: &Path, out: &Path) -> Result<()> {
    let scene = SceneConfig::read(scene)?;
    let checkpoint = Checkpoint::read(model)?;
    let grid = checkpoint.grid.unwrap_or_default();
    let model = checkpoint.to_model()?;
    if model.input_dim() != scene.feature_len() {
        return Err(Error::DimensionMismatch(format!(
            "model expects {} features, scene yields {}",
            model.input_dim(),
            scene.feature_len()
        )));
    }
    if model.output_dim() != grid.n_bins {
        return Err(Error::DimensionMismatch(format!(
            "model outputs {} values for a {}-bin grid",
            model.output_dim(),
            grid.n_bins
        )));
    }
    let img = RgbImage::read_pfm(image)?;
    let features = radial_features(&img, &scene);
    predict_spd(&model, &features, &grid)?.write_csv(out)
}

fn cmd_eval(pred: &Path, truth: &Path, out: &Path) -> Result<()> {
    let pred_names = list_csv(pred)?;
    let truth_names = list_csv(truth)?;
    if pred_names != truth_names {
        return Err(Error::InvalidArgument(format!(
            "misaligned sets: {} has {} SPD files, {} has {} and the names differ",
            pred.display(),
            pred_names.len(),
            truth.display(),
            truth_names.len()
        )));
    }
    let load = |dir: &Path| -> Result<Vec<Spd>> { truth_names.iter().map(|n| Spd::read_csv(&dir.join(n))).collect() };
    let metrics = evaluate_set(&load(pred)?, &load(truth)?)?;
    write_json(out, &EvalReport { files: truth_names.clone(), metrics })?;
    println!("mae {:.6} rmse {:.6} pearson {:.6} over {} pairs", metrics.mae, metrics.rmse, metrics.pearson, metrics.n_samples);
    Ok(())
}

fn cmd_render_compare(pred: &Path, truth: &Path, scene: &Path, out: &Path) -> Result<()> {
    let scene = SceneConfig::read(scene)?;
    let p = Spd::read_csv(pred)?;
    let t = Spd::read_csv(truth)?;
    if p.grid() != t.grid() {
        return Err(Error::GridMismatch("predicted and true SPDs use different grids".into()));
    }
    let extractor = FeatureExtractor::new(&scene, &ColorResponse::default(), t.grid())?;
    let pred_image = sibling(out, "pred.pfm");
    let truth_image = sibling(out, "truth.pfm");
    let psnr_db = render_psnr(&extractor, &p, &t)?;
    extractor.render_masked(&p)?.write_pfm(&pred_image)?;
    extractor.render_masked(&t)?.write_pfm(&truth_image)?;
    let pearson = match pearson(&p, &t) {
        Ok(r) => Some(r),
        Err(Error::UndefinedCorrelation) => None,
        Err(e) => return Err(e),
    };
    let report = RenderCompareReport {
        pred: pred.to_path_buf(),
        truth: truth.to_path_buf(),
        pred_image,
        truth_image,
        mae: mae(&p, &t)?,
        rmse: rmse(&p, &t)?,
        pearson,
        psnr_db,
    };
    write_json(out, &report)?;
    println!("render PSNR {psnr_db:.3} dB");
    Ok(())
}

fn cmd_plot(spds: &[PathBuf], out: &Path) -> Result<()> {
    let series = spds
        .iter()
        .map(|p| {
            let label = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok((label, Spd::read_csv(p)?))
        })
        .collect::<Result<Vec<_>>>()?;
    write_text(out, &spd_plot_svg(&series)?)
}

fn cmd_coverage(scene: &Path, grid: &str) -> Result<()> {
    let report = coverage_report(&SceneConfig::read(scene)?, &parse_grid(grid)?)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    let _ = writeln!(std::io::stdout().lock(), "{json}");
    Ok(())
}

/// Executes a parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    with_thread_limit(move || match cli.command {
        Command::Gen { count, seed, config, grid, out } => cmd_gen(count, seed, config.as_deref(), &grid, &out),
        Command::Render { spd, scene, out, png } => cmd_render(&spd, &scene, &out, png.as_deref()),
        Command::Train { dataset, scene, train_config, seed, out } => {
            cmd_train(&dataset, &scene, train_config.as_deref(), seed, &out)
        }
        Command::Predict { model, image, scene, out } => cmd_predict(&model, &image, &scene, &out),
        Command::Eval { pred, truth, out } => cmd_eval(&pred, &truth, &out),
        Command::RenderCompare { pred, truth, scene, out } => cmd_render_compare(&pred, &truth, &scene, &out),
        Command::Plot { spds, out } => cmd_plot(&spds, &out),
        Command::Scene { preset, out } => {
            let scene = match preset {
                ScenePreset::Coverage => SceneConfig::coverage_mode(),
                ScenePreset::FinePitch => SceneConfig::fine_pitch(),
            };
            scene.write(&out)
        }
        Command::Coverage { scene, grid } => cmd_coverage(&scene, &grid),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("default").unwrap(), SpectralGrid::default());
        assert_eq!(parse_grid("380,780,81").unwrap(), SpectralGrid::new(380.0, 780.0, 81).unwrap());
        assert!(parse_grid("380,780").is_err());
        assert!(parse_grid("700,400,61").is_err());
    }

    #[test]
    fn count_zero_is_usage_error() {
        let err = Cli::try_parse_from(["spd-forge", "gen", "--count", "0", "--out", "x"]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn sibling_paths() {
        assert_eq!(sibling(Path::new("runs/model.json"), "history.csv"), PathBuf::from("runs/model.history.csv"));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::MalformedPfm("x".into())), 2);
        assert_eq!(exit_code(&Error::DimensionMismatch("x".into())), 2);
        assert_eq!(exit_code(&Error::DegeneratePrediction), 1);
    }
}
