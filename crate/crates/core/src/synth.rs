//! Seeded synthetic illuminant spectra: smooth Gaussian lobes, per-bin noise
//! and narrow emission spikes, mixed in random combinations.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{normalize_samples, SpectralGrid, Spd};

pub type Seed = u64;

/// Probabilities of the four spectrum families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixWeights {
    pub smooth: f64,
    pub noisy: f64,
    pub spiky: f64,
    pub combined: f64,
}

impl MixWeights {
    pub const SMOOTH_ONLY: MixWeights = MixWeights { smooth: 1.0, noisy: 0.0, spiky: 0.0, combined: 0.0 };

    fn as_array(&self) -> [f64; 4] {
        [self.smooth, self.noisy, self.spiky, self.combined]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpdKind {
    Smooth,
    Noisy,
    Spiky,
    Combined,
}

impl SpdKind {
    fn has_noise(self) -> bool {
        matches!(self, SpdKind::Noisy | SpdKind::Combined)
    }

    fn has_spikes(self) -> bool {
        matches!(self, SpdKind::Spiky | SpdKind::Combined)
    }
}

/// Generator parameters. All `[lo, hi]` pairs are inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpdGenConfig {
    pub n_gaussians: [u32; 2],
    pub sigma_nm: [f64; 2],
    /// Gaussian centre range; the full grid span when absent.
    pub mu_nm: Option<[f64; 2]>,
    pub gaussian_amplitude: [f64; 2],
    pub n_spikes: [u32; 2],
    pub spike_width_bins: u32,
    /// Relative to the peak of the smooth part.
    pub spike_amplitude: [f64; 2],
    /// Half-width of the uniform per-bin noise, relative to the smooth peak.
    pub noise_amplitude: [f64; 2],
    pub mix_weights: MixWeights,
}

impl Default for SpdGenConfig {
    fn default() -> Self {
        SpdGenConfig {
            n_gaussians: [1, 5],
            sigma_nm: [5.0, 80.0],
            mu_nm: None,
            gaussian_amplitude: [0.2, 1.0],
            n_spikes: [0, 3],
            spike_width_bins: 1,
            spike_amplitude: [0.3, 1.0],
            noise_amplitude: [0.0, 0.05],
            mix_weights: MixWeights { smooth: 0.3, noisy: 0.2, spiky: 0.2, combined: 0.3 },
        }
    }
}

impl SpdGenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidGenConfig(what.to_string()));
        let float_range_ok = |r: &[f64; 2]| r[0].is_finite() && r[1].is_finite() && 0.0 <= r[0] && r[0] <= r[1];
        if self.n_gaussians[0] > self.n_gaussians[1] {
            return bad("n_gaussians range is empty");
        }
        if self.n_spikes[0] > self.n_spikes[1] {
            return bad("n_spikes range is empty");
        }
        if !float_range_ok(&self.sigma_nm) || self.sigma_nm[0] <= 0.0 {
            return bad("sigma_nm must be a positive, non-empty range");
        }
        if let Some(mu) = &self.mu_nm {
            if !float_range_ok(mu) {
                return bad("mu_nm range is empty or negative");
            }
        }
        for (name, r) in [
            ("gaussian_amplitude", &self.gaussian_amplitude),
            ("spike_amplitude", &self.spike_amplitude),
            ("noise_amplitude", &self.noise_amplitude),
        ] {
            if !float_range_ok(r) {
                return bad(&format!("{name} range is empty or negative"));
            }
        }
        if self.spike_width_bins == 0 {
            return bad("spike_width_bins must be at least 1");
        }
        let w = self.mix_weights.as_array();
        if w.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("mix_weights must be non-negative and sum to 1");
        }

        let m = &self.mix_weights;
        let gaussians = self.n_gaussians[1] > 0 && self.gaussian_amplitude[1] > 0.0;
        let spikes = m.spiky + m.combined > 0.0 && self.n_spikes[1] > 0 && self.spike_amplitude[1] > 0.0;
        let noise = m.noisy + m.combined > 0.0 && self.noise_amplitude[1] > 0.0;
        if !(gaussians || spikes || noise) {
            return Err(Error::EmptyGenerator);
        }
        Ok(())
    }

    fn pick_kind(&self, rng: &mut ChaCha8Rng) -> SpdKind {
        let u: f64 = rng.random();
        let w = self.mix_weights.as_array();
        let kinds = [SpdKind::Smooth, SpdKind::Noisy, SpdKind::Spiky, SpdKind::Combined];
        let mut acc = 0.0;
        for (kind, p) in kinds.iter().zip(w) {
            acc += p;
            if u < acc {
                return *kind;
            }
        }
        // Rounding left `u` past the cumulative sum: take the last nonzero kind.
        kinds.iter().zip(w).rev().find(|(_, p)| *p > 0.0).map(|(k, _)| *k).unwrap_or(SpdKind::Smooth)
    }
}

fn draw(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    let u: f64 = rng.random();
    r[0] + (r[1] - r[0]) * u
}

fn draw_count(rng: &mut ChaCha8Rng, r: [u32; 2]) -> u32 {
    r[0] + rng.random_range(0..=r[1] - r[0])
}

/// Sub-seed for dataset item `index`: `splitmix64(master + GOLDEN * (index + 1))`
/// with wrapping arithmetic.
pub fn split_seed(master: Seed, index: u64) -> Seed {
    const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
    splitmix64(master.wrapping_add(GOLDEN.wrapping_mul(index.wrapping_add(1))))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One peak-normalized synthetic spectrum.
///
/// Draw order: family, Gaussian count, then `(mu, sigma, amplitude)` per
/// lobe, then spikes `(bin, amplitude)` if the family has them, then the
/// noise half-width and one uniform deviate per bin if the family is noisy.
/// Negative samples are clamped to zero before peak scaling.
pub fn generate_spd(config: &SpdGenConfig, seed: Seed, grid: &SpectralGrid) -> Result<Spd> {
    config.validate()?;
    grid.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kind = config.pick_kind(&mut rng);
    let mu_range = config.mu_nm.unwrap_or([grid.lambda_min, grid.lambda_max]);

    let mut power = vec![0.0; grid.n_bins];
    for _ in 0..draw_count(&mut rng, config.n_gaussians) {
        let mu = draw(&mut rng, mu_range);
        let sigma = draw(&mut rng, config.sigma_nm);
        let amp = draw(&mut rng, config.gaussian_amplitude);
        for (p, lambda) in power.iter_mut().zip(grid.wavelengths()) {
            let d = lambda - mu;
            *p += amp * (-d * d / (2.0 * sigma * sigma)).exp();
        }
    }

    let smooth_peak = power.iter().copied().fold(0.0, f64::max);
    let scale = if smooth_peak > 0.0 { smooth_peak } else { 1.0 };

    if kind.has_spikes() {
        let width = config.spike_width_bins as usize;
        for _ in 0..draw_count(&mut rng, config.n_spikes) {
            let start = rng.random_range(0..grid.n_bins);
            let amp = draw(&mut rng, config.spike_amplitude);
            for p in power.iter_mut().skip(start).take(width) {
                *p += scale * amp;
            }
        }
    }

    if kind.has_noise() {
        let half_width = draw(&mut rng, config.noise_amplitude);
        for p in power.iter_mut() {
            let u: f64 = rng.random();
            *p += scale * half_width * (2.0 * u - 1.0);
        }
    }

    for p in power.iter_mut() {
        *p = p.max(0.0);
    }
    Spd::new(*grid, normalize_samples(power)?)
}

/// `n` spectra seeded by [`split_seed`]`(seed, i)`, in index order.
pub fn generate_dataset(n: usize, config: &SpdGenConfig, seed: Seed, grid: &SpectralGrid) -> Result<Vec<Spd>> {
    if n == 0 {
        return Err(Error::InvalidArgument("dataset size must be at least 1".into()));
    }
    config.validate()?;
    (0..n as u64)
        .into_par_iter()
        .map(|i| generate_spd(config, split_seed(seed, i), grid))
        .collect()
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Index of a dataset directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub tool_version: String,
    pub grid: SpectralGrid,
    pub config: SpdGenConfig,
    pub master_seed: Seed,
    pub count: usize,
    pub files: Vec<String>,
}

impl DatasetManifest {
    pub fn item_file_name(index: usize) -> String {
        format!("spd_{index:05}.csv")
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
        if manifest.files.len() != manifest.count {
            return Err(Error::InvalidArgument(format!(
                "{}: count {} but {} files listed",
                path.display(),
                manifest.count,
                manifest.files.len()
            )));
        }
        manifest.grid.validate()?;
        Ok(manifest)
    }

    /// Loads every listed SPD and checks it sits on the manifest grid.
    pub fn load_spds(&self, dir: &Path) -> Result<Vec<Spd>> {
        self.files
            .iter()
            .map(|name| {
                let spd = Spd::read_csv(&dir.join(name))?;
                if *spd.grid() != self.grid {
                    return Err(Error::GridMismatch(format!("{name} is not on the manifest grid")));
                }
                Ok(spd)
            })
            .collect()
    }
}

/// Writes the spectra as CSVs plus `manifest.json` into `dir`, creating it.
pub fn write_dataset(
    dir: &Path,
    spds: &[Spd],
    config: &SpdGenConfig,
    seed: Seed,
    grid: &SpectralGrid,
) -> Result<DatasetManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files: Vec<String> = (0..spds.len()).map(DatasetManifest::item_file_name).collect();
    for (spd, name) in spds.iter().zip(&files) {
        spd.write_csv(&dir.join(name))?;
    }
    let manifest = DatasetManifest {
        tool_version: crate::VERSION.to_string(),
        grid: *grid,
        config: config.clone(),
        master_seed: seed,
        count: spds.len(),
        files,
    };
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(&path, e))?;
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
