//! Forward model of the capture: a spotlight and a pinhole camera on the
//! optical axis of a diffractive disc, both facing it. Each pixel sees one
//! disc point at radius `r`; every nonzero diffraction order selects a single
//! wavelength there through the grating equation, which is what paints the
//! concentric rainbow rings.
//!
//! Rendering is linear in the SPD. A [`RenderPlan`] precomputes, per pixel,
//! the SPD taps and RGB coefficients so repeated renders for one scene only
//! pay for the dot products.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::RgbImage;
use crate::optics::{order_efficiency, wavelength_for_geometry, GratingParams};
use crate::spectral::{ColorResponse, SpectralGrid, Spd};

/// Band every rendered SPD must cover, nm.
pub const VISIBLE_BAND: (f64, f64) = (400.0, 700.0);

/// Masked pixel percentile mapped to [`EXPOSURE_TARGET`] for a flat SPD.
pub const EXPOSURE_PERCENTILE: f64 = 0.99;
pub const EXPOSURE_TARGET: f64 = 0.9;

/// Scene geometry in metres (grating dimensions in nm).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub grating: GratingParams,
    /// Spotlight distance along the optical axis.
    pub d_light: f64,
    /// Pinhole distance along the optical axis.
    pub d_camera: f64,
    pub r_inner: f64,
    pub r_outer: f64,
    pub r_disc: f64,
    /// Square image side, pixels.
    pub image_size: usize,
    /// Half-width of the field of view measured at the disc plane.
    pub film_half_width: f64,
    pub n_radial_bins: usize,
    pub spot_cone_cos_falloff_exponent: f64,
    /// Zeroth-order band: `|s_out - s_spec|` below this picks up the
    /// broadband specular term.
    pub order_tolerance_eps: f64,
    /// Camera roll about the optical axis, degrees.
    #[serde(default)]
    pub camera_roll_deg: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig::coverage_mode()
    }
}

impl SceneConfig {
    /// 1.6 µm track pitch with the light placed so first-order diffraction
    /// sweeps the whole 400–700 nm band across the masked annulus.
    pub fn coverage_mode() -> Self {
        SceneConfig {
            grating: GratingParams::cd_track_pitch(),
            d_light: 0.125,
            d_camera: 0.5,
            r_inner: 0.025,
            r_outer: 0.058,
            r_disc: 0.060,
            image_size: 128,
            film_half_width: 0.062,
            n_radial_bins: 64,
            spot_cone_cos_falloff_exponent: 2.0,
            order_tolerance_eps: 1e-3,
            camera_roll_deg: 0.0,
        }
    }

    /// 0.5 µm grating period with a close spotlight. Long wavelengths never reach
    /// the annulus in first order under this geometry.
    pub fn fine_pitch() -> Self {
        SceneConfig { grating: GratingParams::default(), d_light: 0.03, ..Self::coverage_mode() }
    }

    pub fn validate(&self) -> Result<()> {
        self.grating.validate()?;
        let bad = |what: String| Err(Error::InvalidScene(what));
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !(positive(self.d_light) && positive(self.d_camera)) {
            return bad(format!("distances must be positive (d_light {}, d_camera {})", self.d_light, self.d_camera));
        }
        if !(positive(self.r_inner) && self.r_inner < self.r_outer && self.r_outer <= self.r_disc && self.r_disc.is_finite()) {
            return bad(format!(
                "need 0 < r_inner < r_outer <= r_disc, got {} / {} / {}",
                self.r_inner, self.r_outer, self.r_disc
            ));
        }
        if self.image_size < 16 {
            return bad(format!("image_size {} below 16", self.image_size));
        }
        if !positive(self.film_half_width) {
            return bad("film_half_width must be positive".into());
        }
        if self.n_radial_bins < 4 {
            return bad(format!("n_radial_bins {} below 4", self.n_radial_bins));
        }
        if !(self.spot_cone_cos_falloff_exponent >= 0.0 && self.spot_cone_cos_falloff_exponent.is_finite()) {
            return bad("spot_cone_cos_falloff_exponent must be non-negative".into());
        }
        if !(self.order_tolerance_eps >= 0.0 && self.order_tolerance_eps.is_finite()) {
            return bad("order_tolerance_eps must be non-negative".into());
        }
        if !self.camera_roll_deg.is_finite() {
            return bad("camera_roll_deg must be finite".into());
        }
        Ok(())
    }

    pub fn feature_len(&self) -> usize {
        3 * self.n_radial_bins
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let scene: SceneConfig = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    /// Disc-plane radius seen through the pixel centre `(x, y)` of a
    /// `width` x `height` image.
    pub fn pixel_radius(&self, x: usize, y: usize, width: usize, height: usize) -> f64 {
        let (px, py) = self.pixel_position(x, y, width, height);
        (px * px + py * py).sqrt()
    }

    fn pixel_position(&self, x: usize, y: usize, width: usize, height: usize) -> (f64, f64) {
        let u = (2.0 * (x as f64 + 0.5) / width as f64 - 1.0) * self.film_half_width;
        let v = (1.0 - 2.0 * (y as f64 + 0.5) / height as f64) * self.film_half_width;
        if self.camera_roll_deg == 0.0 {
            return (u, v);
        }
        let (s, c) = self.camera_roll_deg.to_radians().sin_cos();
        (c * u - s * v, s * u + c * v)
    }

    fn in_annulus(&self, r: f64) -> bool {
        r >= self.r_inner && r <= self.r_outer
    }
}

/// Signed radial sines of the specular reflection and of the direction
/// towards the camera at disc radius `r`.
pub fn radial_sines(r: f64, scene: &SceneConfig) -> (f64, f64) {
    let s_spec = r / (r * r + scene.d_light * scene.d_light).sqrt();
    let s_out = -r / (r * r + scene.d_camera * scene.d_camera).sqrt();
    (s_spec, s_out)
}

/// Inverse-square, cosine and spot-cone attenuation, normalised to 1 on
/// axis.
fn geometry_factor(r: f64, scene: &SceneConfig) -> f64 {
    let dist_light_sq = r * r + scene.d_light * scene.d_light;
    let cos_in = scene.d_light / dist_light_sq.sqrt();
    let cos_out = scene.d_camera / (r * r + scene.d_camera * scene.d_camera).sqrt();
    let falloff = scene.d_light * scene.d_light / dist_light_sq;
    falloff * cos_in * cos_out * cos_in.powf(scene.spot_cone_cos_falloff_exponent)
}

#[derive(Debug, Clone, Copy)]
struct Tap {
    bin: usize,
    frac: f64,
    coef: [f64; 3],
}

/// Per-pixel linear map from SPD samples to exposed linear RGB.
#[derive(Debug, Clone)]
pub struct RenderPlan {
    grid: SpectralGrid,
    size: usize,
    offsets: Vec<usize>,
    taps: Vec<Tap>,
    exposure: f64,
}

impl RenderPlan {
    pub fn new(scene: &SceneConfig, response: &ColorResponse, grid: &SpectralGrid) -> Result<Self> {
        scene.validate()?;
        grid.validate()?;
        if grid.lambda_min > VISIBLE_BAND.0 || grid.lambda_max < VISIBLE_BAND.1 {
            return Err(Error::GridMismatch(format!(
                "SPD grid {}-{} nm does not cover {}-{} nm",
                grid.lambda_min, grid.lambda_max, VISIBLE_BAND.0, VISIBLE_BAND.1
            )));
        }

        // A monochromatic line is outside the sRGB gamut; negative lobes are
        // clipped per wavelength so pixels stay non-negative and the
        // render stays linear in the SPD.
        let mono = |lambda: f64| response.monochromatic(lambda).map(|c| c.max(0.0));
        let broadband: Vec<(f64, [f64; 3])> = grid
            .wavelengths()
            .zip(grid.trapezoid_weights())
            .map(|(lambda, w)| {
                let eta = order_efficiency(0, lambda, &scene.grating).unwrap_or(0.0);
                (lambda, mono(lambda).map(|c| c * w * eta))
            })
            .collect();

        let n = scene.image_size;
        let mut offsets = Vec::with_capacity(n * n + 1);
        let mut taps = Vec::new();
        offsets.push(0);
        for y in 0..n {
            for x in 0..n {
                let r = scene.pixel_radius(x, y, n, n);
                if r <= scene.r_disc {
                    let g = geometry_factor(r, scene);
                    let (s_spec, s_out) = radial_sines(r, scene);
                    for m in scene.grating.nonzero_orders() {
                        let lambda = wavelength_for_geometry(s_spec, s_out, m, &scene.grating)?;
                        let Some((bin, frac)) = grid.locate(lambda) else { continue };
                        let eta = order_efficiency(m, lambda, &scene.grating)?;
                        if eta == 0.0 {
                            continue;
                        }
                        taps.push(Tap { bin, frac, coef: mono(lambda).map(|c| c * eta * g) });
                    }
                    if (s_out - s_spec).abs() < scene.order_tolerance_eps {
                        for (bin, (_, c)) in broadband.iter().enumerate() {
                            taps.push(Tap { bin, frac: 0.0, coef: c.map(|c| c * g) });
                        }
                    }
                }
                offsets.push(taps.len());
            }
        }

        let mut plan = RenderPlan { grid: *grid, size: n, offsets, taps, exposure: 1.0 };
        plan.exposure = plan.flat_exposure(scene);
        Ok(plan)
    }

    fn flat_exposure(&self, scene: &SceneConfig) -> f64 {
        let flat = self.render_unchecked(&vec![1.0; self.grid.n_bins]);
        let mut levels: Vec<f64> = Vec::new();
        for y in 0..self.size {
            for x in 0..self.size {
                if scene.in_annulus(scene.pixel_radius(x, y, self.size, self.size)) {
                    let px = flat.get(x, y);
                    levels.push(px[0].max(px[1]).max(px[2]));
                }
            }
        }
        if levels.is_empty() {
            return 1.0;
        }
        levels.sort_by(f64::total_cmp);
        let rank = ((EXPOSURE_PERCENTILE * levels.len() as f64).ceil() as usize).clamp(1, levels.len());
        let level = levels[rank - 1];
        if level > 0.0 {
            EXPOSURE_TARGET / level
        } else {
            1.0
        }
    }

    pub fn exposure(&self) -> f64 {
        self.exposure
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn render(&self, spd: &Spd) -> Result<RgbImage> {
        if *spd.grid() != self.grid {
            return Err(Error::GridMismatch("SPD grid differs from the render plan grid".into()));
        }
        Ok(self.render_unchecked(spd.power()))
    }

    fn render_unchecked(&self, power: &[f64]) -> RgbImage {
        let last = power.len() - 1;
        let pixels = self
            .offsets
            .windows(2)
            .map(|w| {
                let mut px = [0.0; 3];
                for tap in &self.taps[w[0]..w[1]] {
                    let s = if tap.frac == 0.0 {
                        power[tap.bin]
                    } else {
                        (1.0 - tap.frac) * power[tap.bin] + tap.frac * power[(tap.bin + 1).min(last)]
                    };
                    for (p, c) in px.iter_mut().zip(tap.coef) {
                        *p += s * c * self.exposure;
                    }
                }
                px
            })
            .collect();
        RgbImage::from_pixels(self.size, self.size, pixels).expect("plan pixels are finite")
    }
}

/// Renders the unmasked disc image of `spd` under `scene`.
pub fn render_cd_image(spd: &Spd, scene: &SceneConfig, response: &ColorResponse) -> Result<RgbImage> {
    RenderPlan::new(scene, response, spd.grid())?.render(spd)
}

/// Zeroes every pixel whose disc radius falls outside `[r_inner, r_outer]`.
pub fn apply_annulus_mask(img: &RgbImage, scene: &SceneConfig) -> RgbImage {
    let (w, h) = (img.width(), img.height());
    let mut out = img.clone();
    for (i, px) in out.pixels_mut().iter_mut().enumerate() {
        if !scene.in_annulus(scene.pixel_radius(i % w, i / w, w, h)) {
            *px = [0.0; 3];
        }
    }
    out
}

/// Mean linear RGB per equal-width annulus over `[r_inner, r_outer]`,
/// bin-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn radial_features(img: &RgbImage, scene: &SceneConfig) -> FeatureVector {
    let n = scene.n_radial_bins;
    let (w, h) = (img.width(), img.height());
    let width = (scene.r_outer - scene.r_inner) / n as f64;
    let mut sums = vec![[0.0; 3]; n];
    let mut counts = vec![0usize; n];
    for (i, px) in img.pixels().iter().enumerate() {
        let r = scene.pixel_radius(i % w, i / w, w, h);
        if !scene.in_annulus(r) {
            continue;
        }
        let bin = (((r - scene.r_inner) / width) as usize).min(n - 1);
        for (s, c) in sums[bin].iter_mut().zip(px) {
            *s += c;
        }
        counts[bin] += 1;
    }
    let mut values = Vec::with_capacity(3 * n);
    for (sum, count) in sums.iter().zip(&counts) {
        if *count == 0 {
            values.extend([0.0; 3]);
        } else {
            values.extend(sum.map(|s| s / *count as f64));
        }
    }
    FeatureVector(values)
}

/// Which grid bins the scene geometry can ever image.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    pub fraction: f64,
    pub hits: Vec<usize>,
    pub lambda_min_hit: Option<f64>,
    pub lambda_max_hit: Option<f64>,
}

/// Radial samples taken across the annulus by [`coverage_report`].
pub const COVERAGE_SWEEP_SAMPLES: usize = 4096;

/// Sweeps the masked annulus over every nonzero order with nonzero
/// efficiency, binning each selected wavelength to its nearest grid bin.
pub fn coverage_report(scene: &SceneConfig, grid: &SpectralGrid) -> Result<CoverageReport> {
    scene.validate()?;
    grid.validate()?;
    let mut hits = vec![0usize; grid.n_bins];
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..COVERAGE_SWEEP_SAMPLES {
        let t = i as f64 / (COVERAGE_SWEEP_SAMPLES - 1) as f64;
        let r = scene.r_inner + t * (scene.r_outer - scene.r_inner);
        let (s_spec, s_out) = radial_sines(r, scene);
        for m in scene.grating.nonzero_orders() {
            let lambda = wavelength_for_geometry(s_spec, s_out, m, &scene.grating)?;
            if !grid.contains(lambda) || order_efficiency(m, lambda, &scene.grating)? == 0.0 {
                continue;
            }
            let bin = ((lambda - grid.lambda_min) / grid.step()).round() as usize;
            hits[bin.min(grid.n_bins - 1)] += 1;
            lo = lo.min(lambda);
            hi = hi.max(lambda);
        }
    }
    let covered = hits.iter().filter(|h| **h > 0).count();
    Ok(CoverageReport {
        fraction: covered as f64 / grid.n_bins as f64,
        hits,
        lambda_min_hit: lo.is_finite().then_some(lo),
        lambda_max_hit: hi.is_finite().then_some(hi),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_spd, SpdGenConfig};

    fn small_scene() -> SceneConfig {
        SceneConfig { image_size: 64, n_radial_bins: 16, ..SceneConfig::coverage_mode() }
    }

    fn test_spd(seed: u64) -> Spd {
        generate_spd(&SpdGenConfig::default(), seed, &SpectralGrid::default()).unwrap()
    }

    #[test]
    fn hand_evaluated_ring_wavelength() {
        let scene = SceneConfig { d_light: 0.1, ..SceneConfig::coverage_mode() };
        let (s_spec, s_out) = radial_sines(0.025, &scene);
        assert!((s_spec - 0.24254).abs() < 1e-5);
        assert!((s_out + 0.04994).abs() < 1e-5);
        let lambda = wavelength_for_geometry(s_spec, s_out, -1, &scene.grating).unwrap();
        assert!((lambda - 1600.0 * 0.29248).abs() < 0.02, "{lambda}");
        assert!((lambda - 468.0).abs() < 0.5);
    }

    #[test]
    fn background_is_black() {
        let scene = SceneConfig { film_half_width: 0.08, ..small_scene() };
        let img = render_cd_image(&Spd::flat(SpectralGrid::default()), &scene, &ColorResponse::default()).unwrap();
        assert_eq!(img.get(0, 0), [0.0; 3]);
        assert_eq!(img.get(63, 63), [0.0; 3]);
        assert!(img.pixels().iter().flatten().all(|v| *v >= 0.0 && v.is_finite()));
    }

    #[test]
    fn render_requires_visible_grid() {
        let grid = SpectralGrid::new(450.0, 700.0, 51).unwrap();
        let err = render_cd_image(&Spd::flat(grid), &small_scene(), &ColorResponse::default()).unwrap_err();
        assert!(err.to_string().starts_with("grid mismatch"));
    }

    #[test]
    fn render_is_linear() {
        let scene = small_scene();
        let r = ColorResponse::default();
        let (a, b) = (test_spd(1), test_spd(2));
        let half = render_cd_image(&a.scaled(0.5).unwrap(), &scene, &r).unwrap();
        let full = render_cd_image(&a, &scene, &r).unwrap();
        for (h, f) in half.pixels().iter().zip(full.pixels()) {
            for c in 0..3 {
                assert!((h[c] - 0.5 * f[c]).abs() <= 1e-12 * f[c].abs());
            }
        }
        let mix = Spd::new(
            *a.grid(),
            a.power().iter().zip(b.power()).map(|(x, y)| 0.3 * x + 1.7 * y).collect(),
        )
        .unwrap();
        let lhs = render_cd_image(&mix, &scene, &r).unwrap();
        let rb = render_cd_image(&b, &scene, &r).unwrap();
        for ((l, x), y) in lhs.pixels().iter().zip(full.pixels()).zip(rb.pixels()) {
            for c in 0..3 {
                let rhs = 0.3 * x[c] + 1.7 * y[c];
                assert!((l[c] - rhs).abs() <= 1e-9 * rhs.abs().max(1e-12));
            }
        }
    }

    #[test]
    fn exposure_maps_flat_percentile() {
        let scene = small_scene();
        let img = render_cd_image(&Spd::flat(SpectralGrid::default()), &scene, &ColorResponse::default()).unwrap();
        let masked = apply_annulus_mask(&img, &scene);
        let max = masked.pixels().iter().flatten().copied().fold(0.0, f64::max);
        assert!(max >= EXPOSURE_TARGET - 1e-12);
        let mut levels: Vec<f64> = (0..64 * 64)
            .filter(|i| scene.in_annulus(scene.pixel_radius(i % 64, i / 64, 64, 64)))
            .map(|i| {
                let p = img.pixels()[i];
                p[0].max(p[1]).max(p[2])
            })
            .collect();
        levels.sort_by(f64::total_cmp);
        let above = levels.iter().filter(|v| **v > EXPOSURE_TARGET + 1e-12).count();
        assert!(above as f64 <= 0.01 * levels.len() as f64 + 1.0);
    }

    #[test]
    fn mask_examples() {
        let scene = small_scene();
        let img = RgbImage::from_pixels(64, 64, vec![[0.5, 0.25, 1.0]; 64 * 64]).unwrap();
        let masked = apply_annulus_mask(&img, &scene);
        assert_eq!(masked.get(32, 32), [0.0; 3]);
        assert_eq!(masked.get(0, 0), [0.0; 3]);
        // Pixel whose centre lies near the middle of the annulus.
        let mid = 0.5 * (scene.r_inner + scene.r_outer);
        let x = (0..64).min_by(|a, b| {
            let da = (scene.pixel_radius(*a, 32, 64, 64) - mid).abs();
            let db = (scene.pixel_radius(*b, 32, 64, 64) - mid).abs();
            da.total_cmp(&db)
        });
        assert_eq!(masked.get(x.unwrap(), 32), [0.5, 0.25, 1.0]);
    }

    #[test]
    fn feature_examples() {
        let scene = small_scene();
        let black = RgbImage::black(64, 64);
        assert_eq!(radial_features(&black, &scene).values(), &vec![0.0; 48][..]);
        let grey = RgbImage::from_pixels(64, 64, vec![[0.7; 3]; 64 * 64]).unwrap();
        let f = radial_features(&apply_annulus_mask(&grey, &scene), &scene);
        assert_eq!(f.len(), 48);
        assert!(f.values().iter().all(|v| (*v - 0.7).abs() < 1e-12));
    }

    #[test]
    fn features_resolution_independent_length() {
        let scene = small_scene();
        let img = RgbImage::from_pixels(40, 40, vec![[1.0; 3]; 1600]).unwrap();
        assert_eq!(radial_features(&img, &scene).len(), scene.feature_len());
    }

    #[test]
    fn rolled_camera_same_features() {
        let scene = small_scene();
        let rolled = SceneConfig { camera_roll_deg: 90.0, ..scene.clone() };
        let r = ColorResponse::default();
        let spd = test_spd(9);
        let f0 = radial_features(&apply_annulus_mask(&render_cd_image(&spd, &scene, &r).unwrap(), &scene), &scene);
        let f1 =
            radial_features(&apply_annulus_mask(&render_cd_image(&spd, &rolled, &r).unwrap(), &rolled), &rolled);
        let scale = f0.values().iter().copied().fold(0.0, f64::max);
        for (a, b) in f0.values().iter().zip(f1.values()) {
            assert!((a - b).abs() <= 1e-6 * scale);
        }
    }

    #[test]
    fn quadrants_agree() {
        // Each annulus, split into the four image quadrants, has the same
        // mean colour.
        let scene = small_scene();
        let n = scene.image_size;
        let img = apply_annulus_mask(
            &render_cd_image(&test_spd(4), &scene, &ColorResponse::default()).unwrap(),
            &scene,
        );
        let width = (scene.r_outer - scene.r_inner) / scene.n_radial_bins as f64;
        let mut sums = vec![[[0.0; 3]; 4]; scene.n_radial_bins];
        let mut counts = vec![[0usize; 4]; scene.n_radial_bins];
        for y in 0..n {
            for x in 0..n {
                let r = scene.pixel_radius(x, y, n, n);
                if !scene.in_annulus(r) {
                    continue;
                }
                let bin = (((r - scene.r_inner) / width) as usize).min(scene.n_radial_bins - 1);
                let q = usize::from(x >= n / 2) + 2 * usize::from(y >= n / 2);
                for (acc, v) in sums[bin][q].iter_mut().zip(img.get(x, y)) {
                    *acc += v;
                }
                counts[bin][q] += 1;
            }
        }
        for (s, k) in sums.iter().zip(&counts) {
            for c in 0..3 {
                let means: Vec<f64> = s.iter().zip(k).map(|(sq, kq)| sq[c] / (*kq).max(1) as f64).collect();
                let mean = means.iter().sum::<f64>() / 4.0;
                let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / 4.0;
                assert!(var <= 1e-8 * mean.abs().max(1e-300), "var {var} mean {mean}");
            }
        }
    }

    #[test]
    fn coverage_degenerate_geometry() {
        let mut scene = SceneConfig { d_light: 0.5, d_camera: 0.5, ..small_scene() };
        scene.grating.period_a_nm = 1e9;
        let report = coverage_report(&scene, &SpectralGrid::default()).unwrap();
        assert_eq!(report.fraction, 0.0);
    }

    #[test]
    fn coverage_fine_pitch_misses_red() {
        let scene = SceneConfig::fine_pitch();
        let grid = SpectralGrid::default();
        // Oracle: grating equation by hand at the annulus edges and middle,
        // first order (m = -1) on a 500 nm period.
        let oracle = |r: f64| {
            let s_spec = r / (r * r + 0.03f64 * 0.03).sqrt();
            let s_out = -r / (r * r + 0.25f64).sqrt();
            500.0 * (s_spec - s_out)
        };
        let (l25, l40, l58) = (oracle(0.025), oracle(0.040), oracle(0.058));
        assert!(l25 < 400.0 && (400.0..700.0).contains(&l40) && l58 < 520.0);
        let report = coverage_report(&scene, &grid).unwrap();
        assert!(report.lambda_max_hit.unwrap() <= l58 + 1e-9);
        let bin = |l: f64| ((l - 400.0) / 5.0).round() as usize;
        assert!(report.hits[bin(l40)] > 0);
        assert!(report.hits[bin(l58)] > 0);
        assert!(report.hits[bin(600.0)..].iter().all(|h| *h == 0));
        assert!(report.fraction < 0.5);
    }

    #[test]
    fn coverage_mode_covers_band() {
        let report = coverage_report(&SceneConfig::coverage_mode(), &SpectralGrid::default()).unwrap();
        assert_eq!(report.fraction, 1.0);
    }

    #[test]
    fn coverage_monotone_in_order() {
        let mut prev = 0.0;
        for max_order in 1..=12 {
            let mut scene = SceneConfig::fine_pitch();
            scene.grating.max_order = max_order;
            scene.d_light = 0.08;
            let f = coverage_report(&scene, &SpectralGrid::default()).unwrap().fraction;
            assert!(f >= prev);
            prev = f;
        }
    }

    #[test]
    fn scene_validation_and_json() {
        assert!(SceneConfig { r_inner: 0.07, ..SceneConfig::default() }.validate().is_err());
        assert!(SceneConfig { image_size: 8, ..SceneConfig::default() }.validate().is_err());
        assert!(SceneConfig { n_radial_bins: 3, ..SceneConfig::default() }.validate().is_err());
        let json = serde_json::to_value(SceneConfig::default()).unwrap();
        for key in ["period_a_nm", "depth_h0_nm", "reflectivity", "max_order"] {
            assert!(json["grating"].get(key).is_some());
        }
        let back: SceneConfig = serde_json::from_value(json).unwrap();
        assert_eq!(back, SceneConfig::default());
    }
}
