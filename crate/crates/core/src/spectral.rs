//! Wavelength grids, relative spectral power distributions and conversion of
//! spectra to linear RGB through tabulated colour-matching functions.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniformly spaced wavelength axis, in nanometres. Both endpoints are bin
/// centres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralGrid {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub n_bins: usize,
}

impl Default for SpectralGrid {
    /// 400–700 nm in 5 nm steps.
    fn default() -> Self {
        SpectralGrid { lambda_min: 400.0, lambda_max: 700.0, n_bins: 61 }
    }
}

impl SpectralGrid {
    pub fn new(lambda_min: f64, lambda_max: f64, n_bins: usize) -> Result<Self> {
        let grid = SpectralGrid { lambda_min, lambda_max, n_bins };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_min.is_finite() && self.lambda_max.is_finite()) {
            return Err(Error::InvalidGrid("non-finite bounds".into()));
        }
        if self.lambda_min >= self.lambda_max {
            return Err(Error::InvalidGrid(format!(
                "lambda_min {} must be below lambda_max {}",
                self.lambda_min, self.lambda_max
            )));
        }
        if self.n_bins < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 bins, got {}", self.n_bins)));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        (self.lambda_max - self.lambda_min) / (self.n_bins - 1) as f64
    }

    pub fn wavelength(&self, k: usize) -> f64 {
        self.lambda_min + k as f64 * (self.lambda_max - self.lambda_min) / (self.n_bins - 1) as f64
    }

    pub fn wavelengths(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_bins).map(move |k| self.wavelength(k))
    }

    pub fn contains(&self, lambda: f64) -> bool {
        lambda >= self.lambda_min && lambda <= self.lambda_max
    }

    /// Left bin index and interpolation fraction for `lambda`, or `None`
    /// outside the grid.
    pub fn locate(&self, lambda: f64) -> Option<(usize, f64)> {
        if !self.contains(lambda) {
            return None;
        }
        let pos = (lambda - self.lambda_min) / self.step();
        let k = (pos.floor() as usize).min(self.n_bins - 2);
        Some((k, pos - k as f64))
    }

    /// Trapezoidal quadrature weights over the bin centres.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let h = self.step();
        let mut w = vec![h; self.n_bins];
        w[0] = 0.5 * h;
        w[self.n_bins - 1] = 0.5 * h;
        w
    }
}

/// Relative spectral power distribution sampled on a [`SpectralGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Spd {
    grid: SpectralGrid,
    power: Vec<f64>,
}

impl Spd {
    pub fn new(grid: SpectralGrid, power: Vec<f64>) -> Result<Self> {
        grid.validate()?;
        if power.len() != grid.n_bins {
            return Err(Error::InvalidSpd(format!(
                "{} samples for a {}-bin grid",
                power.len(),
                grid.n_bins
            )));
        }
        if let Some(bad) = power.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidSpd(format!("sample {bad} is negative or non-finite")));
        }
        Ok(Spd { grid, power })
    }

    /// Constant unit power over `grid`.
    pub fn flat(grid: SpectralGrid) -> Self {
        Spd { grid, power: vec![1.0; grid.n_bins] }
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn power(&self) -> &[f64] {
        &self.power
    }

    pub fn into_power(self) -> Vec<f64> {
        self.power
    }

    pub fn peak(&self) -> f64 {
        self.power.iter().copied().fold(0.0, f64::max)
    }

    /// Linearly interpolated power at `lambda`; zero outside the grid.
    pub fn value_at(&self, lambda: f64) -> f64 {
        match self.grid.locate(lambda) {
            Some((k, t)) => (1.0 - t) * self.power[k] + t * self.power[k + 1],
            None => 0.0,
        }
    }

    pub fn scaled(&self, k: f64) -> Result<Spd> {
        Spd::new(self.grid, self.power.iter().map(|p| p * k).collect())
    }

    /// Writes `wavelength_nm,relative_power` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let mut write = || -> std::io::Result<()> {
            writeln!(out, "wavelength_nm,relative_power")?;
            for (lambda, p) in self.grid.wavelengths().zip(&self.power) {
                writeln!(out, "{lambda},{p}")?;
            }
            out.flush()
        };
        write().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Spd> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
        let headers = reader.headers().map_err(|e| Error::csv(path, e))?;
        if headers.iter().collect::<Vec<_>>() != ["wavelength_nm", "relative_power"] {
            return Err(Error::InvalidSpd(format!(
                "{}: expected header wavelength_nm,relative_power",
                path.display()
            )));
        }
        let mut lambdas = Vec::new();
        let mut power = Vec::new();
        for record in reader.deserialize::<(f64, f64)>() {
            let (lambda, p) = record.map_err(|e| Error::csv(path, e))?;
            lambdas.push(lambda);
            power.push(p);
        }
        let grid = grid_from_wavelengths(&lambdas)
            .map_err(|e| Error::InvalidSpd(format!("{}: {e}", path.display())))?;
        Spd::new(grid, power)
    }
}

/// Recovers a uniform grid from listed bin centres.
pub fn grid_from_wavelengths(lambdas: &[f64]) -> Result<SpectralGrid> {
    if lambdas.len() < 2 {
        return Err(Error::InvalidGrid("fewer than two wavelengths".into()));
    }
    let grid = SpectralGrid::new(lambdas[0], lambdas[lambdas.len() - 1], lambdas.len())?;
    let tol = 1e-6 * grid.step();
    for (k, &lambda) in lambdas.iter().enumerate() {
        if (lambda - grid.wavelength(k)).abs() > tol {
            return Err(Error::InvalidGrid(format!("wavelength {lambda} breaks uniform spacing")));
        }
    }
    Ok(grid)
}

/// Linear interpolation of `spd` at the bin centres of `target`.
pub fn resample_spd(spd: &Spd, target: &SpectralGrid) -> Result<Spd> {
    target.validate()?;
    let src = spd.grid();
    if src.lambda_max < target.lambda_min || target.lambda_max < src.lambda_min {
        return Err(Error::DisjointGrids);
    }
    if src == target {
        return Ok(spd.clone());
    }
    let power = target.wavelengths().map(|lambda| spd.value_at(lambda)).collect();
    Spd::new(*target, power)
}

/// Scales `spd` so its maximum sample is exactly 1.
pub fn normalize_peak(spd: &Spd) -> Result<Spd> {
    normalize_samples(spd.power().to_vec()).map(|power| Spd { grid: spd.grid, power })
}

pub(crate) fn normalize_samples(mut power: Vec<f64>) -> Result<Vec<f64>> {
    if power.iter().any(|p| !p.is_finite()) {
        return Err(Error::DegenerateSpd);
    }
    let peak = power.iter().copied().fold(0.0, f64::max);
    if peak <= 0.0 {
        return Err(Error::DegenerateSpd);
    }
    for p in &mut power {
        *p /= peak;
    }
    Ok(power)
}

/// Three non-negative response curves on a grid plus a linear map to the
/// output RGB primaries.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorResponse {
    grid: SpectralGrid,
    curves: [Vec<f64>; 3],
    transform: [[f64; 3]; 3],
}

impl Default for ColorResponse {
    fn default() -> Self {
        ColorResponse::cie1931_srgb()
    }
}

impl ColorResponse {
    pub fn new(grid: SpectralGrid, curves: [Vec<f64>; 3], transform: [[f64; 3]; 3]) -> Result<Self> {
        grid.validate()?;
        for c in &curves {
            if c.len() != grid.n_bins {
                return Err(Error::InvalidArgument("response curve length differs from grid".into()));
            }
            if c.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::InvalidArgument("response curves must be non-negative".into()));
            }
        }
        if det3(&transform).abs() < 1e-12 {
            return Err(Error::InvalidArgument("colour transform is singular".into()));
        }
        Ok(ColorResponse { grid, curves, transform })
    }

    /// CIE 1931 2° observer with identity transform (output is XYZ).
    pub fn cie1931_xyz() -> Self {
        ColorResponse {
            grid: SpectralGrid::default(),
            curves: [CIE_1931_X.to_vec(), CIE_1931_Y.to_vec(), CIE_1931_Z.to_vec()],
            transform: IDENTITY,
        }
    }

    /// CIE 1931 2° observer followed by the XYZ to linear sRGB (D65) matrix.
    pub fn cie1931_srgb() -> Self {
        ColorResponse { transform: XYZ_TO_LINEAR_SRGB, ..Self::cie1931_xyz() }
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn transform(&self) -> &[[f64; 3]; 3] {
        &self.transform
    }

    /// Interpolated raw curve values at `lambda`, zero outside the grid.
    pub fn curves_at(&self, lambda: f64) -> [f64; 3] {
        match self.grid.locate(lambda) {
            Some((k, t)) => {
                let at = |c: &Vec<f64>| (1.0 - t) * c[k] + t * c[k + 1];
                [at(&self.curves[0]), at(&self.curves[1]), at(&self.curves[2])]
            }
            None => [0.0; 3],
        }
    }

    /// Output RGB of a unit-power monochromatic sample at `lambda`.
    pub fn monochromatic(&self, lambda: f64) -> [f64; 3] {
        apply3(&self.transform, self.curves_at(lambda))
    }
}

/// Linear RGB of a gridded SPD using trapezoidal quadrature over its grid.
pub fn spd_to_rgb(spd: &Spd, response: &ColorResponse) -> [f64; 3] {
    let weights = spd.grid().trapezoid_weights();
    let mut acc = [0.0; 3];
    for ((lambda, p), w) in spd.grid().wavelengths().zip(spd.power()).zip(weights) {
        let c = response.curves_at(lambda);
        for (a, c) in acc.iter_mut().zip(c) {
            *a += w * p * c;
        }
    }
    apply3(&response.transform, acc)
}

/// Linear RGB of a sparse list of `(wavelength nm, power)` samples, each
/// with unit weight.
pub fn samples_to_rgb(samples: &[(f64, f64)], response: &ColorResponse) -> [f64; 3] {
    let mut acc = [0.0; 3];
    for &(lambda, p) in samples {
        let c = response.curves_at(lambda);
        for (a, c) in acc.iter_mut().zip(c) {
            *a += p * c;
        }
    }
    apply3(&response.transform, acc)
}

/// sRGB transfer curve after clamping to [0, 1].
pub fn encode_srgb(rgb: [f64; 3]) -> [f64; 3] {
    rgb.map(|c| {
        let c = c.clamp(0.0, 1.0);
        if c <= 0.0031308 {
            12.92 * c
        } else if c == 1.0 {
            1.0
        } else {
            1.055 * c.powf(1.0 / 2.4) - 0.055
        }
    })
}

pub(crate) fn apply3(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

const IDENTITY: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

pub const XYZ_TO_LINEAR_SRGB: [[f64; 3]; 3] = [
    [3.2404542, -1.5371385, -0.4985314],
    [-0.9692660, 1.8760108, 0.0415560],
    [0.0556434, -0.2040259, 1.0572252],
];

// CIE 1931 2° standard observer, 400–700 nm at 5 nm.
#[rustfmt::skip]
pub const CIE_1931_X: [f64; 61] = [
    0.01431, 0.02319, 0.04351, 0.07763, 0.13438, 0.21477, 0.2839, 0.3285, 0.34828, 0.34806,
    0.3362, 0.3187, 0.2908, 0.2511, 0.19536, 0.1421, 0.09564, 0.05795, 0.03201, 0.0147,
    0.0049, 0.0024, 0.0093, 0.0291, 0.06327, 0.1096, 0.1655, 0.22575, 0.2904, 0.3597,
    0.43345, 0.51205, 0.5945, 0.6784, 0.7621, 0.8425, 0.9163, 0.9786, 1.0263, 1.0567,
    1.0622, 1.0456, 1.0026, 0.9384, 0.85445, 0.7514, 0.6424, 0.5419, 0.4479, 0.3608,
    0.2835, 0.2187, 0.1649, 0.1212, 0.0874, 0.0636, 0.04677, 0.0329, 0.0227, 0.01584,
    0.011359,
];

#[rustfmt::skip]
pub const CIE_1931_Y: [f64; 61] = [
    0.000396, 0.00064, 0.00121, 0.00218, 0.004, 0.0073, 0.0116, 0.01684, 0.023, 0.0298,
    0.038, 0.048, 0.06, 0.0739, 0.09098, 0.1126, 0.13902, 0.1693, 0.20802, 0.2586,
    0.323, 0.4073, 0.503, 0.6082, 0.71, 0.7932, 0.862, 0.91485, 0.954, 0.9803,
    0.99495, 1.0, 0.995, 0.9786, 0.952, 0.9154, 0.87, 0.8163, 0.757, 0.6949,
    0.631, 0.5668, 0.503, 0.4412, 0.381, 0.321, 0.265, 0.217, 0.175, 0.1382,
    0.107, 0.0816, 0.061, 0.04458, 0.032, 0.0232, 0.017, 0.01192, 0.00821, 0.005723,
    0.004102,
];

#[rustfmt::skip]
pub const CIE_1931_Z: [f64; 61] = [
    0.06785, 0.1102, 0.2074, 0.3713, 0.6456, 1.03905, 1.3856, 1.62296, 1.74706, 1.7826,
    1.77211, 1.7441, 1.6692, 1.5281, 1.28764, 1.0419, 0.81295, 0.6162, 0.46518, 0.3533,
    0.272, 0.2123, 0.1582, 0.1117, 0.07825, 0.05725, 0.04216, 0.02984, 0.0203, 0.0134,
    0.00875, 0.00575, 0.0039, 0.00275, 0.0021, 0.0018, 0.00165, 0.0014, 0.0011, 0.001,
    0.0008, 0.0006, 0.00034, 0.00024, 0.00019, 0.0001, 0.00005, 0.00003, 0.00002, 0.00001,
    0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
    0.0,
];

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_point() -> Spd {
        Spd::new(SpectralGrid::new(400.0, 500.0, 2).unwrap(), vec![0.0, 1.0]).unwrap()
    }

    fn one_bin_at(lambda: f64) -> SpectralGrid {
        SpectralGrid { lambda_min: lambda, lambda_max: lambda + 10.0, n_bins: 2 }
    }

    #[test]
    fn grid_bin_centres() {
        let g = SpectralGrid::default();
        assert_eq!(g.wavelength(0), 400.0);
        assert_eq!(g.wavelength(60), 700.0);
        assert_eq!(g.wavelength(30), 550.0);
        assert_eq!(g.step(), 5.0);
        assert!(SpectralGrid::new(500.0, 400.0, 10).is_err());
        assert!(SpectralGrid::new(400.0, 700.0, 1).is_err());
    }

    #[test]
    fn resample_identity() {
        let g = SpectralGrid::default();
        let spd = Spd::new(g, g.wavelengths().map(|l| (l / 100.0).sin().abs()).collect()).unwrap();
        assert_eq!(resample_spd(&spd, &g).unwrap(), spd);
    }

    #[test]
    fn resample_midpoint_and_fill() {
        let spd = two_point();
        assert_eq!(resample_spd(&spd, &one_bin_at(450.0)).unwrap().power()[0], 0.5);
        let out = resample_spd(&spd, &SpectralGrid::new(500.0, 600.0, 2).unwrap()).unwrap();
        assert_eq!(out.power(), &[1.0, 0.0]);
    }

    #[test]
    fn resample_disjoint() {
        let err = resample_spd(&two_point(), &one_bin_at(600.0)).unwrap_err();
        assert_eq!(err.to_string(), "disjoint grids");
    }

    #[test]
    fn normalize_examples() {
        let g = SpectralGrid::new(400.0, 410.0, 2).unwrap();
        let n = normalize_peak(&Spd::new(g, vec![0.2, 0.4]).unwrap()).unwrap();
        assert_eq!(n.power(), &[0.5, 1.0]);
        let n = normalize_peak(&Spd::new(g, vec![1.0, 0.3]).unwrap()).unwrap();
        assert_eq!(n.power(), &[1.0, 0.3]);
        let g3 = SpectralGrid::new(400.0, 410.0, 3).unwrap();
        let err = normalize_peak(&Spd::new(g3, vec![0.0; 3]).unwrap()).unwrap_err();
        assert_eq!(err.to_string(), "degenerate SPD");
        assert!(normalize_samples(vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn spd_rejects_negative() {
        let g = SpectralGrid::new(400.0, 410.0, 2).unwrap();
        assert!(Spd::new(g, vec![-0.1, 1.0]).is_err());
        assert!(Spd::new(g, vec![1.0]).is_err());
    }

    #[test]
    fn empty_samples_are_black() {
        assert_eq!(samples_to_rgb(&[], &ColorResponse::default()), [0.0; 3]);
    }

    #[test]
    fn equal_energy_is_white_point() {
        // Oracle: trapezoid sums straight off the tables.
        let tr = |t: &[f64; 61]| 5.0 * (t.iter().sum::<f64>() - 0.5 * (t[0] + t[60]));
        let (x, y, z) = (tr(&CIE_1931_X), tr(&CIE_1931_Y), tr(&CIE_1931_Z));
        let xyz = spd_to_rgb(&Spd::flat(SpectralGrid::default()), &ColorResponse::cie1931_xyz());
        for (a, b) in xyz.iter().zip([x, y, z]) {
            assert!((a - b).abs() < 1e-12 * b);
        }
        let s = x + y + z;
        assert!((x / s - 1.0 / 3.0).abs() < 0.01, "x = {}", x / s);
        assert!((y / s - 1.0 / 3.0).abs() < 0.01, "y = {}", y / s);
    }

    #[test]
    fn sparse_samples_unit_weight() {
        let r = ColorResponse::cie1931_xyz();
        let rgb = samples_to_rgb(&[(550.0, 2.0)], &r);
        assert_eq!(rgb, [2.0 * CIE_1931_X[30], 2.0 * CIE_1931_Y[30], 2.0 * CIE_1931_Z[30]]);
        assert_eq!(samples_to_rgb(&[(900.0, 1.0)], &r), [0.0; 3]);
    }

    #[test]
    fn srgb_encoding() {
        assert_eq!(encode_srgb([0.0; 3]), [0.0; 3]);
        assert_eq!(encode_srgb([1.0; 3]), [1.0; 3]);
        let mid = 1.055 * 0.5f64.powf(1.0 / 2.4) - 0.055;
        assert!((mid - 0.7354).abs() < 1e-4);
        assert_eq!(encode_srgb([0.5; 3]), [mid; 3]);
        assert_eq!(encode_srgb([-2.0, 7.0, 0.001]), [0.0, 1.0, 12.92 * 0.001]);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let g = SpectralGrid::default();
        let spd = Spd::new(g, g.wavelengths().map(|l| 1.0 / l).collect()).unwrap();
        spd.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("wavelength_nm,relative_power\n400,0.0025\n"));
        assert_eq!(Spd::read_csv(&path).unwrap(), spd);
    }

    fn spd_strategy() -> impl Strategy<Value = Spd> {
        prop::collection::vec(0.0f64..10.0, 61)
            .prop_map(|p| Spd::new(SpectralGrid::default(), p).unwrap())
    }

    proptest! {
        #[test]
        fn normalize_idempotent(mut p in prop::collection::vec(0.0f64..5.0, 2..80)) {
            p[0] = 0.5;
            let spd = Spd::new(SpectralGrid::new(380.0, 780.0, p.len()).unwrap(), p).unwrap();
            let once = normalize_peak(&spd).unwrap();
            prop_assert_eq!(once.peak(), 1.0);
            prop_assert_eq!(normalize_peak(&once).unwrap(), once);
        }

        #[test]
        fn rgb_is_linear(a in spd_strategy(), b in spd_strategy(), k in 0.1f64..4.0) {
            let r = ColorResponse::default();
            let sum = Spd::new(
                *a.grid(),
                a.power().iter().zip(b.power()).map(|(x, y)| k * x + y).collect(),
            ).unwrap();
            let lhs = spd_to_rgb(&sum, &r);
            let (ra, rb) = (spd_to_rgb(&a, &r), spd_to_rgb(&b, &r));
            for c in 0..3 {
                let rhs = k * ra[c] + rb[c];
                let scale = (k * ra[c]).abs() + rb[c].abs() + 1e-300;
                prop_assert!((lhs[c] - rhs).abs() <= 1e-12 * scale);
            }
            let doubled = spd_to_rgb(&a.scaled(2.0).unwrap(), &r);
            for c in 0..3 {
                prop_assert!((doubled[c] - 2.0 * ra[c]).abs() <= 1e-12 * ra[c].abs().max(1e-300));
            }
        }
    }
}
