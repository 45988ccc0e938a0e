//! Spectral accuracy (MAE, RMSE, Pearson) and image PSNR.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::RgbImage;
use crate::spectral::Spd;

fn paired<'a>(pred: &'a Spd, truth: &'a Spd) -> Result<(&'a [f64], &'a [f64])> {
    if pred.grid() != truth.grid() {
        return Err(Error::GridMismatch("prediction and truth sit on different grids".into()));
    }
    Ok((pred.power(), truth.power()))
}

pub fn mae(pred: &Spd, truth: &Spd) -> Result<f64> {
    let (p, t) = paired(pred, truth)?;
    Ok(mae_slice(p, t))
}

pub fn rmse(pred: &Spd, truth: &Spd) -> Result<f64> {
    let (p, t) = paired(pred, truth)?;
    Ok(rmse_slice(p, t))
}

pub fn pearson(pred: &Spd, truth: &Spd) -> Result<f64> {
    let (p, t) = paired(pred, truth)?;
    pearson_slice(p, t)
}

pub fn mae_slice(p: &[f64], t: &[f64]) -> f64 {
    p.iter().zip(t).map(|(a, b)| (a - b).abs()).sum::<f64>() / p.len() as f64
}

pub fn rmse_slice(p: &[f64], t: &[f64]) -> f64 {
    (p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / p.len() as f64).sqrt()
}

/// Sample Pearson correlation; errors when either side has zero variance.
pub fn pearson_slice(p: &[f64], t: &[f64]) -> Result<f64> {
    let n = p.len() as f64;
    let mp = p.iter().sum::<f64>() / n;
    let mt = t.iter().sum::<f64>() / n;
    let (mut cov, mut vp, mut vt) = (0.0, 0.0, 0.0);
    for (a, b) in p.iter().zip(t) {
        let (da, db) = (a - mp, b - mt);
        cov += da * db;
        vp += da * da;
        vt += db * db;
    }
    if vp <= 0.0 || vt <= 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    Ok((cov / (vp.sqrt() * vt.sqrt())).clamp(-1.0, 1.0))
}

/// `10 log10(peak^2 / MSE)` over all pixels and channels. Identical images
/// give `f64::INFINITY`.
pub fn psnr(a: &RgbImage, b: &RgbImage, peak: f64) -> Result<f64> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(Error::InvalidArgument(format!("PSNR peak {peak}")));
    }
    let sq: f64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .flat_map(|(x, y)| (0..3).map(move |c| (x[c] - y[c]) * (x[c] - y[c])))
        .sum();
    let mse = sq / (3 * a.pixels().len()) as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Set-level averages; `pearson` is averaged over the `n_samples - n_skipped`
/// pairs where it is defined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    pub rmse: f64,
    pub pearson: f64,
    pub n_samples: usize,
    pub n_skipped: usize,
}

pub fn evaluate_set(preds: &[Spd], truths: &[Spd]) -> Result<Metrics> {
    if preds.len() != truths.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions for {} ground truths",
            preds.len(),
            truths.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::InvalidArgument("empty evaluation set".into()));
    }
    let (mut mae_sum, mut rmse_sum, mut r_sum) = (0.0, 0.0, 0.0);
    let mut skipped = 0;
    for (p, t) in preds.iter().zip(truths) {
        mae_sum += mae(p, t)?;
        rmse_sum += rmse(p, t)?;
        match pearson(p, t) {
            Ok(r) => r_sum += r,
            Err(Error::UndefinedCorrelation) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    let n = preds.len();
    let defined = n - skipped;
    Ok(Metrics {
        mae: mae_sum / n as f64,
        rmse: rmse_sum / n as f64,
        pearson: if defined > 0 { r_sum / defined as f64 } else { f64::NAN },
        n_samples: n,
        n_skipped: skipped,
    })
}

/// JSON encoding for PSNR values: finite values as numbers, the identical
/// image sentinel as the string `"inf"`.
pub mod psnr_json {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) if s == "inf" => Ok(f64::INFINITY),
            Repr::Str(s) => Err(serde::de::Error::custom(format!("bad PSNR value {s:?}"))),
        }
    }
}
