//! Reconstruction of a spotlight's relative spectral power distribution from
//! a rendered image of a diffractive compact disc.
//!
//! The forward model ([`imager`]) renders the disc's diffraction rings for a
//! given SPD; [`synth`] produces training spectra; [`mlp`] learns the inverse
//! map from radial ring colours back to the spectrum; [`metrics`] scores it.

pub mod cli;
pub mod error;
pub mod image;
pub mod imager;
pub mod metrics;
pub mod mlp;
pub mod optics;
pub mod pipeline;
pub mod plot;
pub mod spectral;
pub mod synth;

pub use error::{Error, Result};
pub use image::RgbImage;
pub use imager::{
    apply_annulus_mask, coverage_report, radial_features, render_cd_image, CoverageReport, FeatureVector,
    RenderPlan, SceneConfig,
};
pub use metrics::{evaluate_set, mae, pearson, psnr, rmse, Metrics};
pub use mlp::{adam_step, init_model, predict_spd, train, AdamState, Checkpoint, MlpModel, TrainConfig};
pub use optics::{diffracted_sine, order_efficiency, wavelength_for_geometry, Diffracted, GratingParams};
pub use spectral::{encode_srgb, normalize_peak, resample_spd, spd_to_rgb, ColorResponse, SpectralGrid, Spd};
pub use synth::{generate_dataset, generate_spd, Seed, SpdGenConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
