//! Grating optics for the concentric-track disc: the grating equation in
//! signed-sine form and per-order efficiencies of a binary reflective phase
//! grating (duty cycle 0.5, scalar theory, normal incidence).
//!
//! With round-trip phase `phi = 4 pi h0 / lambda` the efficiencies are
//!
//! ```text
//! eta_0 = R cos^2(phi/2)
//! eta_m = R (2 / (pi |m|))^2 sin^2(phi/2)   for odd m
//! eta_m = 0                                 for even m != 0
//! ```
//!
//! and sum to `R` over all orders.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_ORDER_LIMIT: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GratingParams {
    /// Track spacing, nm.
    pub period_a_nm: f64,
    /// Maximum groove height, nm.
    pub depth_h0_nm: f64,
    pub reflectivity: f64,
    pub max_order: u32,
}

impl Default for GratingParams {
    fn default() -> Self {
        GratingParams { period_a_nm: 500.0, depth_h0_nm: 150.0, reflectivity: 0.8, max_order: 9 }
    }
}

impl GratingParams {
    /// Standard CD track pitch of 1.6 µm, otherwise default.
    pub fn cd_track_pitch() -> Self {
        GratingParams { period_a_nm: 1600.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.period_a_nm > 0.0 && self.period_a_nm.is_finite()) {
            return Err(Error::InvalidGrating(format!("period {} nm", self.period_a_nm)));
        }
        if !(self.depth_h0_nm >= 0.0 && self.depth_h0_nm.is_finite()) {
            return Err(Error::InvalidGrating(format!("depth {} nm", self.depth_h0_nm)));
        }
        if !(self.reflectivity > 0.0 && self.reflectivity <= 1.0) {
            return Err(Error::InvalidGrating(format!("reflectivity {}", self.reflectivity)));
        }
        if self.max_order < 1 || self.max_order > MAX_ORDER_LIMIT {
            return Err(Error::InvalidGrating(format!("max_order {}", self.max_order)));
        }
        Ok(())
    }

    /// All nonzero orders `-M..=M` except 0.
    pub fn nonzero_orders(&self) -> impl Iterator<Item = i32> {
        let m = self.max_order as i32;
        (-m..=m).filter(|&o| o != 0)
    }
}

/// Fraction of incident power sent into order `m` at `lambda_nm`.
///
/// Orders beyond `max_order` are not range-checked here so the full series
/// can be summed.
pub fn order_efficiency(m: i32, lambda_nm: f64, params: &GratingParams) -> Result<f64> {
    if !(lambda_nm > 0.0 && lambda_nm.is_finite()) {
        return Err(Error::InvalidWavelength(lambda_nm));
    }
    let half_phase = 2.0 * PI * params.depth_h0_nm / lambda_nm;
    let eta = if m == 0 {
        half_phase.cos().powi(2)
    } else if m % 2 == 0 {
        0.0
    } else {
        let envelope = 2.0 / (PI * m.unsigned_abs() as f64);
        envelope * envelope * half_phase.sin().powi(2)
    };
    Ok(params.reflectivity * eta)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Diffracted {
    Propagating(f64),
    Evanescent,
}

impl Diffracted {
    pub fn sine(self) -> Option<f64> {
        match self {
            Diffracted::Propagating(s) => Some(s),
            Diffracted::Evanescent => None,
        }
    }
}

/// Grating equation: `sin_out = sin_spec + m lambda / a`.
pub fn diffracted_sine(sin_spec: f64, m: i32, lambda_nm: f64, params: &GratingParams) -> Diffracted {
    let s = sin_spec + m as f64 * lambda_nm / params.period_a_nm;
    if s.abs() > 1.0 {
        Diffracted::Evanescent
    } else {
        Diffracted::Propagating(s)
    }
}

/// Inverse of the grating equation. The result may be non-positive or lie
/// outside any useful band; callers filter.
pub fn wavelength_for_geometry(sin_spec: f64, sin_out: f64, m: i32, params: &GratingParams) -> Result<f64> {
    if m == 0 {
        return Err(Error::ZerothOrder);
    }
    Ok(params.period_a_nm * (sin_out - sin_spec) / m as f64)
}
