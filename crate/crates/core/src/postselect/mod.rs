//! Intensity reshaping and region-based sifting on `(mu_h, mu_v, phi)`.

mod density;
mod region;
mod reshape;

pub use density::ReshapedDensity;
pub use region::{
    classify, classify_point, standard_regions, AzimuthWindow, Membership, Region, RegionParams, SiftOutcome,
    MAX_REGIONS,
};
pub use reshape::{compute_c, scaled_pdf_minimum, ReshapeSpec};

use crate::error::{Error, Result};
use crate::phase_source::LocalReadout;

/// Arguments beyond +-1 by more than this are flagged as clamped.
pub const AZIMUTH_CLAMP_TOL: f64 = 1e-9;

/// Relative phase recovered from local intensity readings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Azimuth {
    /// Angle in `[0, pi]`.
    pub angle: f64,
    /// Set when the arccos argument left `[-1, 1]` by more than [`AZIMUTH_CLAMP_TOL`].
    pub clamped: bool,
}

/// Recovers `phi` from `(mu_d - mu_a) / (2 sqrt(mu_h mu_v))`.
///
/// The argument is always clamped into `[-1, 1]`; only excursions larger than
/// the tolerance are reported. Angles are folded into `[0, pi]`, so the sign of
/// `sin(phi)` is not recoverable from these readings.
pub fn azimuth(r: &LocalReadout) -> Result<Azimuth> {
    let prod = r.mu_h * r.mu_v;
    if !prod.is_finite() || !r.mu_d.is_finite() || !r.mu_a.is_finite() {
        return Err(Error::domain("local readout", prod, "finite values"));
    }
    if prod <= 0.0 {
        return Err(Error::UndefinedAzimuth);
    }
    let arg = (r.mu_d - r.mu_a) / (2.0 * prod.sqrt());
    let clamped = arg.abs() > 1.0 + AZIMUTH_CLAMP_TOL;
    Ok(Azimuth {
        angle: arg.clamp(-1.0, 1.0).acos(),
        clamped,
    })
}
