//! Post-selection regions on the `(mu_h, mu_v)` quarter plane.
//!
//! A region is a polar sector `polar_min <= atan2(mu_v, mu_h) <= polar_max`,
//! `radius_min <= |(mu_h, mu_v)| <= radius_max`, clipped to the
//! `mu_h, mu_v <= mu_max` box. Z regions carry a fixed state; X regions assign
//! D or A through windows on the relative phase.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase_source::PulseSample;
use crate::{Basis, State};

/// Membership is tracked as a 64-bit mask.
pub const MAX_REGIONS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AzimuthWindow {
    pub start: f64,
    pub end: f64,
    pub state: State,
}

impl AzimuthWindow {
    pub fn contains(&self, phi: f64) -> bool {
        phi >= self.start && phi <= self.end
    }

    pub fn width(&self) -> f64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub label: String,
    pub polar_min: f64,
    pub polar_max: f64,
    #[serde(default)]
    pub radius_min: f64,
    /// `None` leaves the sector bounded only by the intensity box.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius_max: Option<f64>,
    /// Fixed state for regions without phase selection.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<State>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub azimuth_windows: Vec<AzimuthWindow>,
    /// Regions sharing a group label are pooled into one decoy constraint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decoy_group: Option<String>,
    /// Part of the key-generating Z region.
    #[serde(default)]
    pub key: bool,
}

impl Region {
    pub fn basis(&self) -> Basis {
        match self.state {
            Some(s) => s.basis(),
            None => self
                .azimuth_windows
                .first()
                .map_or(Basis::X, |w| w.state.basis()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("region `{}`: {msg}", self.label)));
        if self.label.is_empty() || self.label.contains([',', '"', '\n']) {
            return bad("labels must be non-empty and free of commas, quotes and newlines".into());
        }
        if !(0.0 <= self.polar_min && self.polar_min <= self.polar_max && self.polar_max <= FRAC_PI_2)
        {
            return bad(format!(
                "polar range [{}, {}] must satisfy 0 <= min <= max <= pi/2",
                self.polar_min, self.polar_max
            ));
        }
        if !(self.radius_min.is_finite() && self.radius_min >= 0.0) {
            return bad(format!("radius_min = {} must be >= 0", self.radius_min));
        }
        if let Some(r) = self.radius_max {
            if !(r.is_finite() && r > 0.0 && r >= self.radius_min) {
                return bad(format!("radius_max = {r} must be positive and >= radius_min"));
            }
        }
        match (self.state, self.azimuth_windows.is_empty()) {
            (Some(_), false) => return bad("set either `state` or `azimuth_windows`, not both".into()),
            (None, true) => return bad("needs a `state` or at least one azimuth window".into()),
            _ => {}
        }
        let mut windows = self.azimuth_windows.clone();
        windows.sort_by(|a, b| a.start.total_cmp(&b.start));
        for w in &windows {
            if !(0.0 <= w.start && w.start < w.end && w.end <= TAU) {
                return bad(format!(
                    "azimuth window [{}, {}] must be a non-empty sub-interval of [0, 2pi]",
                    w.start, w.end
                ));
            }
            if w.state.basis() != windows[0].state.basis() {
                return bad("azimuth windows mix bases".into());
            }
        }
        if windows.windows(2).any(|p| p[1].start <= p[0].end) {
            return bad("azimuth windows overlap".into());
        }
        Ok(())
    }

    /// Polar and radial test, ignoring the phase.
    #[inline]
    pub fn contains_intensities(&self, mu_h: f64, mu_v: f64) -> bool {
        let polar = mu_v.atan2(mu_h);
        let radius = mu_h.hypot(mu_v);
        self.contains_polar(polar, radius)
    }

    #[inline]
    fn contains_polar(&self, polar: f64, radius: f64) -> bool {
        polar >= self.polar_min
            && polar <= self.polar_max
            && radius >= self.radius_min
            && self.radius_max.is_none_or(|r| radius <= r)
    }

    /// State assigned at relative phase `phi`, if any.
    #[inline]
    pub fn state_at(&self, phi: f64) -> Option<State> {
        match self.state {
            Some(s) => Some(s),
            None => self
                .azimuth_windows
                .iter()
                .find(|w| w.contains(phi))
                .map(|w| w.state),
        }
    }

    /// Fraction of the uniform phase distribution selected by the region.
    pub fn azimuth_fraction(&self) -> f64 {
        if self.state.is_some() {
            1.0
        } else {
            self.azimuth_windows.iter().map(AzimuthWindow::width).sum::<f64>() / TAU
        }
    }

    /// Phase intervals the region integrates over.
    pub(crate) fn phase_intervals(&self) -> Vec<(f64, f64)> {
        if self.state.is_some() {
            vec![(0.0, TAU)]
        } else {
            self.azimuth_windows.iter().map(|w| (w.start, w.end)).collect()
        }
    }
}

/// Set of region indices a sample belongs to.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Membership(u64);

impl Membership {
    pub fn insert(&mut self, idx: usize) {
        debug_assert!(idx < MAX_REGIONS);
        self.0 |= 1 << idx;
    }

    pub fn contains(&self, idx: usize) -> bool {
        idx < MAX_REGIONS && self.0 & (1 << idx) != 0
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let i = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(i)
            }
        })
    }
}

/// Which regions a sample falls in and the state Alice assigns it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SiftOutcome {
    pub regions: Membership,
    pub state: Option<State>,
}

/// Classifies one sample against a region list.
///
/// The state label is taken from the first matching region.
pub fn classify(s: &PulseSample, regions: &[Region]) -> SiftOutcome {
    classify_point(s.mu_h, s.mu_v, s.phi_hv, regions)
}

/// Classifies raw coordinates; a NaN phase matches no azimuth window.
pub fn classify_point(mu_h: f64, mu_v: f64, phi: f64, regions: &[Region]) -> SiftOutcome {
    let polar = mu_v.atan2(mu_h);
    let radius = mu_h.hypot(mu_v);
    let mut out = SiftOutcome::default();
    for (i, region) in regions.iter().enumerate() {
        if !region.contains_polar(polar, radius) {
            continue;
        }
        if let Some(state) = region.state_at(phi) {
            out.regions.insert(i);
            out.state.get_or_insert(state);
        }
    }
    out
}

/// Geometry knobs of the standard region layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegionParams {
    /// Polar tolerance of the Z triangles, radians.
    pub delta_z: f64,
    /// Full polar width of the X sectors around pi/4, radians.
    pub delta_x: f64,
    /// Full width of each D/A phase window, radians.
    pub delta_phi: f64,
    /// Radius of the largest decoy sector.
    pub r_max: f64,
    /// Decoy sector scale factors.
    pub t: Vec<f64>,
}

impl Default for RegionParams {
    fn default() -> Self {
        RegionParams {
            delta_z: 0.02,
            delta_x: 0.2,
            delta_phi: 0.2,
            r_max: 0.5,
            t: vec![1.0, 0.5, 0.1],
        }
    }
}

impl RegionParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("regions.delta_z", self.delta_z),
            ("regions.delta_x", self.delta_x),
            ("regions.delta_phi", self.delta_phi),
            ("regions.r_max", self.r_max),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.t.is_empty() {
            return Err(Error::Config("regions.t needs at least one scale factor".into()));
        }
        if let Some(t) = self.t.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
            return Err(Error::Config(format!("regions.t entries must lie in (0, 1], got {t}")));
        }
        if self.delta_z >= FRAC_PI_4 - self.delta_x / 2.0 {
            return Err(Error::Config(format!(
                "regions.delta_z = {} overlaps the X sectors (needs delta_z < pi/4 - delta_x/2 = {})",
                self.delta_z,
                FRAC_PI_4 - self.delta_x / 2.0
            )));
        }
        if self.delta_phi >= PI {
            return Err(Error::Config(format!(
                "regions.delta_phi = {} makes the D and A windows overlap",
                self.delta_phi
            )));
        }
        Ok(())
    }
}

/// Builds the standard layout.
///
/// * `Z_H`, `Z_V`: key triangles, polar `[0, dz]` and `[pi/2 - dz, pi/2]`,
///   bounded only by the box.
/// * `ZH{i}`, `ZV{i}`: the same polar ranges cut at `t_i r_max`, pooled as
///   decoy group `Z{i}` for the Z-basis yield bound.
/// * `X{i}`: polar `pi/4 +- dx/2`, radius `t_i r_max`, with D windows
///   `[0, dphi/2]`, `[2pi - dphi/2, 2pi]` and an A window `pi +- dphi/2`.
///
/// Decoy indices count from 1 in order of decreasing `t`.
pub fn standard_regions(params: &RegionParams) -> Result<Vec<Region>> {
    params.validate()?;
    let mut ts = params.t.clone();
    ts.sort_by(|a, b| b.total_cmp(a));
    if 2 + 3 * ts.len() > MAX_REGIONS {
        return Err(Error::Config(format!(
            "at most {} decoy scale factors are supported",
            (MAX_REGIONS - 2) / 3
        )));
    }

    let dz = params.delta_z;
    let half_x = params.delta_x / 2.0;
    let half_phi = params.delta_phi / 2.0;
    let z = |label: String, state: State, radius_max: Option<f64>, group: Option<String>| {
        let (polar_min, polar_max) = match state {
            State::H => (0.0, dz),
            _ => (FRAC_PI_2 - dz, FRAC_PI_2),
        };
        Region {
            label,
            polar_min,
            polar_max,
            radius_min: 0.0,
            radius_max,
            state: Some(state),
            azimuth_windows: Vec::new(),
            decoy_group: group,
            key: false,
        }
    };

    let mut regions = vec![
        Region {
            key: true,
            ..z("Z_H".into(), State::H, None, None)
        },
        Region {
            key: true,
            ..z("Z_V".into(), State::V, None, None)
        },
    ];
    for (i, t) in ts.iter().enumerate() {
        let radius = Some(t * params.r_max);
        let group = format!("Z{}", i + 1);
        regions.push(z(format!("ZH{}", i + 1), State::H, radius, Some(group.clone())));
        regions.push(z(format!("ZV{}", i + 1), State::V, radius, Some(group)));
    }
    for (i, t) in ts.iter().enumerate() {
        let label = format!("X{}", i + 1);
        regions.push(Region {
            label: label.clone(),
            polar_min: FRAC_PI_4 - half_x,
            polar_max: FRAC_PI_4 + half_x,
            radius_min: 0.0,
            radius_max: Some(t * params.r_max),
            state: None,
            azimuth_windows: vec![
                AzimuthWindow {
                    start: 0.0,
                    end: half_phi,
                    state: State::D,
                },
                AzimuthWindow {
                    start: PI - half_phi,
                    end: PI + half_phi,
                    state: State::A,
                },
                AzimuthWindow {
                    start: TAU - half_phi,
                    end: TAU,
                    state: State::D,
                },
            ],
            decoy_group: Some(label),
            key: false,
        });
    }
    Ok(regions)
}
