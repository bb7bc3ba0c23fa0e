//! Phase-randomized pulse source and the two passive interference stages.
//!
//! Four pulses with independent uniform phases `phi_1..phi_4` are interfered
//! pairwise: `(1, 2)` sets the H intensity and `(3, 4)` the V intensity. The
//! relative phase of the two components is `phi_v - phi_h` with
//! `phi_h = phi_1 - phi_2` and `phi_v = phi_3 - phi_4`. All intensities are
//! expressed after attenuation, in photons per pulse, with each polarization
//! reaching at most `mu_max_per_pol`.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Source settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceConfig {
    /// Largest per-polarization intensity, photons per pulse.
    pub mu_max_per_pol: f64,
    /// Build samples from a sliding-window pulse train (keeping one window in
    /// four) instead of independent phase quadruples.
    pub train_mode: bool,
    #[serde(skip)]
    pub rng_seed: u64,
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig {
            mu_max_per_pol: 0.5,
            train_mode: false,
            rng_seed: 0,
        }
    }
}

impl SourceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu_max_per_pol.is_finite() && self.mu_max_per_pol > 0.0) {
            return Err(Error::Config(format!(
                "source.mu_max_per_pol must be positive, got {}",
                self.mu_max_per_pol
            )));
        }
        Ok(())
    }
}

/// One post-interference signal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseSample {
    pub mu_h: f64,
    pub mu_v: f64,
    /// Relative phase between the V and H components, in `[0, 2pi)`.
    pub phi_hv: f64,
    pub phi_raw: [f64; 4],
    /// True when the sample shares no raw pulse with any other valid sample.
    pub valid: bool,
}

/// What the transmitter's local detectors report for one pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalReadout {
    pub mu_h: f64,
    pub mu_v: f64,
    pub mu_d: f64,
    pub mu_a: f64,
}

/// Reduces an angle to `[0, 2pi)`.
pub fn wrap_phase(phi: f64) -> f64 {
    let r = phi.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

pub fn sample_phases<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<[f64; 4]> {
    (0..n).map(|_| draw_quadruple(rng)).collect()
}

#[inline]
pub(crate) fn draw_quadruple<R: Rng + ?Sized>(rng: &mut R) -> [f64; 4] {
    [draw_phase(rng), draw_phase(rng), draw_phase(rng), draw_phase(rng)]
}

#[inline]
fn draw_phase<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>() * TAU
}

/// Output fraction of a 50:50 interference between two equal pulses.
#[inline]
pub fn interfere(phi_a: f64, phi_b: f64) -> f64 {
    0.5 * (1.0 + (phi_a - phi_b).cos())
}

pub fn make_sample(quadruple: [f64; 4], cfg: &SourceConfig) -> PulseSample {
    let [p1, p2, p3, p4] = quadruple;
    let phi_h = p1 - p2;
    let phi_v = p3 - p4;
    PulseSample {
        mu_h: cfg.mu_max_per_pol * interfere(p1, p2),
        mu_v: cfg.mu_max_per_pol * interfere(p3, p4),
        phi_hv: wrap_phase(phi_v - phi_h),
        phi_raw: quadruple,
        valid: true,
    }
}

/// Arcsine-law density of one polarization's intensity.
pub fn intensity_pdf(mu: f64, mu_max: f64) -> Result<f64> {
    if !(mu > 0.0 && mu < mu_max) {
        return Err(Error::domain("mu", mu, "(0, mu_max)"));
    }
    Ok(1.0 / (PI * (mu * (mu_max - mu)).sqrt()))
}

/// Cumulative distribution matching [`intensity_pdf`]; clamps outside the support.
pub fn intensity_cdf(mu: f64, mu_max: f64) -> f64 {
    if mu <= 0.0 {
        0.0
    } else if mu >= mu_max {
        1.0
    } else {
        2.0 / PI * (mu / mu_max).sqrt().asin()
    }
}

/// Simulates the time-multiplexed pulse train.
///
/// Window `i` interferes pulses `i, i + 1` for H and `i + 2, i + 3` for V, so
/// neighbouring windows share pulses. Only windows starting at a multiple of
/// four are marked valid.
pub fn generate_train<R: Rng + ?Sized>(
    rng: &mut R,
    n_pulses: usize,
    cfg: &SourceConfig,
) -> Result<Vec<PulseSample>> {
    if n_pulses < 8 {
        return Err(Error::domain("n_pulses", n_pulses as f64, "[8, inf)"));
    }
    let phases: Vec<f64> = (0..n_pulses).map(|_| draw_phase(rng)).collect();
    Ok(phases
        .windows(4)
        .enumerate()
        .map(|(i, w)| {
            let mut s = make_sample([w[0], w[1], w[2], w[3]], cfg);
            s.valid = i % 4 == 0;
            s
        })
        .collect())
}

/// Streams valid samples from either source mode.
///
/// Both modes consume the random stream in the same order, four phases per
/// valid sample; train mode simply also materializes the discarded windows.
pub struct PulseStream<'a, R: Rng + ?Sized> {
    rng: &'a mut R,
    cfg: SourceConfig,
    buffer: Vec<PulseSample>,
}

impl<'a, R: Rng + ?Sized> PulseStream<'a, R> {
    pub fn new(rng: &'a mut R, cfg: SourceConfig) -> Self {
        PulseStream {
            rng,
            cfg,
            buffer: Vec::new(),
        }
    }
}

impl<R: Rng + ?Sized> Iterator for PulseStream<'_, R> {
    type Item = PulseSample;

    fn next(&mut self) -> Option<PulseSample> {
        if !self.cfg.train_mode {
            return Some(make_sample(draw_quadruple(self.rng), &self.cfg));
        }
        if self.buffer.is_empty() {
            const CHUNK: usize = 256;
            let train = generate_train(self.rng, 4 * CHUNK, &self.cfg).expect("chunk >= 8");
            self.buffer = train.into_iter().filter(|s| s.valid).collect();
            self.buffer.reverse();
        }
        self.buffer.pop()
    }
}

pub fn local_readout(s: &PulseSample) -> LocalReadout {
    let total = s.mu_h + s.mu_v;
    let cross = 2.0 * (s.mu_h * s.mu_v).sqrt() * s.phi_hv.cos();
    let mu_d = (0.5 * (total + cross)).max(0.0);
    LocalReadout {
        mu_h: s.mu_h,
        mu_v: s.mu_v,
        mu_d,
        mu_a: (total - mu_d).max(0.0),
    }
}
