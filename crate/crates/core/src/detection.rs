//! Lossy channel and a four-detector BB84 receiver.
//!
//! Each pulse is a two-mode coherent state with amplitudes `sqrt(mu_h)` and
//! `sqrt(mu_v) e^{i phi}`. A fixed polarization rotation with
//! `sin^2(theta_m) = misalignment` models the channel error, Bob picks a basis,
//! and each of the two detectors of that basis clicks independently with
//! probability `1 - (1 - dark) exp(-eta mu_arm)`. Double clicks squash to a
//! uniformly random bit.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase_source::PulseSample;
use crate::postselect::{Region, SiftOutcome};
use crate::{Basis, State};

/// Misalignment giving a Z-key QBER of about 2.2% at the default region
/// tolerances (the Z triangles add roughly 1% on their own).
pub const CALIBRATED_MISALIGNMENT: f64 = 0.012;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelParams {
    pub loss_db: f64,
    pub detector_efficiency: f64,
    /// Dark-count probability per detector per gate.
    pub dark_prob: f64,
    /// Probability that a basis state is flipped by the channel rotation.
    pub misalignment: f64,
    /// Probability that Bob measures in Z.
    pub basis_split: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            loss_db: 16.7,
            detector_efficiency: 0.1,
            dark_prob: 1e-6,
            misalignment: CALIBRATED_MISALIGNMENT,
            basis_split: 0.5,
        }
    }
}

impl ChannelParams {
    /// Overall transmittance including detector efficiency.
    pub fn transmittance(&self) -> f64 {
        self.detector_efficiency * 10f64.powf(-self.loss_db / 10.0)
    }

    pub fn with_loss(self, loss_db: f64) -> Self {
        ChannelParams { loss_db, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.loss_db.is_finite() && self.loss_db >= 0.0) {
            return Err(Error::Config(format!(
                "channel.loss_db must be >= 0, got {}",
                self.loss_db
            )));
        }
        let probs = [
            ("channel.detector_efficiency", self.detector_efficiency),
            ("channel.dark_prob", self.dark_prob),
            ("channel.misalignment", self.misalignment),
            ("channel.basis_split", self.basis_split),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        Ok(())
    }
}

/// Mean photon number reaching each detector (H, V, D, A) before loss.
pub fn arm_intensities(mu_h: f64, mu_v: f64, phi: f64, misalignment: f64) -> [f64; 4] {
    let s = misalignment.sqrt();
    let c = (1.0 - misalignment).sqrt();
    let (sin_phi, cos_phi) = phi.sin_cos();
    let amp_h = mu_h.sqrt();
    let amp_v = mu_v.sqrt();
    // rotated amplitudes, complex as (re, im)
    let bh = (c * amp_h - s * amp_v * cos_phi, -s * amp_v * sin_phi);
    let bv = (s * amp_h + c * amp_v * cos_phi, c * amp_v * sin_phi);
    let norm = |z: (f64, f64)| z.0 * z.0 + z.1 * z.1;
    let d = (bh.0 + bv.0, bh.1 + bv.1);
    let a = (bh.0 - bv.0, bh.1 - bv.1);
    [norm(bh), norm(bv), 0.5 * norm(d), 0.5 * norm(a)]
}

#[inline]
fn click_probability(eta: f64, dark: f64, mu_arm: f64) -> f64 {
    // 1 - (1 - dark) e^{-eta mu} without cancellation at small gains
    -((-dark).ln_1p() - eta * mu_arm).exp_m1()
}

/// Outcome of one pulse at Bob.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectionEvent {
    /// H, V, D, A detector clicks; only the chosen basis can click.
    pub clicks: [bool; 4],
    pub basis: Basis,
    pub squashed: Option<State>,
}

pub fn transmit_and_detect<R: Rng + ?Sized>(
    s: &PulseSample,
    p: &ChannelParams,
    rng: &mut R,
) -> DetectionEvent {
    detect(s.mu_h, s.mu_v, s.phi_hv, p, rng)
}

pub fn detect<R: Rng + ?Sized>(
    mu_h: f64,
    mu_v: f64,
    phi: f64,
    p: &ChannelParams,
    rng: &mut R,
) -> DetectionEvent {
    let basis = if rng.random::<f64>() < p.basis_split {
        Basis::Z
    } else {
        Basis::X
    };
    let arms = arm_intensities(mu_h, mu_v, phi, p.misalignment);
    let offset = match basis {
        Basis::Z => 0,
        Basis::X => 2,
    };
    let eta = p.transmittance();
    let mut clicks = [false; 4];
    for k in offset..offset + 2 {
        clicks[k] = rng.random::<f64>() < click_probability(eta, p.dark_prob, arms[k]);
    }
    let squashed = match (clicks[offset], clicks[offset + 1]) {
        (false, false) => None,
        (true, false) => Some(State::from_slot(basis, 0)),
        (false, true) => Some(State::from_slot(basis, 1)),
        (true, true) => Some(State::from_slot(basis, usize::from(rng.random::<bool>()))),
    };
    DetectionEvent {
        clicks,
        basis,
        squashed,
    }
}

/// Exact squashed-outcome probabilities for one basis, given that Bob
/// measures in it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisClickStats {
    /// Probability of reporting the first (H or D) and second (V or A) state.
    pub outcome: [f64; 2],
}

impl BasisClickStats {
    pub fn gain(&self) -> f64 {
        self.outcome[0] + self.outcome[1]
    }

    /// Probability of a detection that disagrees with `sent`.
    pub fn error_gain(&self, sent: State) -> f64 {
        self.outcome[1 - sent.slot()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClickStats {
    pub z: BasisClickStats,
    pub x: BasisClickStats,
}

impl ClickStats {
    pub fn basis(&self, basis: Basis) -> &BasisClickStats {
        match basis {
            Basis::Z => &self.z,
            Basis::X => &self.x,
        }
    }
}

pub fn analytic_click_stats(mu_h: f64, mu_v: f64, phi: f64, p: &ChannelParams) -> ClickStats {
    let arms = arm_intensities(mu_h, mu_v, phi, p.misalignment);
    let eta = p.transmittance();
    let pair = |first: f64, second: f64| {
        let p1 = click_probability(eta, p.dark_prob, first);
        let p2 = click_probability(eta, p.dark_prob, second);
        let both = p1 * p2;
        BasisClickStats {
            outcome: [p1 * (1.0 - p2) + 0.5 * both, p2 * (1.0 - p1) + 0.5 * both],
        }
    };
    ClickStats {
        z: pair(arms[0], arms[1]),
        x: pair(arms[2], arms[3]),
    }
}

/// Single-photon yield and error yield for a photon in the polarization state
/// `(sqrt(mu_h), sqrt(mu_v) e^{i phi})`, measured in the basis of `sent`, with
/// `sent` as the correct outcome.
pub fn single_photon_stats(
    mu_h: f64,
    mu_v: f64,
    phi: f64,
    sent: State,
    p: &ChannelParams,
) -> (f64, f64) {
    let arms = arm_intensities(mu_h, mu_v, phi, p.misalignment);
    let offset = match sent.basis() {
        Basis::Z => 0,
        Basis::X => 2,
    };
    let wrong = arms[offset + 1 - sent.slot()] / (mu_h + mu_v);
    let eta = p.transmittance();
    let d = p.dark_prob;
    let y1 = 1.0 - (1.0 - d) * (1.0 - d) * (1.0 - eta);
    let lost = d * (1.0 - d) + 0.5 * d * d;
    let e1 = (1.0 - eta) * lost + eta * (1.0 - wrong) * 0.5 * d + eta * wrong * (1.0 - 0.5 * d);
    (y1, e1)
}

/// Counts for one region.
///
/// `n_sent` counts only samples where Bob's basis matched the region's basis,
/// so `gain` is the detection probability of a basis-matched signal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionTally {
    pub label: String,
    pub basis: Basis,
    /// Samples classified into the region, any basis at Bob.
    pub n_region: u64,
    pub n_sent: u64,
    pub n_detected: u64,
    pub n_error: u64,
}

impl RegionTally {
    pub fn new(label: impl Into<String>, basis: Basis) -> Self {
        RegionTally {
            label: label.into(),
            basis,
            n_region: 0,
            n_sent: 0,
            n_detected: 0,
            n_error: 0,
        }
    }

    fn ratio(num: u64, den: u64) -> f64 {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    }

    pub fn gain(&self) -> f64 {
        Self::ratio(self.n_detected, self.n_sent)
    }

    pub fn error_gain(&self) -> f64 {
        Self::ratio(self.n_error, self.n_sent)
    }

    /// Error rate among detections.
    pub fn qber(&self) -> f64 {
        Self::ratio(self.n_error, self.n_detected)
    }

    /// Binomial standard error of a proportion `k / n`. With `k = 0` (or
    /// `k = n`) it returns `1 / n`, so a 3-sigma interval reproduces the
    /// rule of three.
    fn binomial_sigma(k: u64, n: u64) -> f64 {
        if n == 0 {
            return 0.0;
        }
        if k == 0 || k == n {
            return 1.0 / n as f64;
        }
        let p = k as f64 / n as f64;
        (p * (1.0 - p) / n as f64).sqrt()
    }

    pub fn sigma_gain(&self) -> f64 {
        Self::binomial_sigma(self.n_detected, self.n_sent)
    }

    pub fn sigma_error_gain(&self) -> f64 {
        Self::binomial_sigma(self.n_error, self.n_sent)
    }

    pub fn merge(&mut self, other: &RegionTally) {
        self.n_region += other.n_region;
        self.n_sent += other.n_sent;
        self.n_detected += other.n_detected;
        self.n_error += other.n_error;
    }

    pub fn check(&self) -> Result<()> {
        if self.n_error <= self.n_detected
            && self.n_detected <= self.n_sent
            && self.n_sent <= self.n_region
        {
            Ok(())
        } else {
            Err(Error::Pipeline(format!(
                "tally `{}` violates n_error <= n_detected <= n_sent <= n_region",
                self.label
            )))
        }
    }
}

/// One tally per region, in region order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TallySet {
    pub tallies: Vec<RegionTally>,
}

impl TallySet {
    pub fn new(regions: &[Region]) -> Self {
        TallySet {
            tallies: regions
                .iter()
                .map(|r| RegionTally::new(r.label.clone(), r.basis()))
                .collect(),
        }
    }

    /// Adds one sample. `event` is `None` when the pulse was never sent to
    /// Bob (local-only analysis).
    pub fn record(&mut self, outcome: &SiftOutcome, event: Option<&DetectionEvent>) {
        for i in outcome.regions.iter() {
            let t = &mut self.tallies[i];
            t.n_region += 1;
            let Some(ev) = event else { continue };
            if ev.basis != t.basis {
                continue;
            }
            t.n_sent += 1;
            if let Some(got) = ev.squashed {
                t.n_detected += 1;
                if Some(got) != outcome.state {
                    t.n_error += 1;
                }
            }
        }
    }

    pub fn merge(&mut self, other: &TallySet) -> Result<()> {
        if self.tallies.len() != other.tallies.len()
            || self
                .tallies
                .iter()
                .zip(&other.tallies)
                .any(|(a, b)| a.label != b.label)
        {
            return Err(Error::Pipeline("cannot merge tallies over different regions".into()));
        }
        for (a, b) in self.tallies.iter_mut().zip(&other.tallies) {
            a.merge(b);
        }
        Ok(())
    }

    pub fn get(&self, label: &str) -> Option<&RegionTally> {
        self.tallies.iter().find(|t| t.label == label)
    }
}

/// Tallies index-aligned streams of sift outcomes and detection events.
pub fn accumulate(
    outcomes: &[SiftOutcome],
    events: &[DetectionEvent],
    regions: &[Region],
) -> Result<TallySet> {
    if outcomes.len() != events.len() {
        return Err(Error::Pipeline(format!(
            "{} sift outcomes but {} detection events",
            outcomes.len(),
            events.len()
        )));
    }
    let mut set = TallySet::new(regions);
    for (o, e) in outcomes.iter().zip(events) {
        set.record(o, Some(e));
    }
    Ok(set)
}
