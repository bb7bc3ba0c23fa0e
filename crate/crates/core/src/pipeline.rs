//! End-to-end glue: region geometry, Monte Carlo blocks, expected tallies and
//! the decoy/key-rate analysis on top of either.

use std::collections::BTreeMap;
use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::decoy::{self, DecoyBounds, DecoyConstraintSet, Observation, PhotonMoments};
use crate::detection::{self, analytic_click_stats, ChannelParams, TallySet};
use crate::error::{Error, Result};
use crate::keyrate::{self, KeyRateInputs, KeyRateReport};
use crate::phase_source::{local_readout, LocalReadout, PulseSample, PulseStream, SourceConfig};
use crate::postselect::{azimuth, classify_point, Region, ReshapeSpec, ReshapedDensity, MAX_REGIONS};
use crate::rng::{stream, Purpose, BLOCK_SIZE};
use crate::Basis;

/// Everything a run needs besides the seed and sample count.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub source: SourceConfig,
    pub reshape: ReshapeSpec,
    pub regions: Vec<Region>,
    pub channel: ChannelParams,
    pub n_cut: usize,
    pub k_sigma: f64,
    pub f_e: f64,
}

impl Model {
    /// Default model with the standard region layout.
    pub fn standard() -> Result<Self> {
        let source = SourceConfig::default();
        Ok(Model {
            reshape: ReshapeSpec::auto(source.mu_max_per_pol)?,
            regions: crate::postselect::standard_regions(&Default::default())?,
            source,
            channel: ChannelParams::default(),
            n_cut: 10,
            k_sigma: 0.0,
            f_e: 1.16,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        self.reshape.validate()?;
        if (self.reshape.mu_max - self.source.mu_max_per_pol).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "reshape mu_max {} differs from source mu_max_per_pol {}",
                self.reshape.mu_max, self.source.mu_max_per_pol
            )));
        }
        self.channel.validate()?;
        if self.regions.is_empty() || self.regions.len() > MAX_REGIONS {
            return Err(Error::Config(format!(
                "between 1 and {MAX_REGIONS} regions are supported, got {}",
                self.regions.len()
            )));
        }
        for r in &self.regions {
            r.validate()?;
        }
        if self.n_cut < 2 {
            return Err(Error::Config(format!("decoy.n_cut must be at least 2, got {}", self.n_cut)));
        }
        if !(self.k_sigma >= 0.0 && self.k_sigma.is_finite()) {
            return Err(Error::Config(format!("decoy.k_sigma must be >= 0, got {}", self.k_sigma)));
        }
        if !(self.f_e >= 1.0) {
            return Err(Error::Config(format!("keyrate.f_e must be >= 1, got {}", self.f_e)));
        }
        Ok(())
    }
}

/// Regions pooled into one decoy constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub label: String,
    pub basis: Basis,
    pub members: Vec<usize>,
}

/// Loss-independent quantities: region masses and photon moments.
#[derive(Debug, Clone)]
pub struct Geometry {
    pub density: ReshapedDensity,
    pub regions: Vec<Region>,
    pub masses: Vec<f64>,
    pub moments: Vec<PhotonMoments>,
    pub groups: Vec<Group>,
    pub group_moments: Vec<PhotonMoments>,
    /// Indices of the key-generating regions.
    pub key: Vec<usize>,
    pub key_mass: f64,
    pub key_moments: PhotonMoments,
}

impl Geometry {
    pub fn new(regions: &[Region], mu_max: f64, n_cut: usize) -> Result<Self> {
        let density = ReshapedDensity::new(mu_max);
        let masses: Vec<f64> = regions.iter().map(|r| density.mass(r)).collect();
        let moments = regions
            .iter()
            .map(|r| decoy::photon_moments(r, &density, n_cut))
            .collect::<Result<Vec<_>>>()?;

        let mut order: Vec<String> = Vec::new();
        let mut members: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, r) in regions.iter().enumerate() {
            if let Some(g) = &r.decoy_group {
                if !members.contains_key(g) {
                    order.push(g.clone());
                }
                members.entry(g.clone()).or_default().push(i);
            }
        }
        let mut groups = Vec::new();
        let mut group_moments = Vec::new();
        for label in order {
            let idx = members.remove(&label).unwrap_or_default();
            let basis = regions[idx[0]].basis();
            if idx.iter().any(|&i| regions[i].basis() != basis) {
                return Err(Error::Config(format!("decoy group `{label}` mixes bases")));
            }
            let parts: Vec<(&PhotonMoments, f64)> = idx.iter().map(|&i| (&moments[i], masses[i])).collect();
            group_moments.push(PhotonMoments::combine(label.clone(), &parts)?);
            groups.push(Group {
                label,
                basis,
                members: idx,
            });
        }

        let key: Vec<usize> = (0..regions.len()).filter(|&i| regions[i].key).collect();
        if key.is_empty() {
            return Err(Error::Config("no region is marked as key-generating".into()));
        }
        if key.iter().any(|&i| regions[i].basis() != Basis::Z) {
            return Err(Error::Config("key-generating regions must be Z-basis regions".into()));
        }
        let parts: Vec<(&PhotonMoments, f64)> = key.iter().map(|&i| (&moments[i], masses[i])).collect();
        let key_moments = PhotonMoments::combine("key", &parts)?;
        let key_mass = key.iter().map(|&i| masses[i]).sum();

        for basis in [Basis::Z, Basis::X] {
            let n = groups.iter().filter(|g| g.basis == basis).count();
            if n < 2 {
                return Err(Error::Config(format!(
                    "the {basis} basis needs at least two decoy groups, found {n}"
                )));
            }
        }

        Ok(Geometry {
            density,
            regions: regions.to_vec(),
            masses,
            moments,
            groups,
            group_moments,
            key,
            key_mass,
            key_moments,
        })
    }

    pub fn for_model(model: &Model) -> Result<Self> {
        Self::new(&model.regions, model.source.mu_max_per_pol, model.n_cut)
    }
}

/// Region-averaged gain and error gain of basis-matched signals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Expectation {
    pub q: f64,
    pub qe: f64,
}

/// Exact region averages of the detection model.
pub fn expected_observations(geom: &Geometry, channel: &ChannelParams) -> Vec<Expectation> {
    geom.regions
        .iter()
        .zip(&geom.masses)
        .map(|(region, &mass)| {
            let basis = region.basis();
            let q = geom.density.integrate_with_phase(region, |h, v, phi| {
                analytic_click_stats(h, v, phi, channel).basis(basis).gain()
            });
            let qe = geom.density.integrate_with_phase(region, |h, v, phi| match region.state_at(phi) {
                Some(sent) => analytic_click_stats(h, v, phi, channel).basis(basis).error_gain(sent),
                None => 0.0,
            });
            Expectation {
                q: q / mass,
                qe: qe / mass,
            }
        })
        .collect()
}

/// Ground-truth single-photon yield and the largest group-averaged
/// single-photon error rate in the X basis.
pub fn single_photon_truth(geom: &Geometry, channel: &ChannelParams) -> (f64, f64) {
    let d = channel.dark_prob;
    let y1 = 1.0 - (1.0 - d) * (1.0 - d) * (1.0 - channel.transmittance());
    let mut e1_max: f64 = 0.0;
    for g in geom.groups.iter().filter(|g| g.basis == Basis::X) {
        let (mut num, mut den) = (0.0, 0.0);
        for &i in &g.members {
            let region = &geom.regions[i];
            den += geom.density.integrate(region, |h, v| decoy::poisson(1, h + v));
            num += geom.density.integrate_with_phase(region, |h, v, phi| {
                let Some(sent) = region.state_at(phi) else { return 0.0 };
                let (_, e) = detection::single_photon_stats(h, v, phi, sent, channel);
                decoy::poisson(1, h + v) * e
            });
        }
        e1_max = e1_max.max(num / den);
    }
    (y1, e1_max / y1)
}

/// Pooled observation of one group from Monte Carlo tallies.
pub fn group_observation(tallies: &TallySet, members: &[usize]) -> Observation {
    let mut t = tallies.tallies[members[0]].clone();
    for &i in &members[1..] {
        t.merge(&tallies.tallies[i]);
    }
    Observation {
        q: t.gain(),
        qe: t.error_gain(),
        sigma_q: t.sigma_gain(),
        sigma_qe: t.sigma_error_gain(),
    }
}

/// Pooled observation of one group from expected values. `n_sent` gives the
/// nominal basis-matched count per region used for the error bars; `None`
/// means exact (zero-width) observations.
pub fn expected_group_observation(
    geom: &Geometry,
    exp: &[Expectation],
    members: &[usize],
    n_sent: Option<&dyn Fn(usize) -> f64>,
) -> Observation {
    let mass: f64 = members.iter().map(|&i| geom.masses[i]).sum();
    let q = members.iter().map(|&i| geom.masses[i] * exp[i].q).sum::<f64>() / mass;
    let qe = members.iter().map(|&i| geom.masses[i] * exp[i].qe).sum::<f64>() / mass;
    let (sigma_q, sigma_qe) = match n_sent {
        Some(f) => {
            let n: f64 = members.iter().map(|&i| f(i)).sum();
            let s = |p: f64| (p * (1.0 - p) / n).sqrt().max(1.0 / n);
            (s(q), s(qe))
        }
        None => (0.0, 0.0),
    };
    Observation {
        q,
        qe,
        sigma_q,
        sigma_qe,
    }
}

/// Decoy bounds and key rate for one set of observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub z_set: DecoyConstraintSet,
    pub x_set: DecoyConstraintSet,
    pub bounds: DecoyBounds,
    pub key: KeyRateReport,
}

/// Runs both decoy programs and the key-rate formula. `group_obs` is indexed
/// like `geom.groups`; `key_obs` is the pooled key-region observation.
pub fn analyze(
    geom: &Geometry,
    group_obs: &[Observation],
    key_obs: Observation,
    k_sigma: f64,
    f_e: f64,
) -> Result<Analysis> {
    if group_obs.len() != geom.groups.len() {
        return Err(Error::Pipeline(format!(
            "{} group observations for {} groups",
            group_obs.len(),
            geom.groups.len()
        )));
    }
    let n_cut = geom.key_moments.n_cut();
    let mut z_set = DecoyConstraintSet::new("Z", n_cut);
    let mut x_set = DecoyConstraintSet::new("X", n_cut);
    for ((g, m), obs) in geom.groups.iter().zip(&geom.group_moments).zip(group_obs) {
        match g.basis {
            Basis::Z => z_set.push(m.clone(), *obs),
            Basis::X => x_set.push(m.clone(), *obs),
        }
    }
    let bounds = decoy::decoy_analysis(&z_set, &x_set, k_sigma)?;
    let key = keyrate::key_rate(&KeyRateInputs {
        p_z: geom.key_mass,
        p1_avg: geom.key_moments.p[1],
        y1_low: bounds.y1_low,
        e1_high: bounds.e1_high,
        q_z: key_obs.q,
        qe_z: key_obs.qe.min(key_obs.q),
        f_e,
    })?;
    Ok(Analysis {
        z_set,
        x_set,
        bounds,
        key,
    })
}

/// Expected-tally analysis at one loss point. With `nominal_samples`, the
/// observations carry the binomial error bars a run of that many source
/// samples would have.
pub fn analytic_point(
    geom: &Geometry,
    model: &Model,
    loss_db: f64,
    nominal_samples: Option<f64>,
) -> Result<Analysis> {
    let channel = model.channel.with_loss(loss_db);
    channel.validate()?;
    let exp = expected_observations(geom, &channel);
    let keep = model.reshape.keep_fraction().powi(2);
    let counts = nominal_samples.map(|n| {
        move |i: usize| {
            let split = match geom.regions[i].basis() {
                Basis::Z => channel.basis_split,
                Basis::X => 1.0 - channel.basis_split,
            };
            n * keep * geom.masses[i] * split
        }
    });
    let counts_ref = counts.as_ref().map(|f| f as &dyn Fn(usize) -> f64);
    let group_obs: Vec<Observation> = geom
        .groups
        .iter()
        .map(|g| expected_group_observation(geom, &exp, &g.members, counts_ref))
        .collect();
    let key_obs = expected_group_observation(geom, &exp, &geom.key, counts_ref);
    analyze(geom, &group_obs, key_obs, model.k_sigma, model.f_e)
}

/// Analysis of Monte Carlo tallies.
pub fn tally_analysis(geom: &Geometry, tallies: &TallySet, k_sigma: f64, f_e: f64) -> Result<Analysis> {
    let group_obs: Vec<Observation> = geom
        .groups
        .iter()
        .map(|g| group_observation(tallies, &g.members))
        .collect();
    let key_obs = group_observation(tallies, &geom.key);
    analyze(geom, &group_obs, key_obs, k_sigma, f_e)
}

/// Counts from a range of sample blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunSummary {
    /// Source samples drawn.
    pub n_raw: u64,
    /// Samples surviving the reshaping test.
    pub n_kept: u64,
    /// Readouts whose azimuth argument needed clamping beyond tolerance.
    pub n_clamped: u64,
    /// Readouts at a pole, where the azimuth is undefined.
    pub n_undefined: u64,
    pub tallies: TallySet,
}

impl RunSummary {
    pub fn empty(regions: &[Region]) -> Self {
        RunSummary {
            n_raw: 0,
            n_kept: 0,
            n_clamped: 0,
            n_undefined: 0,
            tallies: TallySet::new(regions),
        }
    }

    pub fn merge(&mut self, other: &RunSummary) -> Result<()> {
        self.tallies.merge(&other.tallies)?;
        self.n_raw += other.n_raw;
        self.n_kept += other.n_kept;
        self.n_clamped += other.n_clamped;
        self.n_undefined += other.n_undefined;
        Ok(())
    }

    pub fn keep_fraction(&self) -> f64 {
        if self.n_raw == 0 {
            0.0
        } else {
            self.n_kept as f64 / self.n_raw as f64
        }
    }
}

/// Number of blocks needed for `n_samples`.
pub fn block_count(n_samples: u64) -> u64 {
    n_samples.div_ceil(BLOCK_SIZE)
}

fn block_len(block: u64, n_samples: u64) -> usize {
    let start = block * BLOCK_SIZE;
    (n_samples.saturating_sub(start)).min(BLOCK_SIZE) as usize
}

/// Source samples of one block, before reshaping.
pub fn source_block(model: &Model, seed: u64, block: u64, n_samples: u64) -> Vec<PulseSample> {
    let mut rng = stream(seed, block, Purpose::Phases);
    PulseStream::new(&mut rng, model.source)
        .take(block_len(block, n_samples))
        .collect()
}

/// Full simulation of the blocks in `blocks` out of a run of `n_samples`.
///
/// Each block draws from its own random streams, so any partition of the
/// block range merges to the same result.
pub fn simulate_blocks(model: &Model, seed: u64, n_samples: u64, blocks: Range<u64>) -> Result<RunSummary> {
    let mut out = RunSummary::empty(&model.regions);
    for block in blocks {
        let samples = source_block(model, seed, block, n_samples);
        let mut reshape_rng = stream(seed, block, Purpose::Reshape);
        let mut detect_rng = stream(seed, block, Purpose::Detection);
        for s in &samples {
            out.n_raw += 1;
            if !model.reshape.accept_sample(s, &mut reshape_rng)? {
                continue;
            }
            out.n_kept += 1;
            let outcome = classify_point(s.mu_h, s.mu_v, s.phi_hv, &model.regions);
            if outcome.regions.is_empty() {
                continue;
            }
            let event = detection::detect(s.mu_h, s.mu_v, s.phi_hv, &model.channel, &mut detect_rng);
            out.tallies.record(&outcome, Some(&event));
        }
    }
    Ok(out)
}

/// Transmitter-side analysis of recorded local readouts (no detection).
///
/// Records are split into blocks like source samples so the reshaping test
/// draws the same random numbers a simulation with the same seed would.
pub fn analyze_readouts(model: &Model, seed: u64, readouts: &[LocalReadout]) -> Result<RunSummary> {
    let mut out = RunSummary::empty(&model.regions);
    for (block, chunk) in readouts.chunks(BLOCK_SIZE as usize).enumerate() {
        let mut reshape_rng = stream(seed, block as u64, Purpose::Reshape);
        for r in chunk {
            out.n_raw += 1;
            let phi = match azimuth(r) {
                Ok(a) => {
                    out.n_clamped += u64::from(a.clamped);
                    a.angle
                }
                Err(Error::UndefinedAzimuth) => {
                    out.n_undefined += 1;
                    f64::NAN
                }
                Err(e) => return Err(e),
            };
            let s = PulseSample {
                mu_h: r.mu_h,
                mu_v: r.mu_v,
                phi_hv: phi,
                phi_raw: [f64::NAN; 4],
                valid: true,
            };
            if !model.reshape.accept_sample(&s, &mut reshape_rng)? {
                continue;
            }
            out.n_kept += 1;
            let outcome = classify_point(s.mu_h, s.mu_v, phi, &model.regions);
            out.tallies.record(&outcome, None);
        }
    }
    Ok(out)
}

/// Local readouts of every source sample, as a trace export would store them.
pub fn readouts_for_blocks(model: &Model, seed: u64, n_samples: u64, blocks: Range<u64>) -> Vec<LocalReadout> {
    blocks
        .flat_map(|b| source_block(model, seed, b, n_samples))
        .map(|s| local_readout(&s))
        .collect()
}

/// Draws from the reshaped density directly; used by tests that only need
/// post-selected samples.
pub fn reshaped_samples<R: Rng + ?Sized>(density: &ReshapedDensity, rng: &mut R, n: usize) -> Vec<(f64, f64, f64)> {
    (0..n).map(|_| density.sample(rng)).collect()
}
