//! TOML run configuration.
//!
//! Every section and key is optional; an empty file yields the defaults.
//! Unknown keys are rejected.

use std::fmt;
use std::path::{Path, PathBuf};

use fpqkd_core::detection::ChannelParams;
use fpqkd_core::keyrate::LossPoint;
use fpqkd_core::phase_source::SourceConfig;
use fpqkd_core::pipeline::{Geometry, Model};
use fpqkd_core::postselect::{standard_regions, Region, RegionParams, ReshapeSpec};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub source: SourceConfig,
    pub reshape: ReshapeConfig,
    pub regions: RegionsConfig,
    pub channel: ChannelParams,
    pub decoy: DecoyConfig,
    pub keyrate: KeyRateConfig,
    pub run: RunSection,
    pub sweep: SweepConfig,
}

/// Reshaping scale: `"auto"` picks the largest admissible `C`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Scale {
    #[default]
    Auto,
    Fixed(f64),
}

impl Serialize for Scale {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Scale::Auto => s.serialize_str("auto"),
            Scale::Fixed(c) => s.serialize_f64(*c),
        }
    }
}

impl<'de> Deserialize<'de> for Scale {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Number(f64),
            Word(String),
        }
        match Repr::deserialize(d)? {
            Repr::Number(c) => Ok(Scale::Fixed(c)),
            Repr::Word(w) if w == "auto" => Ok(Scale::Auto),
            Repr::Word(w) => Err(serde::de::Error::custom(format!(
                "reshape.scale must be \"auto\" or a number, got \"{w}\""
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReshapeConfig {
    pub scale: Scale,
}

/// Standard layout parameters, or an explicit region list in `custom`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegionsConfig {
    pub delta_z: f64,
    pub delta_x: f64,
    pub delta_phi: f64,
    pub r_max: f64,
    pub t: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub custom: Vec<Region>,
}

impl Default for RegionsConfig {
    fn default() -> Self {
        let p = RegionParams::default();
        RegionsConfig {
            delta_z: p.delta_z,
            delta_x: p.delta_x,
            delta_phi: p.delta_phi,
            r_max: p.r_max,
            t: p.t,
            custom: Vec::new(),
        }
    }
}

impl RegionsConfig {
    pub fn params(&self) -> RegionParams {
        RegionParams {
            delta_z: self.delta_z,
            delta_x: self.delta_x,
            delta_phi: self.delta_phi,
            r_max: self.r_max,
            t: self.t.clone(),
        }
    }

    pub fn build(&self) -> Result<Vec<Region>> {
        if self.custom.is_empty() {
            Ok(standard_regions(&self.params())?)
        } else {
            Ok(self.custom.clone())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecoyConfig {
    /// Photon numbers `0..=n_cut` are kept explicitly.
    pub n_cut: usize,
    /// Width of the observation intervals, in standard errors.
    pub k_sigma: f64,
}

impl Default for DecoyConfig {
    fn default() -> Self {
        DecoyConfig { n_cut: 10, k_sigma: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KeyRateConfig {
    pub f_e: f64,
}

impl Default for KeyRateConfig {
    fn default() -> Self {
        KeyRateConfig { f_e: 1.16 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TraceFormat {
    #[default]
    None,
    Csv,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub samples: u64,
    pub seed: u64,
    /// Parallel work units; results do not depend on it.
    pub shards: usize,
    pub out: PathBuf,
    /// Also export the transmitter-side readouts of every source sample.
    pub trace: TraceFormat,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            samples: 10_000_000,
            seed: 1,
            shards: 8,
            out: PathBuf::from("out"),
            trace: TraceFormat::None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    #[default]
    Db,
    Km,
}

/// Loss grid: explicit `points`, or `start..=stop` in steps of `step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub unit: Unit,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<f64>>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            unit: Unit::Db,
            start: 0.0,
            stop: 40.0,
            step: 1.0,
            points: None,
        }
    }
}

impl SweepConfig {
    pub fn grid(&self) -> Result<Vec<LossPoint>> {
        let values = match &self.points {
            Some(p) => p.clone(),
            None => {
                if !(self.step > 0.0 && self.step.is_finite()) {
                    return Err(CliError::Config(format!("sweep.step must be positive, got {}", self.step)));
                }
                if !(self.start.is_finite() && self.stop.is_finite()) {
                    return Err(CliError::Config("sweep.start and sweep.stop must be finite".into()));
                }
                if self.stop < self.start {
                    Vec::new()
                } else {
                    let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
                    (0..n).map(|i| self.start + i as f64 * self.step).collect()
                }
            }
        };
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(CliError::Config(format!("sweep grid values must be >= 0, got {v}")));
        }
        Ok(values
            .into_iter()
            .map(|v| match self.unit {
                Unit::Db => LossPoint::Db(v),
                Unit::Km => LossPoint::Km(v),
            })
            .collect())
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical TOML form; `parse(dump())` reproduces the config.
    pub fn dump(&self) -> String {
        toml::to_string(self).expect("run config always serializes")
    }

    /// The config with settings that cannot change results (output
    /// directory, shard count) reset to their defaults.
    pub fn canonical(&self) -> RunConfig {
        let d = RunSection::default();
        let mut c = self.clone();
        c.run.out = d.out;
        c.run.shards = d.shards;
        c
    }

    /// SHA-256 of the canonical form, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().dump().as_bytes()))
    }

    pub fn model(&self) -> Result<Model> {
        let mu_max = self.source.mu_max_per_pol;
        self.source.validate()?;
        let reshape = match self.reshape.scale {
            Scale::Auto => ReshapeSpec::auto(mu_max)?,
            Scale::Fixed(c) => ReshapeSpec {
                target_scale: c,
                mu_max,
            },
        };
        let model = Model {
            source: self.source,
            reshape,
            regions: self.regions.build()?,
            channel: self.channel,
            n_cut: self.decoy.n_cut,
            k_sigma: self.decoy.k_sigma,
            f_e: self.keyrate.f_e,
        };
        model.validate()?;
        Ok(model)
    }

    /// Model plus its region geometry, fully validated.
    pub fn build(&self) -> Result<(Model, Geometry)> {
        let model = self.model()?;
        let geom = Geometry::for_model(&model)?;
        Ok((model, geom))
    }

    pub fn validate(&self) -> Result<()> {
        self.build()?;
        if self.run.shards == 0 {
            return Err(CliError::Config("run.shards must be at least 1".into()));
        }
        if self.run.samples == 0 {
            return Err(CliError::Config("run.samples must be at least 1".into()));
        }
        if self.run.seed > i64::MAX as u64 {
            return Err(CliError::Config(format!("run.seed must be at most {}", i64::MAX)));
        }
        Ok(())
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.dump())
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    RunConfig::parse(&text).map_err(|e| match e {
        CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}
