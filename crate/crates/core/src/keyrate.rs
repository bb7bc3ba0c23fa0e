//! Asymptotic secret key rate.
//!
//! ```text
//! R = P_Z { <P_1> Y_1^L [1 - h2(e_1^U)] - f_e <Q_Z> h2(<QE_Z> / <Q_Z>) }
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fiber attenuation used to convert distance to loss.
pub const DB_PER_KM: f64 = 0.2;

pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::domain("h2 argument", x, "[0, 1]"));
    }
    if x == 0.0 || x == 1.0 {
        return Ok(0.0);
    }
    Ok(-x * x.log2() - (1.0 - x) * (1.0 - x).log2())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyRateInputs {
    /// Probability mass of the key-generating Z region.
    pub p_z: f64,
    /// Single-photon probability averaged over the key region.
    pub p1_avg: f64,
    pub y1_low: f64,
    pub e1_high: f64,
    pub q_z: f64,
    pub qe_z: f64,
    pub f_e: f64,
}

impl KeyRateInputs {
    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("p_z", self.p_z),
            ("p1_avg", self.p1_avg),
            ("y1_low", self.y1_low),
            ("e1_high", self.e1_high),
            ("q_z", self.q_z),
            ("qe_z", self.qe_z),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("key-rate input {name} = {p} is not a probability")));
            }
        }
        if !(self.f_e >= 1.0) {
            return Err(Error::Config(format!("keyrate.f_e must be >= 1, got {}", self.f_e)));
        }
        if self.qe_z > self.q_z {
            return Err(Error::Config(format!(
                "error gain {} exceeds gain {}",
                self.qe_z, self.q_z
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyRateReport {
    pub inputs: KeyRateInputs,
    /// Secret bits per source pulse; negative when no key can be made.
    pub rate: f64,
    pub rate_clamped: f64,
    /// `<P_1> Y_1^L [1 - h2(e_1^U)]`.
    pub single_photon_term: f64,
    /// `f_e <Q_Z> h2(E_Z)`.
    pub ec_term: f64,
    pub qber_z: f64,
    pub notes: Vec<String>,
}

pub fn key_rate(inputs: &KeyRateInputs) -> Result<KeyRateReport> {
    inputs.validate()?;
    let mut notes = Vec::new();
    if inputs.q_z == 0.0 {
        notes.push("no Z-basis detections; rate set to zero".into());
        return Ok(KeyRateReport {
            inputs: *inputs,
            rate: 0.0,
            rate_clamped: 0.0,
            single_photon_term: 0.0,
            ec_term: 0.0,
            qber_z: 0.0,
            notes,
        });
    }
    let single_photon_term = if inputs.e1_high >= 0.5 {
        notes.push("e1 bound at 0.5; no single-photon privacy".into());
        0.0
    } else {
        inputs.p1_avg * inputs.y1_low * (1.0 - binary_entropy(inputs.e1_high)?)
    };
    let qber_z = inputs.qe_z / inputs.q_z;
    let ec_term = inputs.f_e * inputs.q_z * binary_entropy(qber_z)?;
    let rate = inputs.p_z * (single_photon_term - ec_term);
    Ok(KeyRateReport {
        inputs: *inputs,
        rate,
        rate_clamped: rate.max(0.0),
        single_photon_term,
        ec_term,
        qber_z,
        notes,
    })
}

/// A point on a loss sweep, given either directly in dB or as fiber length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossPoint {
    Db(f64),
    Km(f64),
}

impl LossPoint {
    pub fn loss_db(self) -> f64 {
        match self {
            LossPoint::Db(db) => db,
            LossPoint::Km(km) => km * DB_PER_KM,
        }
    }

    pub fn distance_km(self) -> f64 {
        self.loss_db() / DB_PER_KM
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub loss_db: f64,
    pub distance_km: f64,
    pub rate: f64,
    pub y1_low: f64,
    pub e1_high: f64,
}

/// Evaluates `rate_at(loss_db)` over a grid. `rate_at` returns the report and
/// the decoy bounds used.
pub fn sweep<F>(points: &[LossPoint], mut rate_at: F) -> Result<Vec<SweepRow>>
where
    F: FnMut(f64) -> Result<(KeyRateReport, f64, f64)>,
{
    if points.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    points
        .iter()
        .map(|&pt| {
            let loss_db = pt.loss_db();
            let (report, y1_low, e1_high) = rate_at(loss_db)?;
            Ok(SweepRow {
                loss_db,
                distance_km: pt.distance_km(),
                rate: report.rate,
                y1_low,
                e1_high,
            })
        })
        .collect()
}
