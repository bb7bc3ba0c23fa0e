//! CSV and JSON run artifacts.
//!
//! Every CSV file starts with a `# config_hash=<sha256>` comment line. Floats
//! are written with 17 significant digits so they parse back bit-exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use fpqkd_core::decoy::{DecoyBounds, DecoyConstraintSet};
use fpqkd_core::detection::{RegionTally, TallySet};
use fpqkd_core::keyrate::{KeyRateReport, SweepRow};
use fpqkd_core::postselect::Region;
use fpqkd_core::Basis;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::io(path, std::io::Error::other(e))
}

/// Writes a CSV file with the hash comment, a header and string rows.
pub fn write_csv(path: &Path, config_hash: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "# config_hash={config_hash}").map_err(|e| CliError::io(path, e))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub const TALLY_HEADER: [&str; 11] = [
    "label",
    "basis",
    "n_region",
    "n_sent",
    "n_detected",
    "n_error",
    "gain",
    "error_gain",
    "qber",
    "sigma_gain",
    "sigma_error_gain",
];

pub fn write_tallies(path: &Path, config_hash: &str, tallies: &TallySet) -> Result<()> {
    let rows: Vec<Vec<String>> = tallies
        .tallies
        .iter()
        .map(|t| {
            vec![
                t.label.clone(),
                t.basis.to_string(),
                t.n_region.to_string(),
                t.n_sent.to_string(),
                t.n_detected.to_string(),
                t.n_error.to_string(),
                num(t.gain()),
                num(t.error_gain()),
                num(t.qber()),
                num(t.sigma_gain()),
                num(t.sigma_error_gain()),
            ]
        })
        .collect();
    write_csv(path, config_hash, &TALLY_HEADER, &rows)
}

#[derive(Deserialize)]
struct TallyRow {
    label: String,
    basis: String,
    n_region: u64,
    n_sent: u64,
    n_detected: u64,
    n_error: u64,
}

/// Reads a tally report back, checking it matches `regions` row for row.
pub fn read_tallies(path: &Path, regions: &[Region]) -> Result<TallySet> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let mut set = TallySet::new(regions);
    let mut n = 0;
    for (i, row) in rdr.deserialize::<TallyRow>().enumerate() {
        let row = row.map_err(|e| CliError::Data(format!("{} row {i}: {e}", path.display())))?;
        let Some(t) = set.tallies.get_mut(i) else {
            return Err(CliError::Data(format!(
                "{} has more rows than the {} configured regions",
                path.display(),
                regions.len()
            )));
        };
        let basis = match row.basis.as_str() {
            "Z" => Basis::Z,
            "X" => Basis::X,
            other => return Err(CliError::Data(format!("{} row {i}: unknown basis `{other}`", path.display()))),
        };
        if row.label != t.label || basis != t.basis {
            return Err(CliError::Data(format!(
                "{} row {i}: region `{}` ({}) does not match configured `{}` ({})",
                path.display(),
                row.label,
                row.basis,
                t.label,
                t.basis
            )));
        }
        *t = RegionTally {
            n_region: row.n_region,
            n_sent: row.n_sent,
            n_detected: row.n_detected,
            n_error: row.n_error,
            ..t.clone()
        };
        t.check().map_err(|e| CliError::Data(format!("{} row {i}: {e}", path.display())))?;
        n += 1;
    }
    if n != regions.len() {
        return Err(CliError::Data(format!(
            "{} has {n} rows for {} configured regions",
            path.display(),
            regions.len()
        )));
    }
    Ok(set)
}

/// One row per decoy constraint: observation, error bars and photon-number
/// moments.
pub fn write_constraints(path: &Path, config_hash: &str, sets: &[&DecoyConstraintSet]) -> Result<()> {
    let n_cut = sets.first().map_or(0, |s| s.n_cut);
    let mut header = vec![
        "set".to_string(),
        "group".into(),
        "q".into(),
        "qe".into(),
        "sigma_q".into(),
        "sigma_qe".into(),
        "tail_mass".into(),
    ];
    header.extend((0..=n_cut).map(|n| format!("p{n}")));
    let mut rows = Vec::new();
    for s in sets {
        for c in &s.constraints {
            let o = c.observed;
            let mut row = vec![
                s.label.clone(),
                c.moments.label.clone(),
                num(o.q),
                num(o.qe),
                num(o.sigma_q),
                num(o.sigma_qe),
                num(c.moments.tail_mass),
            ];
            row.extend(c.moments.p.iter().map(|&p| num(p)));
            rows.push(row);
        }
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(path, config_hash, &header, &rows)
}

/// Bounds and solver diagnostics as `quantity,value` pairs.
pub fn write_bounds(path: &Path, config_hash: &str, b: &DecoyBounds) -> Result<()> {
    let mut rows = vec![
        vec!["y1_low".to_string(), num(b.y1_low)],
        vec!["y1_low_x".into(), num(b.y1_low_x)],
        vec!["e1y1_high".into(), num(b.e1y1_high)],
        vec!["e1_high".into(), num(b.e1_high)],
    ];
    for d in &b.diagnostics {
        let key = format!("{}.{:?}", d.program, d.objective);
        rows.push(vec![format!("{key}.value"), num(d.value)]);
        rows.push(vec![format!("{key}.dual_objective"), num(d.dual_objective)]);
        rows.push(vec![format!("{key}.duality_gap"), num(d.duality_gap)]);
        rows.push(vec![format!("{key}.primal_residual"), num(d.primal_residual)]);
        rows.push(vec![format!("{key}.k_sigma"), num(d.k_sigma)]);
        rows.push(vec![format!("{key}.iterations"), d.iterations.to_string()]);
    }
    for (i, f) in b.flags.iter().enumerate() {
        rows.push(vec![format!("flag.{i}"), f.clone()]);
    }
    write_csv(path, config_hash, &["quantity", "value"], &rows)
}

pub const KEYRATE_HEADER: [&str; 13] = [
    "loss_db",
    "p_z",
    "p1_avg",
    "y1_low",
    "e1_high",
    "q_z",
    "qe_z",
    "qber_z",
    "f_e",
    "single_photon_term",
    "ec_term",
    "rate",
    "rate_clamped",
];

pub fn write_keyrate(path: &Path, config_hash: &str, loss_db: f64, r: &KeyRateReport) -> Result<()> {
    let i = &r.inputs;
    let row = [
        loss_db,
        i.p_z,
        i.p1_avg,
        i.y1_low,
        i.e1_high,
        i.q_z,
        i.qe_z,
        r.qber_z,
        i.f_e,
        r.single_photon_term,
        r.ec_term,
        r.rate,
        r.rate_clamped,
    ]
    .map(num)
    .to_vec();
    write_csv(path, config_hash, &KEYRATE_HEADER, &[row])
}

pub const CURVE_HEADER: [&str; 5] = ["loss_db", "distance_km", "rate", "y1_low", "e1_high"];

pub fn write_curve(path: &Path, config_hash: &str, rows: &[SweepRow]) -> Result<()> {
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| [r.loss_db, r.distance_km, r.rate, r.y1_low, r.e1_high].map(num).to_vec())
        .collect();
    write_csv(path, config_hash, &CURVE_HEADER, &rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub name: String,
    pub sha256: String,
}

/// What produced a set of artifacts. Holds no timestamps, so repeated runs
/// write identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    /// Effective configuration in canonical TOML form (output directory and
    /// shard count reset, as they do not affect results).
    pub config: String,
    pub seed: u64,
    pub samples: u64,
    pub summary: serde_json::Value,
    pub warnings: Vec<String>,
    pub files: Vec<FileDigest>,
}

pub fn file_digest(path: &Path) -> Result<FileDigest> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(FileDigest {
        name: path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<PathBuf> {
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use fpqkd_core::postselect::{standard_regions, RegionParams};

    #[test]
    fn numbers_round_trip_exactly() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 7.62e-5, f64::MIN_POSITIVE, 0.0] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn tallies_round_trip() {
        let regions = standard_regions(&RegionParams::default()).unwrap();
        let mut set = TallySet::new(&regions);
        for (i, t) in set.tallies.iter_mut().enumerate() {
            let i = i as u64;
            t.n_region = 100 + i;
            t.n_sent = 50 + i;
            t.n_detected = 10 + i;
            t.n_error = i;
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tallies.csv");
        write_tallies(&path, "h", &set).unwrap();
        assert_eq!(read_tallies(&path, &regions).unwrap(), set);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# config_hash=h\nlabel,basis,"));
        assert!(read_tallies(&path, &regions[..3]).is_err());
    }
}
