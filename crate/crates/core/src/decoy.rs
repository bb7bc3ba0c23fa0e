//! Region-averaged photon statistics and the decoy-state linear programs.
//!
//! Each constraint pairs a region's averaged Poisson weights
//! `p_n = <mu^n e^{-mu} / n!>` (with `mu = mu_h + mu_v`) with its observed gain
//! `Q` and error gain `QE`:
//!
//! ```text
//! sum_{n <= n_cut} p_n Y_n + s = Q +- k sigma,   0 <= s <= tail
//! ```
//!
//! where the slack `s` absorbs the photon numbers above the cutoff.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::postselect::{Region, ReshapedDensity};
use crate::simplex::{self, LinearProgram};

/// Statistical widening applied when the nominal program is infeasible.
pub const RELAXED_K_SIGMA: f64 = 3.0;

/// Poisson probability of `n` photons at mean `mu`.
pub fn poisson(n: usize, mu: f64) -> f64 {
    if mu == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let ln_fact: f64 = (1..=n).map(|k| (k as f64).ln()).sum();
    (n as f64 * mu.ln() - mu - ln_fact).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotonMoments {
    pub label: String,
    /// `p[n]` for `n = 0..=n_cut`.
    pub p: Vec<f64>,
    /// Probability of more than `n_cut` photons.
    pub tail_mass: f64,
}

impl PhotonMoments {
    fn from_weights(label: String, p: Vec<f64>) -> Self {
        let tail_mass = (1.0 - p.iter().sum::<f64>()).max(0.0);
        PhotonMoments { label, p, tail_mass }
    }

    /// Moments of a fixed total intensity.
    pub fn point(label: impl Into<String>, mu: f64, n_cut: usize) -> Self {
        let p = (0..=n_cut).map(|n| poisson(n, mu)).collect();
        Self::from_weights(label.into(), p)
    }

    pub fn n_cut(&self) -> usize {
        self.p.len() - 1
    }

    /// Mass-weighted average of moments over disjoint regions.
    pub fn combine(label: impl Into<String>, parts: &[(&PhotonMoments, f64)]) -> Result<Self> {
        let label = label.into();
        let total: f64 = parts.iter().map(|(_, m)| m).sum();
        if parts.is_empty() || total <= 0.0 {
            return Err(Error::EmptyRegion(label));
        }
        let n = parts[0].0.p.len();
        if parts.iter().any(|(pm, _)| pm.p.len() != n) {
            return Err(Error::Pipeline(format!("moments pooled into `{label}` use different cutoffs")));
        }
        let p = (0..n)
            .map(|k| parts.iter().map(|(pm, m)| pm.p[k] * m).sum::<f64>() / total)
            .collect();
        Ok(Self::from_weights(label, p))
    }
}

/// Averages the photon-number distribution over a region of the reshaped
/// density.
pub fn photon_moments(region: &Region, density: &ReshapedDensity, n_cut: usize) -> Result<PhotonMoments> {
    if n_cut < 2 {
        return Err(Error::Config(format!("decoy.n_cut must be at least 2, got {n_cut}")));
    }
    let mass = density.mass(region);
    if !(mass > 0.0) {
        return Err(Error::EmptyRegion(region.label.clone()));
    }
    let p = (0..=n_cut)
        .map(|n| (density.integrate(region, |h, v| poisson(n, h + v)) / mass).max(0.0))
        .collect();
    Ok(PhotonMoments::from_weights(region.label.clone(), p))
}

/// Observed gain and error gain of one region (or pooled group).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub q: f64,
    pub qe: f64,
    pub sigma_q: f64,
    pub sigma_qe: f64,
}

impl Observation {
    pub fn exact(q: f64, qe: f64) -> Self {
        Observation {
            q,
            qe,
            sigma_q: 0.0,
            sigma_qe: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoyConstraint {
    pub moments: PhotonMoments,
    pub observed: Observation,
}

/// Constraints from regions measured in one basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoyConstraintSet {
    pub label: String,
    pub n_cut: usize,
    pub constraints: Vec<DecoyConstraint>,
}

impl DecoyConstraintSet {
    pub fn new(label: impl Into<String>, n_cut: usize) -> Self {
        DecoyConstraintSet {
            label: label.into(),
            n_cut,
            constraints: Vec::new(),
        }
    }

    pub fn push(&mut self, moments: PhotonMoments, observed: Observation) {
        self.constraints.push(DecoyConstraint { moments, observed });
    }

    fn validate(&self) -> Result<()> {
        if self.constraints.len() < 2 {
            return Err(Error::Config(format!(
                "decoy set `{}` needs at least two regions, has {}",
                self.label,
                self.constraints.len()
            )));
        }
        if let Some(c) = self.constraints.iter().find(|c| c.moments.n_cut() != self.n_cut) {
            return Err(Error::Pipeline(format!(
                "moments of `{}` use cutoff {} but the set uses {}",
                c.moments.label,
                c.moments.n_cut(),
                self.n_cut
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Lower bound on `Y_1`.
    MinY1,
    /// Upper bound on `e_1 Y_1`.
    MaxE1Y1,
}

/// Solver report for one program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpDiagnostics {
    pub program: String,
    pub objective: Objective,
    pub value: f64,
    pub dual_objective: f64,
    pub duality_gap: f64,
    pub primal_residual: f64,
    pub iterations: usize,
    pub k_sigma: f64,
    /// The nominal widening was infeasible and the program was re-solved at
    /// [`RELAXED_K_SIGMA`].
    pub relaxed: bool,
}

/// Solution of one program: the optimal bound and the yield vector found.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundSolution {
    pub bound: f64,
    pub yields: Vec<f64>,
    pub diagnostics: LpDiagnostics,
}

fn build(cs: &DecoyConstraintSet, objective: Objective, k_sigma: f64) -> LinearProgram {
    let k = cs.constraints.len();
    let ny = cs.n_cut + 1;
    let with_errors = objective == Objective::MaxE1Y1;
    // Y_n | E_n | per gain row (s, delta) | per error row (s, delta) | link slack u_n
    let ne = if with_errors { ny } else { 0 };
    let e0 = ny;
    let g0 = ny + ne;
    let r0 = g0 + 2 * k;
    let u0 = r0 + if with_errors { 2 * k } else { 0 };
    let nvar = u0 + ne;
    let mut lp = LinearProgram::new(nvar);
    for j in 0..ny + ne {
        lp.set_bounds(j, 0.0, 1.0);
    }
    for (i, c) in cs.constraints.iter().enumerate() {
        let obs = &c.observed;
        let mut row = vec![0.0; nvar];
        row[..ny].copy_from_slice(&c.moments.p);
        row[g0 + 2 * i] = 1.0;
        row[g0 + 2 * i + 1] = -1.0;
        lp.set_bounds(g0 + 2 * i, 0.0, c.moments.tail_mass);
        let w = k_sigma * obs.sigma_q;
        lp.set_bounds(g0 + 2 * i + 1, -w, w);
        lp.add_row(row, obs.q);
    }
    if with_errors {
        for (i, c) in cs.constraints.iter().enumerate() {
            let obs = &c.observed;
            let mut row = vec![0.0; nvar];
            row[e0..e0 + ny].copy_from_slice(&c.moments.p);
            row[r0 + 2 * i] = 1.0;
            row[r0 + 2 * i + 1] = -1.0;
            lp.set_bounds(r0 + 2 * i, 0.0, c.moments.tail_mass);
            let w = k_sigma * obs.sigma_qe;
            lp.set_bounds(r0 + 2 * i + 1, -w, w);
            lp.add_row(row, obs.qe);
        }
        // E_n + u_n = Y_n
        for n in 0..ny {
            let mut row = vec![0.0; nvar];
            row[e0 + n] = 1.0;
            row[n] = -1.0;
            row[u0 + n] = 1.0;
            lp.set_bounds(u0 + n, 0.0, 1.0);
            lp.add_row(row, 0.0);
        }
        lp.cost[e0 + 1] = -1.0;
    } else {
        lp.cost[1] = 1.0;
    }
    lp
}

/// Solves one decoy program. Observed values enter as `Q +- k_sigma sigma`;
/// if that is infeasible and `k_sigma < 3`, the program is retried at
/// `3 sigma` and flagged as relaxed.
pub fn solve_bounds(cs: &DecoyConstraintSet, objective: Objective, k_sigma: f64) -> Result<BoundSolution> {
    cs.validate()?;
    if !(k_sigma >= 0.0 && k_sigma.is_finite()) {
        return Err(Error::Config(format!("decoy.k_sigma must be >= 0, got {k_sigma}")));
    }
    let mut attempts = vec![(k_sigma, false)];
    if k_sigma < RELAXED_K_SIGMA {
        attempts.push((RELAXED_K_SIGMA, true));
    }
    let mut last_residual = f64::NAN;
    for (k, relaxed) in attempts {
        let lp = build(cs, objective, k);
        match simplex::solve(&lp) {
            Ok(sol) => {
                let ny = cs.n_cut + 1;
                let (bound, yields) = match objective {
                    Objective::MinY1 => (sol.x[1], sol.x[..ny].to_vec()),
                    Objective::MaxE1Y1 => (sol.x[ny + 1], sol.x[ny..2 * ny].to_vec()),
                };
                return Ok(BoundSolution {
                    bound,
                    yields,
                    diagnostics: LpDiagnostics {
                        program: cs.label.clone(),
                        objective,
                        value: sol.objective,
                        dual_objective: sol.dual_objective,
                        duality_gap: sol.duality_gap,
                        primal_residual: sol.primal_residual,
                        iterations: sol.iterations,
                        k_sigma: k,
                        relaxed,
                    },
                });
            }
            Err(Error::Infeasible { residual, .. }) => last_residual = residual,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Infeasible {
        basis: cs.label.clone(),
        residual: last_residual,
    })
}

/// Single-photon bounds feeding the key rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoyBounds {
    /// Z-basis single-photon yield, lower bound.
    pub y1_low: f64,
    /// X-basis single-photon yield, lower bound (denominator of `e1_high`).
    pub y1_low_x: f64,
    pub e1y1_high: f64,
    /// `min(e1y1_high / y1_low_x, 0.5)`.
    pub e1_high: f64,
    pub diagnostics: Vec<LpDiagnostics>,
    pub flags: Vec<String>,
}

/// Bounds `Y_1` from the Z set and `e_1` from the X set.
pub fn decoy_analysis(z: &DecoyConstraintSet, x: &DecoyConstraintSet, k_sigma: f64) -> Result<DecoyBounds> {
    let y1 = solve_bounds(z, Objective::MinY1, k_sigma)?;
    let y1x = solve_bounds(x, Objective::MinY1, k_sigma)?;
    let e1y1 = solve_bounds(x, Objective::MaxE1Y1, k_sigma)?;
    let mut flags = Vec::new();
    let e1_high = if y1x.bound > 0.0 {
        let e = e1y1.bound / y1x.bound;
        if e > 0.5 {
            flags.push(format!("e1 bound {e:.4} capped at 0.5"));
        }
        e.min(0.5)
    } else {
        flags.push("X-basis single-photon yield bound is zero; e1 set to 0.5".into());
        0.5
    };
    let diagnostics = vec![y1.diagnostics, y1x.diagnostics, e1y1.diagnostics];
    for d in &diagnostics {
        if d.relaxed {
            flags.push(format!(
                "{} {:?} program relaxed to {} sigma",
                d.program, d.objective, d.k_sigma
            ));
        }
    }
    Ok(DecoyBounds {
        y1_low: y1.bound,
        y1_low_x: y1x.bound,
        e1y1_high: e1y1.bound,
        e1_high,
        diagnostics,
        flags,
    })
}
