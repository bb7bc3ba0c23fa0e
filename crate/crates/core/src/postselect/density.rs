//! The reshaped joint density and region integrals over it.

use std::f64::consts::{FRAC_PI_4, TAU};

use rand::Rng;

use super::region::Region;
use crate::quadrature::{refine_by_doubling, GaussLegendre};

/// Starting node count per axis.
pub const DEFAULT_NODES: usize = 64;
/// Relative agreement required between successive refinements.
pub const REL_TOL: f64 = 1e-8;

/// Joint density `p(mu_h, mu_v, phi) = g(mu_h) g(mu_v) / 2pi` of reshaped
/// samples, with `g(mu) = e^mu / (e^{mu_max} - 1)` on `[0, mu_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReshapedDensity {
    mu_max: f64,
    norm: f64,
}

impl ReshapedDensity {
    pub fn new(mu_max: f64) -> Self {
        assert!(mu_max > 0.0 && mu_max.is_finite());
        ReshapedDensity {
            mu_max,
            norm: mu_max.exp_m1(),
        }
    }

    pub fn mu_max(&self) -> f64 {
        self.mu_max
    }

    /// Normalized single-component density.
    pub fn marginal_pdf(&self, mu: f64) -> f64 {
        if (0.0..=self.mu_max).contains(&mu) {
            mu.exp() / self.norm
        } else {
            0.0
        }
    }

    /// Direct draw by inverting the exponential cdf.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64, f64) {
        let mut draw = || (rng.random::<f64>() * self.norm).ln_1p();
        let mu_h = draw();
        let mu_v = draw();
        (mu_h, mu_v, rng.random::<f64>() * TAU)
    }

    /// Probability mass of a region.
    pub fn mass(&self, region: &Region) -> f64 {
        self.integrate(region, |_, _| 1.0)
    }

    /// `\iiint_region f(mu_h, mu_v) p` for a phase-independent observable.
    pub fn integrate<F: Fn(f64, f64) -> f64>(&self, region: &Region, f: F) -> f64 {
        let frac = region.azimuth_fraction();
        refine_by_doubling(DEFAULT_NODES, 1024, REL_TOL, |n| {
            frac * self.integrate_plane(region, n, &f)
        })
        .0
    }

    /// `\iiint_region f(mu_h, mu_v, phi) p` for a phase-dependent observable.
    pub fn integrate_with_phase<F: Fn(f64, f64, f64) -> f64>(&self, region: &Region, f: F) -> f64 {
        let intervals = region.phase_intervals();
        refine_by_doubling(DEFAULT_NODES, 256, REL_TOL, |n| {
            let phase_rule = GaussLegendre::new((n / 4).max(8));
            let phase_nodes: Vec<(f64, f64)> = intervals
                .iter()
                .flat_map(|&(a, b)| phase_rule.mapped(a, b).collect::<Vec<_>>())
                .collect();
            self.integrate_plane(region, n, &|mu_h, mu_v| {
                phase_nodes.iter().map(|&(phi, w)| w * f(mu_h, mu_v, phi)).sum::<f64>() / TAU
            })
        })
        .0
    }

    /// Tensor Gauss–Legendre over the polar sector, split where the outer
    /// radius changes form so each piece has a smooth integrand.
    fn integrate_plane<F: Fn(f64, f64) -> f64 + ?Sized>(&self, region: &Region, n: usize, f: &F) -> f64 {
        let rule = GaussLegendre::new(n);
        let breaks = self.polar_breaks(region);
        let mut total = 0.0;
        for piece in breaks.windows(2) {
            let (a, b) = (piece[0], piece[1]);
            if b <= a {
                continue;
            }
            for (theta, w_theta) in rule.mapped(a, b) {
                let (s, c) = theta.sin_cos();
                let box_limit = self.mu_max / c.max(s);
                let r_hi = region.radius_max.map_or(box_limit, |r| r.min(box_limit));
                let r_lo = region.radius_min;
                if r_hi <= r_lo {
                    continue;
                }
                let inner: f64 = rule
                    .mapped(r_lo, r_hi)
                    .map(|(r, w_r)| {
                        let (mu_h, mu_v) = (r * c, r * s);
                        w_r * r * (mu_h + mu_v).exp() * f(mu_h, mu_v)
                    })
                    .sum();
                total += w_theta * inner;
            }
        }
        total / (self.norm * self.norm)
    }

    fn polar_breaks(&self, region: &Region) -> Vec<f64> {
        let (lo, hi) = (region.polar_min, region.polar_max);
        let mut pts = vec![lo, hi, FRAC_PI_4];
        let radii = [Some(region.radius_min), region.radius_max];
        for r in radii.into_iter().flatten() {
            if r > self.mu_max {
                let q = self.mu_max / r;
                pts.push(q.acos());
                pts.push(q.asin());
            }
        }
        let mut pts: Vec<f64> = pts.into_iter().filter(|p| *p >= lo && *p <= hi).collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }
}
