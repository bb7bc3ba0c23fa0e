//! Acceptance-rejection from the arcsine law onto `C e^mu`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase_source::{intensity_pdf, PulseSample};
use crate::quadrature::golden_section_min;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReshapeSpec {
    /// Largest `C` with `C e^mu <= f(mu)` on the open support.
    pub target_scale: f64,
    pub mu_max: f64,
}

/// Location and value of the minimum of `f(mu) e^{-mu}` on `(0, mu_max)`.
pub fn scaled_pdf_minimum(mu_max: f64) -> Result<(f64, f64)> {
    if !(mu_max.is_finite() && mu_max > 0.0) {
        return Err(Error::domain("mu_max", mu_max, "(0, inf)"));
    }
    let eps = mu_max * 1e-12;
    Ok(golden_section_min(
        |mu| intensity_pdf(mu, mu_max).map_or(f64::INFINITY, |f| f * (-mu).exp()),
        eps,
        mu_max - eps,
        1e-10,
    ))
}

/// The reshaping constant `C` for a given intensity ceiling.
pub fn compute_c(mu_max: f64) -> Result<f64> {
    scaled_pdf_minimum(mu_max).map(|(_, c)| c)
}

impl ReshapeSpec {
    pub fn auto(mu_max: f64) -> Result<Self> {
        Ok(ReshapeSpec {
            target_scale: compute_c(mu_max)?,
            mu_max,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu_max.is_finite() && self.mu_max > 0.0) {
            return Err(Error::Config(format!(
                "reshape.mu_max must be positive, got {}",
                self.mu_max
            )));
        }
        let c_max = compute_c(self.mu_max)?;
        if !(self.target_scale > 0.0 && self.target_scale <= c_max * (1.0 + 1e-9)) {
            return Err(Error::Config(format!(
                "reshape.scale = {} must lie in (0, {c_max}] so that C e^mu stays under the source pdf",
                self.target_scale
            )));
        }
        Ok(())
    }

    /// Keep probability `C e^mu / f(mu)`; zero at the support endpoints.
    pub fn keep_probability(&self, mu: f64) -> Result<f64> {
        if !(0.0..=self.mu_max).contains(&mu) {
            return Err(Error::domain("mu", mu, "[0, mu_max]"));
        }
        if mu == 0.0 || mu == self.mu_max {
            return Ok(0.0);
        }
        // C e^mu pi sqrt(mu (mu_max - mu))
        let p = self.target_scale
            * mu.exp()
            * std::f64::consts::PI
            * (mu * (self.mu_max - mu)).sqrt();
        Ok(p.min(1.0))
    }

    pub fn accept<R: Rng + ?Sized>(&self, mu: f64, rng: &mut R) -> Result<bool> {
        let p = self.keep_probability(mu)?;
        Ok(rng.random::<f64>() < p)
    }

    /// Applies the test to both components; a sample survives only if both do.
    ///
    /// Always draws two uniforms so that the random stream stays aligned with
    /// the sample index.
    pub fn accept_sample<R: Rng + ?Sized>(&self, s: &PulseSample, rng: &mut R) -> Result<bool> {
        let keep_h = self.accept(s.mu_h, rng)?;
        let keep_v = self.accept(s.mu_v, rng)?;
        Ok(keep_h && keep_v)
    }

    /// Expected per-component keep fraction, `C (e^{mu_max} - 1)`.
    pub fn keep_fraction(&self) -> f64 {
        self.target_scale * self.mu_max.exp_m1()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn c_for_half_photon_ceiling() {
        let c = compute_c(0.5).unwrap();
        assert!((c - 0.961).abs() <= 1e-3, "{c}");
    }

    #[test]
    fn minimizer_matches_stationary_point() {
        // d/dmu ln(f e^{-mu}) = 0  <=>  2 mu^2 + (2 - 2m) mu - m = 0
        for m in [0.1, 0.5, 1.0, 2.0] {
            let (mu_star, _) = scaled_pdf_minimum(m).unwrap();
            let b = 2.0 - 2.0 * m;
            let exact = (-b + (b * b + 8.0 * m).sqrt()) / 4.0;
            assert!((mu_star - exact).abs() < 1e-8 * m, "m={m}: {mu_star} vs {exact}");
        }
        let (mu_star, _) = scaled_pdf_minimum(0.5).unwrap();
        assert!(mu_star > 0.25 && mu_star < 0.5);
    }

    #[test]
    fn envelope_holds_on_fine_grid() {
        let c = compute_c(0.5).unwrap();
        let n = 1_000_000;
        let violations = (1..n)
            .map(|i| 0.5 * i as f64 / n as f64)
            .filter(|&mu| c * mu.exp() > intensity_pdf(mu, 0.5).unwrap() * (1.0 + 1e-12))
            .count();
        assert_eq!(violations, 0);
    }

    #[test]
    fn endpoint_and_out_of_range_handling() {
        let spec = ReshapeSpec::auto(0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert!(!spec.accept(0.0, &mut rng).unwrap());
            assert!(!spec.accept(0.5, &mut rng).unwrap());
        }
        assert!(spec.accept(-1e-9, &mut rng).is_err());
        assert!(spec.accept(0.51, &mut rng).is_err());
        assert!(spec.accept(f64::NAN, &mut rng).is_err());
    }

    #[test]
    fn rejects_scale_above_envelope() {
        let mut spec = ReshapeSpec::auto(0.5).unwrap();
        assert!(spec.validate().is_ok());
        spec.target_scale = 0.97;
        assert!(spec.validate().is_err());
        spec.target_scale = 0.5;
        assert!(spec.validate().is_ok());
    }

    #[test]
    fn keep_fraction_formula() {
        let spec = ReshapeSpec::auto(0.5).unwrap();
        assert!((spec.keep_fraction() - 0.6234).abs() < 1e-3);
        assert!((spec.keep_fraction().powi(2) - 0.3886).abs() < 2e-3);
    }
}
