//! Decoy programs against closed-form and brute-force references.

use std::f64::consts::FRAC_PI_4;

use fpqkd_core::decoy::{
    decoy_analysis, photon_moments, poisson, solve_bounds, DecoyConstraintSet, Objective, Observation, PhotonMoments,
};
use fpqkd_core::pipeline::{analytic_point, analyze, single_photon_truth, Geometry, Model};
use fpqkd_core::postselect::{classify_point, Region};
use fpqkd_core::State;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Vacuum + weak decoy lower bound on `Y_1` for signal `mu` and decoy `nu`.
fn two_decoy_bound(mu: f64, nu: f64, q_mu: f64, q_nu: f64, y0: f64) -> f64 {
    mu / (mu * nu - nu * nu)
        * (q_nu * nu.exp() - q_mu * mu.exp() * nu * nu / (mu * mu) - (mu * mu - nu * nu) / (mu * mu) * y0)
}

fn gain(mu: f64, eta: f64, y0: f64) -> f64 {
    1.0 - (1.0 - y0) * (-eta * mu).exp()
}

fn point_set(mus: &[f64], eta: f64, y0: f64, n_cut: usize) -> DecoyConstraintSet {
    let mut cs = DecoyConstraintSet::new("point", n_cut);
    for &mu in mus {
        cs.push(PhotonMoments::point(format!("{mu}"), mu, n_cut), Observation::exact(gain(mu, eta, y0), 0.0));
    }
    cs
}

#[test]
fn point_mode_matches_two_decoy_bound() {
    let grid = [
        (0.5, 0.1, 0.01, 1e-6),
        (0.5, 0.1, 0.1, 1e-6),
        (0.6, 0.2, 0.001, 1e-5),
        (0.8, 0.1, 0.05, 1e-7),
        (0.4, 0.05, 0.02, 1e-6),
        (0.7, 0.15, 0.003, 1e-4),
        (0.3, 0.1, 0.5, 1e-6),
        (0.55, 0.12, 0.0005, 2e-6),
        (0.9, 0.3, 0.01, 1e-5),
        (0.45, 0.08, 0.2, 5e-7),
    ];
    for (mu, nu, eta, y0) in grid {
        let cs = point_set(&[mu, nu, 0.0], eta, y0, 10);
        let lp = solve_bounds(&cs, Objective::MinY1, 0.0).unwrap();
        let oracle = two_decoy_bound(mu, nu, gain(mu, eta, y0), gain(nu, eta, y0), y0);
        let rel = (lp.bound - oracle).abs() / oracle;
        assert!(rel < 1e-6, "({mu}, {nu}, {eta}, {y0}): lp {} vs {oracle}", lp.bound);
        assert!(lp.diagnostics.duality_gap < 1e-8);
    }
}

#[test]
fn larger_cutoff_never_loosens_the_bound() {
    let mut model = Model::standard().unwrap();
    let g10 = Geometry::for_model(&model).unwrap();
    let a10 = analytic_point(&g10, &model, 16.7, None).unwrap();
    model.n_cut = 6;
    let g6 = Geometry::for_model(&model).unwrap();
    let a6 = analytic_point(&g6, &model, 16.7, None).unwrap();
    assert!(a10.bounds.y1_low >= a6.bounds.y1_low - 1e-6);
}

fn thin_region(label: &str, r: f64, eps: f64) -> Region {
    Region {
        label: label.into(),
        polar_min: FRAC_PI_4 - eps,
        polar_max: FRAC_PI_4 + eps,
        radius_min: r,
        radius_max: Some(r * (1.0 + eps)),
        state: Some(State::H),
        azimuth_windows: Vec::new(),
        decoy_group: None,
        key: false,
    }
}

#[test]
fn shrinking_regions_reproduces_point_analysis() {
    let density = fpqkd_core::postselect::ReshapedDensity::new(0.5);
    let (eta, y0) = (0.01, 1e-6);
    let radii = [0.5 / 2f64.sqrt(), 0.1 / 2f64.sqrt(), 0.02 / 2f64.sqrt()];
    let mut thin = DecoyConstraintSet::new("thin", 10);
    let mut point = DecoyConstraintSet::new("point", 10);
    for (i, &r) in radii.iter().enumerate() {
        let mu = r * 2f64.sqrt();
        let m = photon_moments(&thin_region(&format!("t{i}"), r, 1e-9), &density, 10).unwrap();
        let p = PhotonMoments::point(format!("p{i}"), mu, 10);
        for n in 0..=3 {
            assert!((m.p[n] - p.p[n]).abs() <= 1e-6 * p.p[n], "n={n}: {} vs {}", m.p[n], p.p[n]);
        }
        let obs = Observation::exact(gain(mu, eta, y0), 0.0);
        thin.push(m, obs);
        point.push(p, obs);
    }
    let a = solve_bounds(&thin, Objective::MinY1, 0.0).unwrap().bound;
    let b = solve_bounds(&point, Objective::MinY1, 0.0).unwrap().bound;
    assert!((a - b).abs() < 1e-6 * b, "{a} vs {b}");
}

#[test]
fn x1_single_photon_moment_matches_monte_carlo() {
    let model = Model::standard().unwrap();
    let geom = Geometry::for_model(&model).unwrap();
    let idx = model.regions.iter().position(|r| r.label == "X1").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut n, mut s, mut s2) = (0u64, 0.0, 0.0);
    for _ in 0..20_000_000 {
        let (h, v, phi) = geom.density.sample(&mut rng);
        if classify_point(h, v, phi, &model.regions).regions.contains(idx) {
            let p1 = poisson(1, h + v);
            n += 1;
            s += p1;
            s2 += p1 * p1;
        }
    }
    let mean = s / n as f64;
    let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
    let exact = geom.moments[idx].p[1];
    assert!((mean - exact).abs() < 4.0 * se, "{mean} vs {exact} (se {se})");
}

#[test]
fn bounds_sandwich_the_truth_on_expected_data() {
    let model = Model::standard().unwrap();
    let geom = Geometry::for_model(&model).unwrap();
    for loss in [3.0, 10.0, 16.7, 25.0] {
        let a = analytic_point(&geom, &model, loss, None).unwrap();
        let (y1, e1) = single_photon_truth(&geom, &model.channel.with_loss(loss));
        assert!(a.bounds.y1_low <= y1 * (1.0 + 1e-9), "{loss} dB: {} > {y1}", a.bounds.y1_low);
        assert!(a.bounds.y1_low >= 0.5 * y1, "{loss} dB: {} << {y1}", a.bounds.y1_low);
        assert!(a.bounds.e1_high >= e1, "{loss} dB: {} < {e1}", a.bounds.e1_high);
    }
}

#[test]
fn noiseless_channel_gives_tiny_phase_error_bound() {
    let mut model = Model::standard().unwrap();
    model.channel.misalignment = 0.0;
    model.channel.dark_prob = 0.0;
    let geom = Geometry::for_model(&model).unwrap();
    let a = analytic_point(&geom, &model, 16.7, None).unwrap();
    // the X sectors still admit states a little off the D/A axis
    let (_, e1) = single_photon_truth(&geom, &model.channel.with_loss(16.7));
    assert!(a.bounds.e1_high >= e1);
    assert!(e1 < 1e-2, "true e1 {e1}");
}

#[test]
fn measured_x_table_supports_a_positive_rate() {
    let model = Model::standard().unwrap();
    let geom = Geometry::for_model(&model).unwrap();
    let expected = analytic_point(&geom, &model, 16.7, None).unwrap();
    // X-basis gains and error rates measured at 16.7 dB, Z from the model
    let measured = [(1.40e-3, 0.0149), (0.61e-3, 0.0161), (0.11e-3, 0.0212)];
    // groups are ordered Z1..Z3 then X1..X3
    let obs: Vec<Observation> = expected
        .z_set
        .constraints
        .iter()
        .map(|c| c.observed)
        .chain(measured.iter().map(|&(q, e)| Observation::exact(q, q * e)))
        .collect();
    let key = Observation::exact(0.95e-3, 0.95e-3 * 0.023);
    let a = analyze(&geom, &obs, key, 0.0, 1.16).unwrap();
    assert!(a.key.rate > 0.0, "{:?} {:?}", a.bounds, a.key);
}

#[test]
fn zero_errors_give_zero_phase_error() {
    let mut z = point_set(&[0.5, 0.1, 0.0], 0.05, 0.0, 10);
    z.label = "Z".into();
    let x = z.clone();
    let b = decoy_analysis(&z, &x, 0.0).unwrap();
    assert!(b.e1_high < 1e-3);
}
