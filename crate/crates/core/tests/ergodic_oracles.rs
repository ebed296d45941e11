//! Closed-form Ornstein–Uhlenbeck oracles and self-consistency checks on the
//! default jump model.

use std::f64::consts::PI;

use sburgers_core::ensemble::ExecMode;
use sburgers_core::ergodics::{
    b_psi_dictionary, deviation_tail_probe, ergodic_decay, hitting_times, invariant_estimate, mdp_ensemble,
    occupation_measure, sigma_squared, Bins, MdpConfig, Observable,
};
use sburgers_core::integrator::{SimConfig, Simulator};
use sburgers_core::lyapunov::LyapunovModel;
use sburgers_core::noise::GaussianSpec;
use sburgers_core::spectral::SpectralField;
use sburgers_core::stats::normal_cdf;

fn ou(horizon: f64, seed: u64) -> Simulator {
    Simulator::new(SimConfig {
        dt: 0.01,
        dt_save: 0.01,
        gaussian: GaussianSpec::single_mode(1, 1, 1.0).unwrap(),
        nonlinearity: false,
        seed,
        ..SimConfig::quiet(1, horizon)
    })
    .unwrap()
}

const OU_SIGMA2: f64 = 1.0 / (PI * PI * PI * PI);

#[test]
fn ou_occupation_matches_stationary_normal() {
    let traj = ou(1000.0, 3).trajectory(&SpectralField::zeros(1), 0).unwrap();
    let sd = (1.0 / (2.0 * PI * PI)).sqrt();
    let h = occupation_measure(&traj, &Observable::Mode { k: 1 }, Bins::Uniform { low: -5.0 * sd, high: 5.0 * sd, count: 200 })
        .unwrap();
    let d = h.kolmogorov_distance(|v| normal_cdf(v, 0.0, sd));
    assert!(d <= 0.02, "Kolmogorov distance {d}");
}

#[test]
fn ou_clt_variance_of_time_integral() {
    let sim = ou(1000.0, 5);
    let cfg = MdpConfig::new(Observable::Mode { k: 1 }, 0.0);
    let r = mdp_ensemble(&sim, &SpectralField::zeros(1), &cfg, 1000, ExecMode::Parallel).unwrap();
    let rel = r.clt_variance.value / OU_SIGMA2 - 1.0;
    assert!(rel.abs() < 0.15, "{:?}", r.clt_variance);
}

#[test]
fn ou_deviation_rate_is_gaussian_scale() {
    let t = 200.0;
    let sim = ou(t + 1.0, 9);
    let r = 2.0 * (OU_SIGMA2 / t).sqrt();
    let table = deviation_tail_probe(
        &sim,
        &SpectralField::zeros(1),
        &Observable::Mode { k: 1 },
        0.0,
        &[0.0, 0.5 * r, r],
        &[t],
        1.0,
        2000,
        ExecMode::Parallel,
    )
    .unwrap();
    assert!(table.monotone_in_r());
    let cell = table.cell(t, r).unwrap();
    let predicted = r * r / (2.0 * OU_SIGMA2);
    let ratio = cell.rate / predicted;
    assert!((0.5..=2.0).contains(&ratio), "rate {} vs {predicted}", cell.rate);
}

#[test]
fn ou_sigma_squared_for_a_bounded_observable_is_positive() {
    let traj = ou(200.0, 4).trajectory(&SpectralField::zeros(1), 0).unwrap();
    let r = sigma_squared(&traj, &Observable::Dictionary { index: 0 }, 1.0).unwrap();
    assert!(r.value > 0.0 && r.value < OU_SIGMA2);
}

#[test]
fn default_model_mu_psi_is_stable_under_doubling() {
    let x0 = SpectralField::zeros(32);
    let short = Simulator::new(SimConfig::default_model(32, 60.0)).unwrap();
    let long = Simulator::new(SimConfig::default_model(32, 120.0)).unwrap();
    let a = invariant_estimate(&short, &x0, 5.0, &[]).unwrap().mu_psi;
    let b = invariant_estimate(&long, &x0, 5.0, &[]).unwrap().mu_psi;
    assert!(a.value.is_finite() && a.value > 1.0);
    assert!((a.value - b.value).abs() <= a.ci + b.ci, "{a:?} vs {b:?}");
}

#[test]
fn default_model_mixes_at_a_positive_rate() {
    let cfg = SimConfig { dt_save: 0.05, ..SimConfig::default_model(32, 1.0) };
    let sim = Simulator::new(cfg).unwrap();
    let x = SpectralField::basis(32, 1).scaled(2.0);
    let y = SpectralField::basis(32, 2).scaled(-1.0);
    let r = ergodic_decay(&sim, &x, &y, &b_psi_dictionary(), 100, ExecMode::Parallel).unwrap();
    assert!(r.gamma.lower() > 0.0, "{:?}", r.gamma);
}

#[test]
fn default_model_hitting_tail_is_log_linear() {
    let cfg = SimConfig::default_model(32, 1.05);
    let c = LyapunovModel::from_config(&cfg).unwrap().constants;
    let sim = Simulator::new(cfg).unwrap();
    let x0 = SpectralField::basis(32, 1).scaled(4.0 * c.c1 / PI);
    let r = hitting_times(&sim, &c, &x0, 500, &[], ExecMode::Parallel).unwrap();
    let fit = r.tau.fit.expect("tail fit");
    assert!(fit.slope < 0.0 && fit.r_squared >= 0.9, "{fit:?}");
    assert_eq!(r.tau.censored, 0);
}
