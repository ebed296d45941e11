use serde::{Deserialize, Serialize};

use super::{ErgodicsError, Observable};
use crate::ensemble::ExecMode;
use crate::integrator::{PathObserver, SimError, Simulator, Trajectory};
use crate::spectral::SpectralField;
use crate::stats::{batch_means, EstimateReport, Flag, RunningStats};

/// Snapshot values of several observables after a burn-in time.
#[derive(Debug, Clone)]
pub struct SeriesObserver {
    observables: Vec<Observable>,
    burn_in: f64,
    pub times: Vec<f64>,
    pub series: Vec<Vec<f64>>,
}

impl SeriesObserver {
    pub fn new(observables: Vec<Observable>, burn_in: f64) -> Self {
        let series = vec![Vec::new(); observables.len()];
        Self { observables, burn_in, times: Vec::new(), series }
    }
}

impl PathObserver for SeriesObserver {
    fn snapshot(&mut self, time: f64, x: &SpectralField) {
        if time >= self.burn_in - 1e-12 {
            self.times.push(time);
            for (g, s) in self.observables.iter().zip(&mut self.series) {
                s.push(g.eval(x));
            }
        }
    }
}

/// Time averages under the empirical stationary law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantSummary {
    pub burn_in: f64,
    pub horizon: f64,
    /// `μ(g)` for each requested observable, in order.
    pub means: Vec<EstimateReport>,
    pub mu_psi: EstimateReport,
    pub n_samples: usize,
}

fn mean_report(name: &str, series: &[f64], sample_dt: f64) -> Result<EstimateReport, ErgodicsError> {
    let bm = batch_means(series, sample_dt)?;
    let mut r = EstimateReport::new(name, bm.mean, bm.mean_std_err, series.len());
    if bm.under_resolved {
        r = r.with_flag(Flag::UnderResolved);
    }
    if nonstationary(series, sample_dt) {
        r = r.with_flag(Flag::Nonstationary);
    }
    Ok(r)
}

/// First and second halves disagree by more than three combined standard
/// errors. Halves too short for batch means are not judged.
fn nonstationary(series: &[f64], sample_dt: f64) -> bool {
    let (a, b) = series.split_at(series.len() / 2);
    match (batch_means(a, sample_dt), batch_means(b, sample_dt)) {
        (Ok(x), Ok(y)) => {
            let se = x.mean_std_err.hypot(y.mean_std_err);
            (x.mean - y.mean).abs() > 3.0 * se && (x.mean - y.mean).abs() > 1e-12
        }
        _ => false,
    }
}

fn sample_dt(times: &[f64]) -> f64 {
    if times.len() < 2 {
        return 0.0;
    }
    (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64
}

/// Runs one long path from `x0` and averages the observables (and `ψ`) over
/// the snapshots after `burn_in`.
pub fn invariant_estimate(
    sim: &Simulator,
    x0: &SpectralField,
    burn_in: f64,
    observables: &[Observable],
) -> Result<InvariantSummary, ErgodicsError> {
    let horizon = sim.config().horizon;
    if !(burn_in >= 0.0 && burn_in < horizon) {
        return Err(ErgodicsError::Domain(format!("burn-in {burn_in} must lie in [0, {horizon})")));
    }
    let mut all = observables.to_vec();
    all.push(Observable::Psi);
    let mut obs = SeriesObserver::new(all, burn_in);
    sim.run(x0, 0, &mut obs)?;
    let dt = sample_dt(&obs.times);
    let mut means = Vec::with_capacity(observables.len());
    for (g, s) in observables.iter().zip(&obs.series) {
        means.push(mean_report(&g.name(), s, dt)?);
    }
    let mu_psi = mean_report("mu_psi", obs.series.last().expect("ψ appended"), dt)?;
    Ok(InvariantSummary { burn_in, horizon, means, mu_psi, n_samples: obs.times.len() })
}

/// `E g(X_T)` over `n_traj` independent paths from `x0`.
pub fn ensemble_mean(
    sim: &Simulator,
    x0: &SpectralField,
    obs: &Observable,
    n_traj: usize,
    mode: ExecMode,
) -> Result<EstimateReport, ErgodicsError> {
    let (finals, blow_ups) = final_states(sim, x0, n_traj, mode)?;
    let s: RunningStats = finals.iter().map(|x| obs.eval(x)).collect();
    if s.count() == 0 {
        return Err(ErgodicsError::AllBlownUp);
    }
    let r = EstimateReport::from_stats(format!("ensemble_mean_{}", obs.name()), &s);
    Ok(if blow_ups > 0 { r.with_flag(Flag::BlowUpsExcluded) } else { r })
}

pub(crate) fn final_states(
    sim: &Simulator,
    x0: &SpectralField,
    n_traj: usize,
    mode: ExecMode,
) -> Result<(Vec<SpectralField>, usize), ErgodicsError> {
    let finals = crate::ensemble::par_map(n_traj, mode, |i| sim.run(x0, i as u64, &mut ()));
    let mut out = Vec::with_capacity(n_traj);
    let mut blow_ups = 0;
    for r in finals {
        match r {
            Ok(x) => out.push(x),
            Err(SimError::BlowUp { .. }) => blow_ups += 1,
            Err(e) => return Err(e.into()),
        }
    }
    Ok((out, blow_ups))
}

/// Batch-means estimate of `σ²(φ) = lim (1/t) Var(∫₀ᵗ φ(X_s) ds)` from the
/// snapshots of `traj` after `burn_in`.
pub fn sigma_squared(traj: &Trajectory, obs: &Observable, burn_in: f64) -> Result<EstimateReport, ErgodicsError> {
    let start = traj.times.partition_point(|t| *t < burn_in - 1e-12);
    let series: Vec<f64> = traj.states[start..].iter().map(|x| obs.eval(x)).collect();
    sigma_squared_series(&series, sample_dt(&traj.times[start..]), &obs.name())
}

/// [`sigma_squared`] on an evenly sampled series.
pub fn sigma_squared_series(series: &[f64], sample_dt: f64, name: &str) -> Result<EstimateReport, ErgodicsError> {
    let bm = batch_means(series, sample_dt)?;
    let mut r = EstimateReport::new(
        format!("sigma2_{name}"),
        bm.long_run_variance,
        bm.long_run_variance_std_err,
        bm.n_batches,
    );
    if bm.under_resolved {
        r = r.with_flag(Flag::UnderResolved);
    }
    if nonstationary(series, sample_dt) {
        r = r.with_flag(Flag::Nonstationary);
    }
    Ok(r)
}

/// Normalisation `b(t) = scale · t^p` with `0 < p < ½`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpConfig {
    pub p: f64,
    #[serde(default = "unit")]
    pub scale: f64,
    pub observable: Observable,
    /// Reference value `μ̂(φ)`.
    pub reference: f64,
}

fn unit() -> f64 {
    1.0
}

impl MdpConfig {
    pub fn new(observable: Observable, reference: f64) -> Self {
        Self { p: 0.25, scale: 1.0, observable, reference }
    }

    pub fn validate(&self) -> Result<(), ErgodicsError> {
        if !(self.p > 0.0 && self.p < 0.5) {
            return Err(ErgodicsError::Domain(format!("p = {} outside (0, ½)", self.p)));
        }
        if !(self.scale > 0.0 && self.scale.is_finite() && self.reference.is_finite()) {
            return Err(ErgodicsError::Domain("scale must be positive and reference finite".into()));
        }
        Ok(())
    }

    pub fn b(&self, t: f64) -> f64 {
        self.scale * t.powf(self.p)
    }
}

/// `(1/(b(t)√t)) ∫₀ᵗ (φ(X_s) − μ̂(φ)) ds` with the trapezoid rule on the
/// snapshot grid.
pub fn mdp_functional(traj: &Trajectory, cfg: &MdpConfig) -> Result<f64, ErgodicsError> {
    cfg.validate()?;
    if traj.len() < 2 {
        return Err(ErgodicsError::EmptyTrajectory);
    }
    let mut integral = 0.0;
    let mut prev = cfg.observable.eval(&traj.states[0]) - cfg.reference;
    for i in 1..traj.len() {
        let cur = cfg.observable.eval(&traj.states[i]) - cfg.reference;
        integral += 0.5 * (prev + cur) * (traj.times[i] - traj.times[i - 1]);
        prev = cur;
    }
    let t = traj.times[traj.len() - 1] - traj.times[0];
    Ok(integral / (cfg.b(t) * t.sqrt()))
}

/// Streams `∫₀ᵗ (φ(X_s) − c) ds` at the integrator resolution.
#[derive(Debug, Clone)]
pub struct CenteredIntegral {
    observable: Observable,
    reference: f64,
    pub integral: f64,
    pub elapsed: f64,
}

impl CenteredIntegral {
    pub fn new(observable: Observable, reference: f64) -> Self {
        Self { observable, reference, integral: 0.0, elapsed: 0.0 }
    }
}

impl PathObserver for CenteredIntegral {
    fn advance(&mut self, t0: f64, x0: &SpectralField, t1: f64, x1: &SpectralField) {
        let a = self.observable.eval(x0) - self.reference;
        let b = self.observable.eval(x1) - self.reference;
        self.integral += 0.5 * (a + b) * (t1 - t0);
        self.elapsed = t1;
    }
}

/// Ensemble of MDP functionals at the horizon, plus the variance of the
/// `√t`-normalised integral, which tends to `σ²(φ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpReport {
    pub horizon: f64,
    pub b: f64,
    pub values: Vec<f64>,
    pub mean: EstimateReport,
    /// Sample variance of `t^{-1/2} ∫₀ᵗ (φ − μ̂) ds`.
    pub clt_variance: EstimateReport,
    pub blow_ups: usize,
}

pub fn mdp_ensemble(
    sim: &Simulator,
    x0: &SpectralField,
    cfg: &MdpConfig,
    n_traj: usize,
    mode: ExecMode,
) -> Result<MdpReport, ErgodicsError> {
    cfg.validate()?;
    if n_traj < 2 {
        return Err(ErgodicsError::Domain("need at least two trajectories".into()));
    }
    let t = sim.config().horizon;
    let results = sim.ensemble(x0, n_traj, mode, |_| CenteredIntegral::new(cfg.observable.clone(), cfg.reference));
    let mut normalised = Vec::with_capacity(n_traj);
    let mut blow_ups = 0;
    for r in results {
        match r {
            Ok(o) => normalised.push(o.integral / t.sqrt()),
            Err(SimError::BlowUp { .. }) => blow_ups += 1,
            Err(e) => return Err(e.into()),
        }
    }
    if normalised.len() < 2 {
        return Err(ErgodicsError::AllBlownUp);
    }
    let b = cfg.b(t);
    let values: Vec<f64> = normalised.iter().map(|v| v / b).collect();
    let n = normalised.len();
    let s: RunningStats = normalised.iter().copied().collect();
    let var = s.variance();
    // variance of the sample variance under a Gaussian approximation
    let var_se = var * (2.0 / (n - 1) as f64).sqrt();
    let mean_stats: RunningStats = values.iter().copied().collect();
    let mut mean = EstimateReport::from_stats(format!("mdp_{}", cfg.observable.name()), &mean_stats);
    let mut clt_variance = EstimateReport::new(format!("clt_variance_{}", cfg.observable.name()), var, var_se, n);
    if blow_ups > 0 {
        mean = mean.with_flag(Flag::BlowUpsExcluded);
        clt_variance = clt_variance.with_flag(Flag::BlowUpsExcluded);
    }
    Ok(MdpReport { horizon: t, b, values, mean, clt_variance, blow_ups })
}
