use serde::{Deserialize, Serialize};

use super::ErgodicsError;
use crate::ensemble::ExecMode;
use crate::integrator::{PathObserver, SimError, Simulator};
use crate::lyapunov::DriftConstants;
use crate::spectral::SpectralField;
use crate::stats::{linear_fit, log_mean_exp, EstimateReport, Flag, LinearFit, RunningStats};

/// `Ê e^{λτ}` is only attempted below this fraction of the fitted tail rate.
pub const MOMENT_RATE_FRACTION: f64 = 0.8;

/// First entrance times into `K = {‖x‖_V ≤ radius}` from `t = 0` and from
/// `t = 1`, checked at every sub-step and right after every jump.
#[derive(Debug, Clone)]
pub struct HittingObserver {
    radius: f64,
    delay: f64,
    pub tau: Option<f64>,
    pub tau_delayed: Option<f64>,
}

impl HittingObserver {
    pub fn new(radius: f64, delay: f64) -> Self {
        Self { radius, delay, tau: None, tau_delayed: None }
    }

    fn visit(&mut self, t: f64, x: &SpectralField) {
        if x.norm_v() <= self.radius {
            self.tau.get_or_insert(t);
            if t >= self.delay - 1e-12 {
                self.tau_delayed.get_or_insert(t);
            }
        }
    }
}

impl PathObserver for HittingObserver {
    fn advance(&mut self, _t0: f64, _x0: &SpectralField, t1: f64, x1: &SpectralField) {
        self.visit(t1, x1);
    }

    fn jump(&mut self, time: f64, _pre: &SpectralField, post: &SpectralField, _mark: f64) {
        self.visit(time, post);
    }

    fn snapshot(&mut self, time: f64, x: &SpectralField) {
        self.visit(time, x);
    }

    fn keep_going(&self) -> bool {
        self.tau_delayed.is_none()
    }
}

/// Empirical survival function and exponential-moment estimates for one
/// family of entrance times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailSummary {
    /// Entrance times; `None` when censored at the horizon.
    pub samples: Vec<Option<f64>>,
    pub censored: usize,
    /// `(t, P̂(τ > t))` at the distinct observed times.
    pub survival: Vec<(f64, f64)>,
    pub fit: Option<LinearFit>,
    /// Fitted rate of `log P̂(τ > t)`; absent when too few points remain.
    pub tail_rate: Option<EstimateReport>,
    /// `(λ, Ê e^{λτ})` for the requested grid.
    pub moments: Vec<(f64, EstimateReport)>,
}

impl TailSummary {
    /// `Ê e^{λτ}` with censored samples counted at `horizon`. Flagged
    /// divergent unless `λ` sits below [`MOMENT_RATE_FRACTION`] of the fitted
    /// tail rate.
    pub fn exp_moment(&self, lambda: f64, horizon: f64) -> EstimateReport {
        let n = self.samples.len();
        let name = format!("exp_moment_{lambda}");
        let divergent = match &self.tail_rate {
            Some(r) => lambda >= MOMENT_RATE_FRACTION * r.value,
            None => lambda > 0.0,
        };
        if divergent || n == 0 {
            return EstimateReport::new(name, f64::INFINITY, f64::NAN, n).with_flag(Flag::Divergent);
        }
        let exps: Vec<f64> = self.samples.iter().map(|s| lambda * s.unwrap_or(horizon)).collect();
        let max = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let scaled: RunningStats = exps.iter().map(|e| (e - max).exp()).collect();
        let r = EstimateReport::new(name, log_mean_exp(&exps).exp(), max.exp() * scaled.std_err(), n);
        if self.censored > 0 {
            r.with_flag(Flag::Censored).with_flag(Flag::LowerBound)
        } else {
            r
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HittingReport {
    pub radius: f64,
    pub horizon: f64,
    pub tau: TailSummary,
    pub tau_delayed: TailSummary,
    pub blow_ups: usize,
}

/// Minimum number of uncensored survivors at a fitted point.
const MIN_SURVIVORS: usize = 10;

fn summarize(samples: Vec<Option<f64>>, horizon: f64, lambdas: &[f64]) -> TailSummary {
    let n = samples.len();
    let censored = samples.iter().filter(|s| s.is_none()).count();
    let mut hits: Vec<f64> = samples.iter().flatten().copied().collect();
    hits.sort_by(f64::total_cmp);

    let mut survival = Vec::new();
    let mut i = 0;
    while i < hits.len() {
        let t = hits[i];
        while i < hits.len() && hits[i] == t {
            i += 1;
        }
        survival.push((t, (n - i) as f64 / n as f64));
    }

    // tail window: survival at most ½ with enough survivors left
    let min_s = MIN_SURVIVORS as f64 / n as f64;
    let window: Vec<(f64, f64)> = survival.iter().copied().filter(|(_, s)| *s <= 0.5 && *s >= min_s).collect();
    let fit = if window.len() >= 5 {
        let (x, y): (Vec<f64>, Vec<f64>) = window.iter().map(|(t, s)| (*t, s.ln())).unzip();
        linear_fit(&x, &y)
    } else {
        None
    };
    let tail_rate = fit
        .as_ref()
        .filter(|f| f.slope < 0.0)
        .map(|f| EstimateReport::new("tail_rate", -f.slope, f.slope_std_err, f.n));

    let mut summary = TailSummary { samples, censored, survival, fit, tail_rate, moments: Vec::new() };
    summary.moments = lambdas.iter().map(|&l| (l, summary.exp_moment(l, horizon))).collect();
    summary
}

/// Entrance times of `n_traj` paths from `x0` into the drift set `K` of
/// `constants`, censored at the simulator horizon.
pub fn hitting_times(
    sim: &Simulator,
    constants: &DriftConstants,
    x0: &SpectralField,
    n_traj: usize,
    lambdas: &[f64],
    mode: ExecMode,
) -> Result<HittingReport, ErgodicsError> {
    if n_traj == 0 {
        return Err(ErgodicsError::Domain("need at least one trajectory".into()));
    }
    let horizon = sim.config().horizon;
    let radius = constants.k_radius;
    let results = sim.ensemble(x0, n_traj, mode, |_| HittingObserver::new(radius, 1.0));
    let mut tau = Vec::with_capacity(n_traj);
    let mut tau_delayed = Vec::with_capacity(n_traj);
    let mut blow_ups = 0;
    for r in results {
        match r {
            Ok(o) => {
                tau.push(o.tau);
                tau_delayed.push(o.tau_delayed);
            }
            Err(SimError::BlowUp { .. }) => blow_ups += 1,
            Err(e) => return Err(e.into()),
        }
    }
    if tau.is_empty() {
        return Err(ErgodicsError::AllBlownUp);
    }
    if tau.iter().all(Option::is_none) {
        return Err(ErgodicsError::AllCensored);
    }
    Ok(HittingReport {
        radius,
        horizon,
        tau: summarize(tau, horizon, lambdas),
        tau_delayed: summarize(tau_delayed, horizon, lambdas),
        blow_ups,
    })
}
