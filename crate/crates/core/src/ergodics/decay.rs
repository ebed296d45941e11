use serde::{Deserialize, Serialize};

use super::{ErgodicsError, Observable};
use crate::ensemble::ExecMode;
use crate::integrator::{PathObserver, SimError, Simulator};
use crate::spectral::SpectralField;
use crate::stats::{linear_fit, EstimateReport, Flag, LinearFit, RunningStats};

/// Dictionary values at every snapshot of one path.
#[derive(Debug, Clone)]
struct DictionaryTrace {
    dictionary: Vec<Observable>,
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl PathObserver for DictionaryTrace {
    fn snapshot(&mut self, time: f64, x: &SpectralField) {
        self.times.push(time);
        self.values.push(self.dictionary.iter().map(|g| g.eval(x)).collect());
    }
}

/// Decay of `D(t) = max_g |Ê g(X_t^x) − Ê g(X_t^y)|` and the fitted rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub times: Vec<f64>,
    pub distance: Vec<f64>,
    /// Standard error of the maximising dictionary entry at each time.
    pub distance_std_err: Vec<f64>,
    /// Snapshot indices used by the fit.
    pub window: (usize, usize),
    pub fit: Option<LinearFit>,
    /// `γ̂ = −slope`; a lower bound when the signal drowns too early.
    pub gamma: EstimateReport,
    pub blow_ups: usize,
}

/// Two-initial-condition proxy for `ψ`-uniform ergodicity. Paths from `x`
/// and `y` share random streams, so the differences are paired.
pub fn ergodic_decay(
    sim: &Simulator,
    x: &SpectralField,
    y: &SpectralField,
    dictionary: &[Observable],
    n_traj: usize,
    mode: ExecMode,
) -> Result<DecayReport, ErgodicsError> {
    if dictionary.is_empty() {
        return Err(ErgodicsError::Domain("dictionary is empty".into()));
    }
    if n_traj < 2 {
        return Err(ErgodicsError::Domain("need at least two trajectories".into()));
    }
    let make = |_| DictionaryTrace { dictionary: dictionary.to_vec(), times: Vec::new(), values: Vec::new() };
    let from_x = sim.ensemble(x, n_traj, mode, make);
    let from_y = sim.ensemble(y, n_traj, mode, make);

    let mut times = Vec::new();
    let mut diffs: Vec<Vec<RunningStats>> = Vec::new();
    let mut blow_ups = 0;
    for (a, b) in from_x.into_iter().zip(from_y) {
        let (a, b) = match (a, b) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => match e {
                SimError::BlowUp { .. } => {
                    blow_ups += 1;
                    continue;
                }
                e => return Err(e.into()),
            },
        };
        if times.is_empty() {
            times = a.times.clone();
            diffs = vec![vec![RunningStats::new(); dictionary.len()]; times.len()];
        }
        for (row, (va, vb)) in diffs.iter_mut().zip(a.values.iter().zip(&b.values)) {
            for (s, (ga, gb)) in row.iter_mut().zip(va.iter().zip(vb)) {
                s.push(ga - gb);
            }
        }
    }
    if times.is_empty() {
        return Err(ErgodicsError::AllBlownUp);
    }

    let mut distance = Vec::with_capacity(times.len());
    let mut distance_std_err = Vec::with_capacity(times.len());
    for row in &diffs {
        let best = row
            .iter()
            .max_by(|p, q| p.mean().abs().total_cmp(&q.mean().abs()))
            .expect("nonempty dictionary");
        distance.push(best.mean().abs());
        distance_std_err.push(best.std_err());
    }

    // contiguous window from the first positive time while D(t) > 3·se
    let start = 1.min(times.len() - 1);
    let mut end = start;
    while end < times.len() && distance[end] > 3.0 * distance_std_err[end] && distance[end] > 0.0 {
        end += 1;
    }
    let fit = if end - start >= 3 {
        let ln_d: Vec<f64> = distance[start..end].iter().map(|d| d.ln()).collect();
        linear_fit(&times[start..end], &ln_d)
    } else {
        None
    };
    let n = n_traj - blow_ups;
    let mut gamma = match &fit {
        Some(f) => EstimateReport::new("gamma", -f.slope, f.slope_std_err, f.n),
        None => {
            // D(t) ≤ D(0)e^{−γt} must already sit below the noise floor at t
            let t = times.get(end).copied().unwrap_or(f64::NAN);
            let floor = 3.0 * distance_std_err.get(end).copied().unwrap_or(0.0);
            let value = if distance[0] > 0.0 && floor > 0.0 && t > 0.0 {
                ((distance[0] / floor).ln() / t).max(0.0)
            } else {
                0.0
            };
            EstimateReport::new("gamma", value, 0.0, n).with_flag(Flag::LowerBound)
        }
    };
    if blow_ups > 0 {
        gamma = gamma.with_flag(Flag::BlowUpsExcluded);
    }
    Ok(DecayReport { times, distance, distance_std_err, window: (start, end), fit, gamma, blow_ups })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ergodics::b_psi_dictionary;
    use crate::integrator::SimConfig;
    use crate::noise::GaussianSpec;
    use std::f64::consts::PI;

    fn ou() -> Simulator {
        Simulator::new(SimConfig {
            dt: 0.01,
            dt_save: 0.05,
            gaussian: GaussianSpec::single_mode(1, 1, 1.0).unwrap(),
            nonlinearity: false,
            ..SimConfig::quiet(1, 1.0)
        })
        .unwrap()
    }

    #[test]
    fn identical_starts_give_zero_distance() {
        let x = SpectralField::new(vec![0.4]).unwrap();
        let r = ergodic_decay(&ou(), &x, &x, &b_psi_dictionary(), 20, ExecMode::Sequential).unwrap();
        assert!(r.distance.iter().all(|d| *d == 0.0));
        assert!(r.gamma.has(Flag::LowerBound));
    }

    #[test]
    fn ou_rate_is_first_eigenvalue() {
        let x = SpectralField::new(vec![1.0]).unwrap();
        let y = SpectralField::new(vec![-1.0]).unwrap();
        let r = ergodic_decay(&ou(), &x, &y, &[Observable::Mode { k: 1 }], 50, ExecMode::Sequential).unwrap();
        assert!((r.gamma.value / (PI * PI) - 1.0).abs() < 1e-6, "{:?}", r.gamma);
    }

    #[test]
    fn rejects_empty_dictionary() {
        let x = SpectralField::zeros(1);
        assert!(ergodic_decay(&ou(), &x, &x, &[], 10, ExecMode::Sequential).is_err());
    }
}
