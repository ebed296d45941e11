use serde::{Deserialize, Serialize};

use super::{ErgodicsError, Observable};
use crate::ensemble::ExecMode;
use crate::integrator::{PathObserver, SimError, Simulator};
use crate::spectral::SpectralField;
use crate::stats::clopper_pearson;

/// Time averages `(1/t) ∫_{b}^{b+t} φ(X_s) ds` at a grid of window lengths.
#[derive(Debug, Clone)]
struct WindowAverages {
    observable: Observable,
    burn_in: f64,
    grid: Vec<f64>,
    integral: f64,
    next: usize,
    averages: Vec<f64>,
}

impl PathObserver for WindowAverages {
    fn advance(&mut self, t0: f64, x0: &SpectralField, t1: f64, x1: &SpectralField) {
        if t1 <= self.burn_in + 1e-12 || self.next >= self.grid.len() {
            return;
        }
        // burn-in ends on a step boundary, so a step never straddles it
        self.integral += 0.5 * (self.observable.eval(x0) + self.observable.eval(x1)) * (t1 - t0);
        let elapsed = t1 - self.burn_in;
        while self.next < self.grid.len() && elapsed >= self.grid[self.next] - 1e-9 {
            self.averages.push(self.integral / self.grid[self.next]);
            self.next += 1;
        }
    }

    fn keep_going(&self) -> bool {
        self.next < self.grid.len()
    }
}

/// One cell of the deviation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationCell {
    pub t: f64,
    pub r: f64,
    pub count: usize,
    pub n: usize,
    pub probability: f64,
    /// `−(1/t) log P̂`; when no deviation was seen, the rate implied by the
    /// Clopper–Pearson upper limit of the probability.
    pub rate: f64,
    pub lower_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationTable {
    pub observable: String,
    pub reference: f64,
    pub cells: Vec<DeviationCell>,
    pub blow_ups: usize,
}

impl DeviationTable {
    pub fn cell(&self, t: f64, r: f64) -> Option<&DeviationCell> {
        self.cells.iter().find(|c| c.t == t && c.r == r)
    }

    /// For each `t`, whether the rates are nondecreasing in `r`.
    pub fn monotone_in_r(&self) -> bool {
        self.cells.windows(2).all(|w| w[0].t != w[1].t || w[1].rate >= w[0].rate - 1e-15)
    }
}

/// Empirical `−(1/t) log P̂(|ℒ_t(φ) − μ̂(φ)| > r)` over the given grids.
/// Averaging windows start after `burn_in`.
#[allow(clippy::too_many_arguments)]
pub fn deviation_tail_probe(
    sim: &Simulator,
    x0: &SpectralField,
    obs: &Observable,
    reference: f64,
    r_grid: &[f64],
    t_grid: &[f64],
    burn_in: f64,
    n_traj: usize,
    mode: ExecMode,
) -> Result<DeviationTable, ErgodicsError> {
    let horizon = sim.config().horizon;
    let mut t_sorted = t_grid.to_vec();
    t_sorted.sort_by(f64::total_cmp);
    let mut r_sorted = r_grid.to_vec();
    r_sorted.sort_by(f64::total_cmp);
    if t_sorted.is_empty() || r_sorted.is_empty() || n_traj == 0 {
        return Err(ErgodicsError::Domain("empty grid or ensemble".into()));
    }
    if t_sorted[0] <= 0.0 || burn_in < 0.0 || burn_in + t_sorted[t_sorted.len() - 1] > horizon + 1e-9 {
        return Err(ErgodicsError::Domain(format!("windows must fit in (burn-in, {horizon}]")));
    }
    if r_sorted[0] < 0.0 {
        return Err(ErgodicsError::Domain("deviation radii must be nonnegative".into()));
    }
    let results = sim.ensemble(x0, n_traj, mode, |_| WindowAverages {
        observable: obs.clone(),
        burn_in,
        grid: t_sorted.clone(),
        integral: 0.0,
        next: 0,
        averages: Vec::new(),
    });
    let mut averages = Vec::with_capacity(n_traj);
    let mut blow_ups = 0;
    for r in results {
        match r {
            Ok(o) => averages.push(o.averages),
            Err(SimError::BlowUp { .. }) => blow_ups += 1,
            Err(e) => return Err(e.into()),
        }
    }
    let n = averages.len();
    if n == 0 {
        return Err(ErgodicsError::AllBlownUp);
    }
    let mut cells = Vec::with_capacity(t_sorted.len() * r_sorted.len());
    for (j, &t) in t_sorted.iter().enumerate() {
        for &r in &r_sorted {
            let count = averages.iter().filter(|a| (a[j] - reference).abs() > r).count();
            let probability = count as f64 / n as f64;
            let (rate, lower_bound) = if count == 0 {
                (-clopper_pearson(0, n, 0.95).1.ln() / t, true)
            } else {
                (-probability.ln() / t, false)
            };
            cells.push(DeviationCell { t, r, count, n, probability, rate, lower_bound });
        }
    }
    Ok(DeviationTable { observable: obs.name(), reference, cells, blow_ups })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::SimConfig;
    use crate::noise::GaussianSpec;

    fn ou(horizon: f64) -> Simulator {
        Simulator::new(SimConfig {
            dt: 0.01,
            dt_save: 0.01,
            gaussian: GaussianSpec::single_mode(1, 1, 1.0).unwrap(),
            nonlinearity: false,
            ..SimConfig::quiet(1, horizon)
        })
        .unwrap()
    }

    #[test]
    fn zero_radius_has_probability_one_and_rates_grow_with_r() {
        let t = deviation_tail_probe(
            &ou(3.0),
            &SpectralField::zeros(1),
            &Observable::Mode { k: 1 },
            0.0,
            &[0.0, 0.01, 0.05, 0.5],
            &[1.0, 2.0],
            0.5,
            200,
            ExecMode::Sequential,
        )
        .unwrap();
        let c = t.cell(1.0, 0.0).unwrap();
        assert_eq!(c.probability, 1.0);
        assert_eq!(c.rate, 0.0);
        assert!(t.monotone_in_r());
        let far = t.cell(2.0, 0.5).unwrap();
        assert_eq!(far.count, 0);
        assert!(far.lower_bound && far.rate > 0.0);
    }

    #[test]
    fn windows_must_fit_the_horizon() {
        let r = deviation_tail_probe(
            &ou(1.0),
            &SpectralField::zeros(1),
            &Observable::Mode { k: 1 },
            0.0,
            &[0.1],
            &[1.0],
            0.5,
            10,
            ExecMode::Sequential,
        );
        assert!(r.is_err());
    }
}
