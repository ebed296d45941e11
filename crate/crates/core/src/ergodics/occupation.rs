use serde::{Deserialize, Serialize};

use super::{ErgodicsError, Observable};
use crate::integrator::Trajectory;

/// How to choose histogram bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "bins", rename_all = "snake_case")]
pub enum Bins {
    Uniform { low: f64, high: f64, count: usize },
    /// `count` equal bins spanning the observed range.
    Auto { count: usize },
}

impl Bins {
    fn edges(&self, values: &[f64]) -> Result<Vec<f64>, ErgodicsError> {
        let (low, high, count) = match *self {
            Bins::Uniform { low, high, count } => {
                if !(low < high) || count == 0 {
                    return Err(ErgodicsError::Domain(format!("bad bins [{low}, {high}] × {count}")));
                }
                (low, high, count)
            }
            Bins::Auto { count } => {
                if count == 0 {
                    return Err(ErgodicsError::Domain("need at least one bin".into()));
                }
                let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if lo == hi {
                    (lo - 0.5, hi + 0.5, 1)
                } else {
                    (lo, hi, count)
                }
            }
        };
        let w = (high - low) / count as f64;
        Ok((0..=count).map(|i| if i == count { high } else { low + i as f64 * w }).collect())
    }
}

/// Time-weighted histogram of an observable along a path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupationHistogram {
    pub observable: String,
    pub edges: Vec<f64>,
    /// Time spent in each bin.
    pub weights: Vec<f64>,
    pub total_time: f64,
}

impl OccupationHistogram {
    pub fn masses(&self) -> Vec<f64> {
        self.weights.iter().map(|w| w / self.total_time).collect()
    }

    pub fn n_bins(&self) -> usize {
        self.weights.len()
    }

    /// Bin index for `v`, with out-of-range values clamped to the end bins.
    pub fn bin_of(&self, v: f64) -> usize {
        let n = self.weights.len();
        self.edges[1..n].partition_point(|e| *e <= v)
    }

    /// Adds the occupation time of another path with identical bins.
    pub fn merge(&mut self, other: &Self) -> Result<(), ErgodicsError> {
        if self.edges != other.edges {
            return Err(ErgodicsError::Domain("histograms have different bins".into()));
        }
        self.weights.iter_mut().zip(&other.weights).for_each(|(a, b)| *a += b);
        self.total_time += other.total_time;
        Ok(())
    }

    /// Largest gap between the histogram CDF and `cdf` over the interior edges.
    pub fn kolmogorov_distance(&self, cdf: impl Fn(f64) -> f64) -> f64 {
        let mut acc = 0.0;
        let mut d: f64 = 0.0;
        for (i, w) in self.weights.iter().enumerate().take(self.n_bins().saturating_sub(1)) {
            acc += w;
            d = d.max((acc / self.total_time - cdf(self.edges[i + 1])).abs());
        }
        d
    }
}

/// Occupation measure of `obs(X_s)` over `[0, t]` with left-point weights on
/// the snapshot grid.
pub fn occupation_measure(
    traj: &Trajectory,
    obs: &Observable,
    bins: Bins,
) -> Result<OccupationHistogram, ErgodicsError> {
    if traj.len() < 2 {
        return Err(ErgodicsError::EmptyTrajectory);
    }
    let values: Vec<f64> = traj.states.iter().map(|x| obs.eval(x)).collect();
    let edges = bins.edges(&values[..values.len() - 1])?;
    let mut hist = OccupationHistogram {
        observable: obs.name(),
        weights: vec![0.0; edges.len() - 1],
        edges,
        total_time: 0.0,
    };
    for (i, w) in traj.times.windows(2).enumerate() {
        let dt = w[1] - w[0];
        let b = hist.bin_of(values[i]);
        hist.weights[b] += dt;
        hist.total_time += dt;
    }
    Ok(hist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::SimConfig;
    use crate::spectral::SpectralField;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn path(values: &[f64], dt: f64) -> Trajectory {
        let times = (0..values.len()).map(|i| i as f64 * dt).collect();
        let states = values.iter().map(|v| SpectralField::new(vec![*v]).unwrap()).collect();
        Trajectory::from_snapshots(times, states, SimConfig::quiet(1, 1.0))
    }

    #[test]
    fn constant_path_gives_unit_mass() {
        let traj = path(&[0.0; 11], 0.1);
        let h = occupation_measure(&traj, &Observable::NormH, Bins::Auto { count: 10 }).unwrap();
        assert_eq!(h.n_bins(), 1);
        assert_eq!(h.masses(), vec![1.0]);
        let h = occupation_measure(&traj, &Observable::NormH, Bins::Uniform { low: -1.0, high: 1.0, count: 4 })
            .unwrap();
        assert_eq!(h.masses()[h.bin_of(0.0)], 1.0);
    }

    #[test]
    fn two_segments_split_evenly() {
        let traj = path(&[1.0, 3.0, 3.0], 0.5);
        let h = occupation_measure(&traj, &Observable::Mode { k: 1 }, Bins::Uniform { low: 0.0, high: 4.0, count: 2 })
            .unwrap();
        assert_eq!(h.masses(), vec![0.5, 0.5]);
    }

    #[test]
    fn rejects_short_paths_and_bad_bins() {
        let traj = path(&[1.0], 0.5);
        assert!(occupation_measure(&traj, &Observable::NormH, Bins::Auto { count: 3 }).is_err());
        let traj = path(&[1.0, 2.0], 0.5);
        assert!(occupation_measure(&traj, &Observable::NormH, Bins::Uniform { low: 1.0, high: 1.0, count: 3 }).is_err());
    }

    proptest! {
        #[test]
        fn masses_sum_to_one_and_refinement_preserves_them(
            values in prop::collection::vec(-5.0f64..5.0, 2..200),
            count in 1usize..40,
        ) {
            let traj = path(&values, 0.01);
            let obs = Observable::Mode { k: 1 };
            let coarse = occupation_measure(&traj, &obs, Bins::Uniform { low: -3.0, high: 3.0, count }).unwrap();
            let fine = occupation_measure(&traj, &obs, Bins::Uniform { low: -3.0, high: 3.0, count: 2 * count }).unwrap();
            let mc = coarse.masses();
            let mf = fine.masses();
            prop_assert!(mc.iter().all(|m| *m >= 0.0));
            prop_assert!((mc.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!((mf.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            for i in 0..count {
                assert_abs_diff_eq!(mc[i], mf[2 * i] + mf[2 * i + 1], epsilon = 1e-9);
            }
        }

        #[test]
        fn merge_is_commutative(
            a in prop::collection::vec(-2.0f64..2.0, 2..50),
            b in prop::collection::vec(-2.0f64..2.0, 2..50),
        ) {
            let bins = Bins::Uniform { low: -2.0, high: 2.0, count: 8 };
            let obs = Observable::Mode { k: 1 };
            let ha = occupation_measure(&path(&a, 0.1), &obs, bins).unwrap();
            let hb = occupation_measure(&path(&b, 0.1), &obs, bins).unwrap();
            let mut ab = ha.clone();
            ab.merge(&hb).unwrap();
            let mut ba = hb.clone();
            ba.merge(&ha).unwrap();
            prop_assert_eq!(ab, ba);
        }
    }
}
