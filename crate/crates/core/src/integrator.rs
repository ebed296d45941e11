//! Exponential-Euler time stepping of the Galerkin truncation in mild form.
//!
//! Over a continuous sub-interval of length `h` each mode is advanced as
//!
//! ```text
//! a_k ← e^{-α_k h} a_k + (1 − e^{-α_k h})/α_k · N_k(x) + ∫ e^{-α_k (h−s)} β_k dW_k(s)
//! ```
//!
//! where `N(x) = B(x) − λ_J E_F[u] G(x)` is frozen at the left endpoint and
//! the stochastic convolution is sampled exactly. Jumps are applied at their
//! sampled instants by splitting the enclosing step.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ensemble::{par_map, ExecMode};
use crate::noise::{
    compensator_drift, jump_amplitude, sample_jump_times, sample_wiener_increment, GaussianSpec, JumpEvent,
    JumpSpec, NoiseError,
};
use crate::rng::{stream, SimRng};
use crate::spectral::{alpha, Nonlinearity, SpectralField};

/// States with `‖x‖_H` above this are treated as a numerical blow-up.
pub const BLOW_UP_NORM: f64 = 1e6;
pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_DT_SAVE: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error("blow-up at t = {time}: ‖x‖_H = {norm_h}")]
    BlowUp {
        time: f64,
        norm_h: f64,
        /// Last state that passed the guard.
        last_valid: Box<SpectralField>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_modes: usize,
    pub dt: f64,
    /// Horizon `T`.
    pub horizon: f64,
    pub dt_save: f64,
    pub gaussian: GaussianSpec,
    /// `None` is the pure Brownian model.
    pub jumps: Option<JumpSpec>,
    pub nonlinearity: bool,
    pub seed: u64,
}

impl SimConfig {
    /// Linear heat flow with no forcing, useful as a base for builders.
    pub fn quiet(n_modes: usize, horizon: f64) -> Self {
        Self {
            n_modes,
            dt: DEFAULT_DT,
            horizon,
            dt_save: DEFAULT_DT_SAVE,
            gaussian: GaussianSpec::zero(n_modes),
            jumps: None,
            nonlinearity: false,
            seed: 0,
        }
    }

    /// `β_k = 1/k`, default jumps, nonlinearity on.
    pub fn default_model(n_modes: usize, horizon: f64) -> Self {
        Self {
            gaussian: GaussianSpec::power_decay(n_modes, 1.0, 1.0).expect("finite amplitudes"),
            jumps: Some(JumpSpec::default_model(n_modes)),
            nonlinearity: true,
            ..Self::quiet(n_modes, horizon)
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let fail = |m: String| Err(SimError::Config(m));
        if self.n_modes == 0 {
            return fail("n_modes must be positive".into());
        }
        for (name, v) in [("dt", self.dt), ("horizon", self.horizon), ("dt_save", self.dt_save)] {
            if !(v.is_finite() && v > 0.0) {
                return fail(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if !(self.dt <= self.dt_save && self.dt_save <= self.horizon) {
            return fail(format!(
                "need dt ≤ dt_save ≤ horizon, got {} / {} / {}",
                self.dt, self.dt_save, self.horizon
            ));
        }
        if multiple_of(self.dt_save, self.dt).is_none() {
            return fail(format!("dt_save {} is not a multiple of dt {}", self.dt_save, self.dt));
        }
        if multiple_of(self.horizon, self.dt).is_none() {
            return fail(format!("horizon {} is not a multiple of dt {}", self.horizon, self.dt));
        }
        if self.gaussian.n_modes() != self.n_modes {
            return fail(format!(
                "Gaussian spec has {} modes, model has {}",
                self.gaussian.n_modes(),
                self.n_modes
            ));
        }
        if let Some(j) = &self.jumps {
            j.validate(Some(self.n_modes))?;
            if j.mark.mean().is_none() {
                return Err(NoiseError::HypothesisViolation(format!("mark law {:?} has no finite mean", j.mark)).into());
            }
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        multiple_of(self.horizon, self.dt).unwrap_or(0)
    }

    pub fn save_every(&self) -> usize {
        multiple_of(self.dt_save, self.dt).unwrap_or(1)
    }
}

fn multiple_of(total: f64, unit: f64) -> Option<usize> {
    let n = (total / unit).round();
    ((n * unit - total).abs() <= 1e-9 * total && n >= 1.0).then_some(n as usize)
}

/// A jump as recorded along a path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpRecord {
    pub time: f64,
    pub mark: f64,
    /// `‖x‖_H` just before the jump.
    pub pre_norm_h: f64,
}

/// Snapshots of one sample path.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<SpectralField>,
    pub jump_log: Vec<JumpRecord>,
    pub seed: u64,
    pub stream: u64,
    pub config: SimConfig,
}

impl Trajectory {
    /// A path given directly by its snapshots, with no jumps.
    pub fn from_snapshots(times: Vec<f64>, states: Vec<SpectralField>, config: SimConfig) -> Self {
        assert_eq!(times.len(), states.len());
        Self { times, states, jump_log: Vec::new(), seed: config.seed, stream: 0, config }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> Option<&SpectralField> {
        self.states.last()
    }
}

/// Receives the path as it is generated.
pub trait PathObserver {
    /// Continuous evolution from `(t0, x0)` to `(t1, x1)` with no jump inside;
    /// `x1` is the left limit at `t1`.
    fn advance(&mut self, _t0: f64, _x0: &SpectralField, _t1: f64, _x1: &SpectralField) {}

    fn jump(&mut self, _time: f64, _pre: &SpectralField, _post: &SpectralField, _mark: f64) {}

    /// State on the `dt_save` grid (including `t = 0`).
    fn snapshot(&mut self, _time: f64, _x: &SpectralField) {}

    /// Returning `false` stops the simulation after the current step.
    fn keep_going(&self) -> bool {
        true
    }
}

impl PathObserver for () {}

impl<A: PathObserver, B: PathObserver> PathObserver for (A, B) {
    fn advance(&mut self, t0: f64, x0: &SpectralField, t1: f64, x1: &SpectralField) {
        self.0.advance(t0, x0, t1, x1);
        self.1.advance(t0, x0, t1, x1);
    }

    fn jump(&mut self, time: f64, pre: &SpectralField, post: &SpectralField, mark: f64) {
        self.0.jump(time, pre, post, mark);
        self.1.jump(time, pre, post, mark);
    }

    fn snapshot(&mut self, time: f64, x: &SpectralField) {
        self.0.snapshot(time, x);
        self.1.snapshot(time, x);
    }

    fn keep_going(&self) -> bool {
        self.0.keep_going() || self.1.keep_going()
    }
}

/// Collects snapshots and the jump log into a [`Trajectory`].
#[derive(Debug, Default)]
pub struct Recorder {
    times: Vec<f64>,
    states: Vec<SpectralField>,
    jumps: Vec<JumpRecord>,
}

impl PathObserver for Recorder {
    fn jump(&mut self, time: f64, pre: &SpectralField, _post: &SpectralField, mark: f64) {
        self.jumps.push(JumpRecord { time, mark, pre_norm_h: pre.norm_h() });
    }

    fn snapshot(&mut self, time: f64, x: &SpectralField) {
        self.times.push(time);
        self.states.push(x.clone());
    }
}

impl Recorder {
    pub fn into_trajectory(self, config: &SimConfig, stream: u64) -> Trajectory {
        Trajectory {
            times: self.times,
            states: self.states,
            jump_log: self.jumps,
            seed: config.seed,
            stream,
            config: config.clone(),
        }
    }
}

/// Per-mode factors of the exact linear propagation over a sub-step `h`.
#[derive(Debug, Clone)]
struct Propagator {
    decay: Vec<f64>,
    drift: Vec<f64>,
    /// Converts a Wiener increment with variance `β²h` into the stochastic
    /// convolution with variance `β²(1 − e^{-2αh})/(2α)`.
    noise: Vec<f64>,
}

impl Propagator {
    fn new(n_modes: usize, h: f64) -> Self {
        let mut decay = Vec::with_capacity(n_modes);
        let mut drift = Vec::with_capacity(n_modes);
        let mut noise = Vec::with_capacity(n_modes);
        for k in 1..=n_modes {
            let a = alpha(k);
            decay.push((-a * h).exp());
            drift.push(-(-a * h).exp_m1() / a);
            noise.push((-(-2.0 * a * h).exp_m1() / (2.0 * a * h)).sqrt());
        }
        Self { decay, drift, noise }
    }
}

/// Time stepper for one [`SimConfig`].
#[derive(Debug, Clone)]
pub struct Simulator {
    cfg: SimConfig,
    nonlinearity: Option<Nonlinearity>,
    full: Propagator,
}

impl Simulator {
    pub fn new(cfg: SimConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let nonlinearity = cfg.nonlinearity.then(|| Nonlinearity::for_modes(cfg.n_modes));
        let full = Propagator::new(cfg.n_modes, cfg.dt);
        Ok(Self { cfg, nonlinearity, full })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    /// Frozen drift `B(x) − λ_J E[u] G(x)`.
    fn drift(&self, x: &SpectralField) -> Option<SpectralField> {
        let mut total: Option<SpectralField> = self.nonlinearity.as_ref().map(|b| b.apply(x));
        if let Some(j) = &self.cfg.jumps {
            let c = compensator_drift(j, x).expect("finite mean checked at construction");
            match total.as_mut() {
                Some(t) => t.add_scaled(1.0, &c),
                None => total = Some(c),
            }
        }
        total
    }

    fn advance_with<R: Rng + ?Sized>(
        &self,
        x: &SpectralField,
        h: f64,
        prop: &Propagator,
        rng: &mut R,
    ) -> SpectralField {
        let drift = self.drift(x);
        let mut next = x.clone();
        let coeffs = next.coeffs_mut();
        for (k, a) in coeffs.iter_mut().enumerate() {
            *a *= prop.decay[k];
        }
        if let Some(d) = drift {
            for (k, a) in coeffs.iter_mut().enumerate() {
                *a += prop.drift[k] * d.coeffs()[k];
            }
        }
        if !self.cfg.gaussian.is_zero() {
            let dw = sample_wiener_increment(&self.cfg.gaussian, h, rng).expect("positive sub-step");
            for (k, a) in coeffs.iter_mut().enumerate() {
                *a += prop.noise[k] * dw.coeffs()[k];
            }
        }
        next
    }

    /// Continuous evolution over `h` with no jumps.
    pub fn advance<R: Rng + ?Sized>(&self, x: &SpectralField, h: f64, rng: &mut R) -> SpectralField {
        if h == self.cfg.dt {
            self.advance_with(x, h, &self.full, rng)
        } else {
            self.advance_with(x, h, &Propagator::new(self.cfg.n_modes, h), rng)
        }
    }

    /// One step from `t` to `t + h`, applying every event of `jumps` (which
    /// must lie in `(t, t + h]`) at its own instant.
    pub fn step<R: Rng + ?Sized>(
        &self,
        x: &SpectralField,
        t: f64,
        h: f64,
        jumps: &[JumpEvent],
        rng: &mut R,
        observer: &mut dyn PathObserver,
    ) -> Result<SpectralField, SimError> {
        let mut state = x.clone();
        let mut now = t;
        for ev in jumps {
            debug_assert!(ev.time > t && ev.time <= t + h);
            let sub = ev.time - now;
            if sub > 0.0 {
                let next = self.advance(&state, sub, rng);
                guard(&state, &next, ev.time)?;
                observer.advance(now, &state, ev.time, &next);
                state = next;
                now = ev.time;
            }
            let spec = self.cfg.jumps.as_ref().expect("events imply a jump spec");
            let mut post = state.clone();
            post.add_scaled(1.0, &jump_amplitude(spec, &state, ev.mark));
            guard(&state, &post, ev.time)?;
            observer.jump(ev.time, &state, &post, ev.mark);
            state = post;
        }
        let end = t + h;
        let sub = end - now;
        if sub > 0.0 {
            let next = self.advance(&state, sub, rng);
            guard(&state, &next, end)?;
            observer.advance(now, &state, end, &next);
            state = next;
        }
        Ok(state)
    }

    /// Runs the path of stream `index` from `x0`, feeding `observer`.
    pub fn run(
        &self,
        x0: &SpectralField,
        index: u64,
        observer: &mut dyn PathObserver,
    ) -> Result<SpectralField, SimError> {
        if x0.n_modes() != self.cfg.n_modes {
            return Err(SimError::Config(format!(
                "initial state has {} modes, model has {}",
                x0.n_modes(),
                self.cfg.n_modes
            )));
        }
        let mut rng: SimRng = stream(self.cfg.seed, index);
        let events = match &self.cfg.jumps {
            Some(spec) => sample_jump_times(spec, self.cfg.horizon, &mut rng),
            None => Vec::new(),
        };
        let n_steps = self.cfg.n_steps();
        let save_every = self.cfg.save_every();
        let dt = self.cfg.dt;

        let mut x = x0.clone();
        observer.snapshot(0.0, &x);
        let mut next_event = 0;
        for i in 0..n_steps {
            let t = i as f64 * dt;
            let end = if i + 1 == n_steps { self.cfg.horizon } else { (i + 1) as f64 * dt };
            let first = next_event;
            while next_event < events.len() && events[next_event].time <= end {
                next_event += 1;
            }
            x = self.step(&x, t, end - t, &events[first..next_event], &mut rng, observer)?;
            if (i + 1) % save_every == 0 || i + 1 == n_steps {
                observer.snapshot(end, &x);
            }
            if !observer.keep_going() {
                break;
            }
        }
        Ok(x)
    }

    /// Path of stream `index`, recorded on the snapshot grid.
    pub fn trajectory(&self, x0: &SpectralField, index: u64) -> Result<Trajectory, SimError> {
        let mut rec = Recorder::default();
        self.run(x0, index, &mut rec)?;
        Ok(rec.into_trajectory(&self.cfg, index))
    }

    /// `n_traj` independent paths from `x0`, each reduced by its own observer.
    /// Output order follows the trajectory index.
    pub fn ensemble<O, F>(
        &self,
        x0: &SpectralField,
        n_traj: usize,
        mode: ExecMode,
        make: F,
    ) -> Vec<Result<O, SimError>>
    where
        O: PathObserver + Send,
        F: Fn(usize) -> O + Sync,
    {
        par_map(n_traj, mode, |i| {
            let mut obs = make(i);
            self.run(x0, i as u64, &mut obs).map(|_| obs)
        })
    }
}

fn guard(prev: &SpectralField, next: &SpectralField, time: f64) -> Result<(), SimError> {
    let norm_h = next.norm_h();
    if next.is_finite() && norm_h <= BLOW_UP_NORM {
        Ok(())
    } else {
        Err(SimError::BlowUp { time, norm_h, last_valid: Box::new(prev.clone()) })
    }
}

/// Single path from `x0` on stream 0 of `cfg.seed`.
pub fn simulate(cfg: &SimConfig, x0: &SpectralField) -> Result<Trajectory, SimError> {
    Simulator::new(cfg.clone())?.trajectory(x0, 0)
}
