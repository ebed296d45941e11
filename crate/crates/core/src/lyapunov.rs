//! The Lyapunov function `ψ(x) = (1 + ‖x‖²_H)^{1/2}`, its generator bound and
//! drift condition, and the exponential functionals built on
//! `ψ_λ(x) = (1 + λ²‖x‖²_H)^{1/2}`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ensemble::ExecMode;
use crate::integrator::{PathObserver, SimConfig, SimError, Simulator, Trajectory};
use crate::noise::{hypothesis_constants, GaussianSpec, HypothesisReport, JumpSpec, NoiseError};
use crate::spectral::{burgers_nonlinearity, SpectralField};
use crate::stats::{log_mean_exp, EstimateReport, Flag, RunningStats};

/// Absolute slack for the deterministic inequalities.
pub const INEQUALITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LyapunovError {
    #[error("parameter out of range: {0}")]
    Domain(String),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("generator inequality violated at ‖x‖_H = {norm_h}: {terms:?}")]
    InequalityViolation { norm_h: f64, terms: Box<GeneratorTerms> },
    #[error("every trajectory blew up")]
    AllBlownUp,
}

pub fn psi(x: &SpectralField) -> f64 {
    (1.0 + x.norm_h_sq()).sqrt()
}

/// `∇ψ(x) = x / ψ(x)`.
pub fn grad_psi(x: &SpectralField) -> SpectralField {
    x.scaled(1.0 / psi(x))
}

/// `Hess ψ(x) v = −⟨x, v⟩ x / ψ³ + v / ψ`.
pub fn hess_psi_apply(x: &SpectralField, v: &SpectralField) -> SpectralField {
    hess_psi_lambda_apply(x, 1.0, v)
}

pub fn psi_lambda(x: &SpectralField, lambda: f64) -> f64 {
    (1.0 + lambda * lambda * x.norm_h_sq()).sqrt()
}

/// `ψ_λ` restricted to the admissible range `0 < λ ≤ a0_max`.
pub fn psi_lambda_checked(x: &SpectralField, lambda: f64, a0_max: f64) -> Result<f64, LyapunovError> {
    check_lambda(lambda, a0_max)?;
    Ok(psi_lambda(x, lambda))
}

fn check_lambda(lambda: f64, a0_max: f64) -> Result<(), LyapunovError> {
    if lambda > 0.0 && lambda <= a0_max {
        Ok(())
    } else {
        Err(LyapunovError::Domain(format!("λ = {lambda} outside (0, {a0_max}]")))
    }
}

/// `∇ψ_λ(x) = λ² x / ψ_λ(x)`.
pub fn grad_psi_lambda(x: &SpectralField, lambda: f64) -> SpectralField {
    x.scaled(lambda * lambda / psi_lambda(x, lambda))
}

/// `Hess ψ_λ(x) v = λ² v / ψ_λ − λ⁴ ⟨x, v⟩ x / ψ_λ³`.
pub fn hess_psi_lambda_apply(x: &SpectralField, lambda: f64, v: &SpectralField) -> SpectralField {
    let l2 = lambda * lambda;
    let p = psi_lambda(x, lambda);
    let mut out = v.scaled(l2 / p);
    out.add_scaled(-l2 * l2 * x.dot(v) / (p * p * p), x);
    out
}

/// `h_upper = −λ²‖x‖²_V/ψ_λ + λ²‖Q‖²_HS + (λ²/2) M_λ`.
pub fn h_upper(x: &SpectralField, lambda: f64, m_lambda: f64, hs_norm_sq: f64) -> f64 {
    let l2 = lambda * lambda;
    -l2 * x.norm_v_sq() / psi_lambda(x, lambda) + l2 * hs_norm_sq + 0.5 * l2 * m_lambda
}

/// Pointwise `λ²‖x‖²_V / ψ_λ(x) ≥ (1 + λ²‖x‖²_V)^{1/2} − 1`, returning both sides.
pub fn v_norm_comparison(x: &SpectralField, lambda: f64) -> (f64, f64) {
    let l2 = lambda * lambda;
    let v2 = x.norm_v_sq();
    (l2 * v2 / psi_lambda(x, lambda), (1.0 + l2 * v2).sqrt() - 1.0)
}

/// Second-order remainder of `e^{ψ_λ}` along a jump `f` and its bound
/// `(λ²/2) e^{λ‖f‖} ‖f‖²`.
pub fn jump_taylor_remainder(x: &SpectralField, f: &SpectralField, lambda: f64) -> (f64, f64) {
    let mut shifted = x.clone();
    shifted.add_scaled(1.0, f);
    let inc = psi_lambda_increment(x, f, lambda);
    let lhs = (inc.exp_m1() - grad_psi_lambda(x, lambda).dot(f)).abs();
    let nf = f.norm_h();
    (lhs, 0.5 * lambda * lambda * (lambda * nf).exp() * nf * nf)
}

/// `ψ_λ(x + f) − ψ_λ(x)` without cancellation for small `f`.
fn psi_lambda_increment(x: &SpectralField, f: &SpectralField, lambda: f64) -> f64 {
    let l2 = lambda * lambda;
    let base = psi_lambda(x, lambda);
    let num = l2 * (2.0 * x.dot(f) + f.norm_h_sq());
    let mut shifted = x.clone();
    shifted.add_scaled(1.0, f);
    num / (psi_lambda(&shifted, lambda) + base)
}

/// `‖Q‖²_HS`, `M`, `c₁ = 1 + ½(‖Q‖²_HS + M)` and the radius `2c₁` of
/// `K = {‖x‖_V ≤ 2c₁}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftConstants {
    pub hs_norm_sq: f64,
    pub m: f64,
    pub c1: f64,
    pub k_radius: f64,
}

impl DriftConstants {
    pub fn new(hs_norm_sq: f64, m: f64) -> Self {
        Self::with_c1(hs_norm_sq, m, 1.0 + 0.5 * (hs_norm_sq + m))
    }

    /// Constants with an explicit `c₁`; only useful as a negative control.
    pub fn with_c1(hs_norm_sq: f64, m: f64, c1: f64) -> Self {
        Self { hs_norm_sq, m, c1, k_radius: 2.0 * c1 }
    }

    pub fn in_k(&self, x: &SpectralField) -> bool {
        x.norm_v() <= self.k_radius
    }
}

/// Terms of the generator `𝔏ψ(x)` on the truncation and of its upper-bound
/// chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorTerms {
    /// `⟨Δx, ∇ψ⟩ = −‖x‖²_V/ψ`.
    pub laplacian: f64,
    /// `⟨B(x), ∇ψ⟩`, zero up to rounding.
    pub nonlinear: f64,
    /// `½ tr(Q* Hess ψ Q)` computed mode by mode.
    pub trace: f64,
    /// `½ ‖Q‖²_HS`.
    pub trace_bound: f64,
    /// `∫ (ψ(x+f) − ψ(x) − ⟨∇ψ, f⟩) n(du)` by quadrature.
    pub jump: f64,
    /// `½ ∫ ‖f(x,u)‖² n(du)`.
    pub jump_bound: f64,
    /// Sum of the exact terms.
    pub exact: f64,
    /// `−‖x‖²_V/ψ + ½‖Q‖²_HS + ½∫‖f‖² n(du)`.
    pub bound_first: f64,
    /// `−(1+‖x‖²_V)/ψ + 1/ψ + ½‖Q‖²_HS + M/2`.
    pub bound_second: f64,
    /// `−(1+‖x‖²_V)^{1/2} + c₁`.
    pub bound: f64,
}

impl GeneratorTerms {
    pub fn chain_holds(&self, tol: f64) -> bool {
        self.exact <= self.bound_first + tol
            && self.bound_first <= self.bound_second + tol
            && self.bound_second <= self.bound + tol
    }
}

/// Result of the pointwise drift check `−𝔏ψ/ψ ≥ ½·1_{Kᶜ} − c₁·1_K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub psi: f64,
    pub norm_h: f64,
    pub v_norm: f64,
    pub in_k: bool,
    /// `((1+‖x‖²_V)^{1/2} − c₁)/ψ(x)`.
    pub lhs: f64,
    /// `𝔏ψ(x)` on the truncation.
    pub generator: f64,
    /// `−(1+‖x‖²_V)^{1/2} + c₁`.
    pub bound: f64,
    /// The generator sits below every link of the bound chain.
    pub generator_ok: bool,
    /// `lhs ≥ ½` outside `K`, `lhs ≥ −c₁` inside.
    pub classification_ok: bool,
    pub satisfied: bool,
}

/// Noise model plus derived constants; evaluates the generator of `ψ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovModel {
    pub gaussian: GaussianSpec,
    pub jumps: Option<JumpSpec>,
    pub constants: DriftConstants,
    pub nonlinearity: bool,
}

impl LyapunovModel {
    pub fn new(gaussian: GaussianSpec, jumps: Option<JumpSpec>) -> Result<Self, LyapunovError> {
        let m = match &jumps {
            Some(j) => hypothesis_constants(j, 0.0)?.m,
            None => 0.0,
        };
        let constants = DriftConstants::new(gaussian.hs_norm_sq(), m);
        Ok(Self { gaussian, jumps, constants, nonlinearity: true })
    }

    pub fn from_config(cfg: &SimConfig) -> Result<Self, LyapunovError> {
        let mut model = Self::new(cfg.gaussian.clone(), cfg.jumps.clone())?;
        model.nonlinearity = cfg.nonlinearity;
        Ok(model)
    }

    pub fn with_constants(mut self, constants: DriftConstants) -> Self {
        self.constants = constants;
        self
    }

    /// `M_λ`, `a0_max` for the jump part (zero / infinite without jumps).
    pub fn hypothesis(&self, lambda: f64) -> Result<HypothesisReport, LyapunovError> {
        match &self.jumps {
            Some(j) => Ok(hypothesis_constants(j, lambda)?),
            None => Ok(HypothesisReport::without_jumps(lambda)),
        }
    }

    pub fn generator_terms(&self, x: &SpectralField) -> GeneratorTerms {
        let p = psi(x);
        let v2 = x.norm_v_sq();
        let laplacian = -v2 / p;
        let nonlinear = if self.nonlinearity { burgers_nonlinearity(x).dot(x) / p } else { 0.0 };
        let p3 = p * p * p;
        let trace = 0.5
            * self
                .gaussian
                .betas()
                .iter()
                .zip(x.coeffs())
                .map(|(b, a)| b * b * (1.0 / p - a * a / p3))
                .sum::<f64>();
        let trace_bound = 0.5 * self.constants.hs_norm_sq;
        let (jump, jump_bound) = match &self.jumps {
            None => (0.0, 0.0),
            Some(spec) => {
                let g = spec.direction.apply(x);
                let xg = x.dot(&g);
                let gg = g.norm_h_sq();
                let xx = x.norm_h_sq();
                let remainder = |u: f64| {
                    let num = 2.0 * u * xg + u * u * gg;
                    let shifted = (1.0 + xx + num).sqrt();
                    num / (shifted + p) - u * xg / p
                };
                let exact = spec.intensity * spec.mark.expectation(remainder);
                let m2 = spec.mark.second_moment().unwrap_or(f64::INFINITY);
                (exact, 0.5 * spec.intensity * m2 * gg)
            }
        };
        let c = &self.constants;
        GeneratorTerms {
            laplacian,
            nonlinear,
            trace,
            trace_bound,
            jump,
            jump_bound,
            exact: laplacian + nonlinear + trace + jump,
            bound_first: laplacian + trace_bound + jump_bound,
            bound_second: -(1.0 + v2) / p + 1.0 / p + trace_bound + 0.5 * c.m,
            bound: -(1.0 + v2).sqrt() + c.c1,
        }
    }

    /// The generator terms, failing if the exact value exceeds any link of the
    /// bound chain by more than [`INEQUALITY_TOL`].
    pub fn generator_upper_bound(&self, x: &SpectralField) -> Result<GeneratorTerms, LyapunovError> {
        let terms = self.generator_terms(x);
        if terms.chain_holds(INEQUALITY_TOL) {
            Ok(terms)
        } else {
            Err(LyapunovError::InequalityViolation { norm_h: x.norm_h(), terms: Box::new(terms) })
        }
    }

    pub fn drift_condition_check(&self, x: &SpectralField) -> DriftReport {
        let c = &self.constants;
        let terms = self.generator_terms(x);
        let p = psi(x);
        let v = x.norm_v();
        let in_k = v <= c.k_radius;
        let lhs = ((1.0 + v * v).sqrt() - c.c1) / p;
        let classification_ok = if in_k {
            lhs >= -c.c1 - INEQUALITY_TOL
        } else {
            lhs >= 0.5 - INEQUALITY_TOL
        };
        let generator_ok = terms.chain_holds(INEQUALITY_TOL) && -terms.exact / p >= lhs - INEQUALITY_TOL;
        DriftReport {
            psi: p,
            norm_h: x.norm_h(),
            v_norm: v,
            in_k,
            lhs,
            generator: terms.exact,
            bound: terms.bound,
            generator_ok,
            classification_ok,
            satisfied: generator_ok && classification_ok,
        }
    }

    /// `h(x)` of the exponential martingale for `ψ_λ`, evaluated exactly on
    /// the truncation (jump integral by quadrature).
    pub fn h_exact(&self, x: &SpectralField, lambda: f64) -> f64 {
        let l2 = lambda * lambda;
        let p = psi_lambda(x, lambda);
        let grad_scale = l2 / p;
        let laplacian = -grad_scale * x.norm_v_sq();
        let nonlinear = if self.nonlinearity { grad_scale * burgers_nonlinearity(x).dot(x) } else { 0.0 };
        let p3 = p * p * p;
        let (quad, trace) = self
            .gaussian
            .betas()
            .iter()
            .zip(x.coeffs())
            .fold((0.0, 0.0), |(q, t), (b, a)| {
                let g = grad_scale * a;
                (q + b * b * g * g, t + b * b * (l2 / p - l2 * l2 * a * a / p3))
            });
        let jump = match &self.jumps {
            None => 0.0,
            Some(spec) => {
                let g = spec.direction.apply(x);
                let xg = x.dot(&g);
                let gg = g.norm_h_sq();
                let xx = x.norm_h_sq();
                let integrand = |u: f64| {
                    let num = l2 * (2.0 * u * xg + u * u * gg);
                    let inc = num / ((1.0 + l2 * xx + num).sqrt() + p);
                    inc.exp_m1() - grad_scale * u * xg
                };
                spec.intensity * spec.mark.expectation(integrand)
            }
        };
        laplacian + nonlinear + 0.5 * quad + 0.5 * trace + jump
    }
}

/// Streams `log M^{ψ_λ}_t = ψ_λ(X_t) − ψ_λ(X_0) − ∫₀ᵗ h_upper(X_s) ds` along a
/// path, with trapezoidal quadrature on every sub-step.
#[derive(Debug, Clone)]
pub struct ExpMartingale {
    lambda: f64,
    m_lambda: f64,
    hs_norm_sq: f64,
    start: Option<f64>,
    integral: f64,
    /// `log M` at each snapshot.
    pub log_values: Vec<f64>,
}

impl ExpMartingale {
    pub fn new(lambda: f64, m_lambda: f64, hs_norm_sq: f64) -> Self {
        Self { lambda, m_lambda, hs_norm_sq, start: None, integral: 0.0, log_values: Vec::new() }
    }

    fn h(&self, x: &SpectralField) -> f64 {
        h_upper(x, self.lambda, self.m_lambda, self.hs_norm_sq)
    }
}

impl PathObserver for ExpMartingale {
    fn advance(&mut self, t0: f64, x0: &SpectralField, t1: f64, x1: &SpectralField) {
        self.integral += 0.5 * (self.h(x0) + self.h(x1)) * (t1 - t0);
    }

    fn snapshot(&mut self, _time: f64, x: &SpectralField) {
        let p = psi_lambda(x, self.lambda);
        let start = *self.start.get_or_insert(p);
        self.log_values.push(p - start - self.integral);
    }
}

/// `M^{ψ_λ}_t` at every snapshot of a recorded trajectory, with the time
/// integral taken by the trapezoid rule on the snapshot grid.
pub fn exp_martingale_path(
    traj: &Trajectory,
    lambda: f64,
    hypothesis: &HypothesisReport,
    hs_norm_sq: f64,
) -> Result<Vec<f64>, LyapunovError> {
    check_lambda(lambda, hypothesis.a0_max)?;
    let first = traj
        .states
        .first()
        .ok_or_else(|| LyapunovError::Domain("empty trajectory".into()))?;
    let h = |x: &SpectralField| h_upper(x, lambda, hypothesis.m_lambda, hs_norm_sq);
    let p0 = psi_lambda(first, lambda);
    let mut integral = 0.0;
    let mut out = Vec::with_capacity(traj.len());
    out.push(1.0);
    for i in 1..traj.len() {
        let (x0, x1) = (&traj.states[i - 1], &traj.states[i]);
        integral += 0.5 * (h(x0) + h(x1)) * (traj.times[i] - traj.times[i - 1]);
        out.push((psi_lambda(x1, lambda) - p0 - integral).exp());
    }
    Ok(out)
}

/// Ensemble means of `M^{ψ_λ}_t` at each snapshot time.
#[derive(Debug, Clone, PartialEq)]
pub struct SupermartingaleCheck {
    pub lambda: f64,
    pub times: Vec<f64>,
    pub stats: Vec<RunningStats>,
    pub blow_ups: usize,
}

impl SupermartingaleCheck {
    /// Largest `(mean − 1)/se` over the snapshot grid (skipping `t = 0`).
    pub fn worst_z(&self) -> f64 {
        self.stats
            .iter()
            .skip(1)
            .map(|s| {
                let se = s.std_err();
                if se > 0.0 {
                    (s.mean() - 1.0) / se
                } else if s.mean() > 1.0 + 1e-12 {
                    f64::INFINITY
                } else {
                    f64::NEG_INFINITY
                }
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `mean ≤ 1 + k·se` at every saved time.
    pub fn holds(&self, k: f64) -> bool {
        self.stats.iter().all(|s| s.mean() <= 1.0 + k * s.std_err() + 1e-12)
    }

    pub fn final_estimate(&self) -> EstimateReport {
        let s = self.stats.last().copied().unwrap_or_default();
        let r = EstimateReport::from_stats(format!("supermartingale_mean_lambda_{}", self.lambda), &s);
        if self.blow_ups > 0 {
            r.with_flag(Flag::BlowUpsExcluded)
        } else {
            r
        }
    }
}

/// Runs `n_traj` paths from `x0` and averages `M^{ψ_λ}` for each `λ`.
pub fn supermartingale_check(
    sim: &Simulator,
    model: &LyapunovModel,
    x0: &SpectralField,
    lambdas: &[f64],
    n_traj: usize,
    mode: ExecMode,
) -> Result<Vec<SupermartingaleCheck>, LyapunovError> {
    let hs = model.gaussian.hs_norm_sq();
    let mut hyps = Vec::with_capacity(lambdas.len());
    for &l in lambdas {
        let h = model.hypothesis(l)?;
        check_lambda(l, h.a0_max)?;
        hyps.push(h);
    }
    let results = sim.ensemble(x0, n_traj, mode, |_| {
        SnapshotTimes::default().with(
            hyps.iter()
                .map(|h| ExpMartingale::new(h.lambda, h.m_lambda, hs))
                .collect::<Vec<_>>(),
        )
    });
    let mut checks: Vec<SupermartingaleCheck> = lambdas
        .iter()
        .map(|&lambda| SupermartingaleCheck { lambda, times: Vec::new(), stats: Vec::new(), blow_ups: 0 })
        .collect();
    for r in results {
        match r {
            Ok((times, observers)) => {
                for (check, obs) in checks.iter_mut().zip(observers) {
                    if check.times.is_empty() {
                        check.times = times.times.clone();
                        check.stats = vec![RunningStats::new(); times.times.len()];
                    }
                    for (s, lv) in check.stats.iter_mut().zip(&obs.log_values) {
                        s.push(lv.exp());
                    }
                }
            }
            Err(SimError::BlowUp { .. }) => checks.iter_mut().for_each(|c| c.blow_ups += 1),
            Err(e) => return Err(e.into()),
        }
    }
    if checks.iter().any(|c| c.times.is_empty()) {
        return Err(LyapunovError::AllBlownUp);
    }
    Ok(checks)
}

/// Records snapshot times; pairs with other observers.
#[derive(Debug, Clone, Default)]
pub struct SnapshotTimes {
    pub times: Vec<f64>,
}

impl SnapshotTimes {
    pub fn with<O: PathObserver>(self, other: O) -> (Self, O) {
        (self, other)
    }
}

impl PathObserver for SnapshotTimes {
    fn snapshot(&mut self, time: f64, _x: &SpectralField) {
        self.times.push(time);
    }
}

impl<O: PathObserver> PathObserver for Vec<O> {
    fn advance(&mut self, t0: f64, x0: &SpectralField, t1: f64, x1: &SpectralField) {
        self.iter_mut().for_each(|o| o.advance(t0, x0, t1, x1));
    }

    fn jump(&mut self, time: f64, pre: &SpectralField, post: &SpectralField, mark: f64) {
        self.iter_mut().for_each(|o| o.jump(time, pre, post, mark));
    }

    fn snapshot(&mut self, time: f64, x: &SpectralField) {
        self.iter_mut().for_each(|o| o.snapshot(time, x));
    }

    fn keep_going(&self) -> bool {
        self.is_empty() || self.iter().any(|o| o.keep_going())
    }
}

/// Accumulates `∫‖X_t‖_V dt` and `Z_λ = ∫ λ²‖X_t‖²_V / ψ_λ(X_t) dt`.
#[derive(Debug, Clone, Default)]
pub struct VNormIntegral {
    lambda: f64,
    pub v_integral: f64,
    pub z_lambda: f64,
}

impl VNormIntegral {
    pub fn new(lambda: f64) -> Self {
        Self { lambda, ..Self::default() }
    }

    fn z_density(&self, x: &SpectralField) -> f64 {
        let l2 = self.lambda * self.lambda;
        l2 * x.norm_v_sq() / psi_lambda(x, self.lambda)
    }
}

impl PathObserver for VNormIntegral {
    fn advance(&mut self, t0: f64, x0: &SpectralField, t1: f64, x1: &SpectralField) {
        let dt = t1 - t0;
        self.v_integral += 0.5 * (x0.norm_v() + x1.norm_v()) * dt;
        self.z_lambda += 0.5 * (self.z_density(x0) + self.z_density(x1)) * dt;
    }
}

/// Monte Carlo estimate of `E_x exp(θλ∫₀ᵀ‖X_t‖_V dt)` with the closed-form
/// comparison bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpMomentReport {
    pub theta: f64,
    pub lambda: f64,
    pub horizon: f64,
    /// `E exp(θλ∫‖X‖_V)`.
    pub estimate: EstimateReport,
    /// `log` of the point estimate; finite even when the estimate overflows.
    pub log_estimate: f64,
    /// `E exp(θ Z_λ)`, the quantity the closed-form bound controls directly.
    pub z_estimate: EstimateReport,
    /// `θ + θ/(1−θ) · exp(ψ_λ(x) + Tλ²(M_λ/2 + ‖Q‖²_HS))`.
    pub bound: f64,
    /// `ψ_λ(x) + Tλ²(M_λ/2 + ‖Q‖²_HS)`, the exponent of the tail bound.
    pub tail_exponent: f64,
    pub blow_ups: usize,
}

impl ExpMomentReport {
    /// `P(Z_λ > r) ≤ exp(−r + ψ_λ(x) + Tλ²(M_λ/2 + ‖Q‖²_HS))`, capped at 1.
    pub fn tail_bound(&self, r: f64) -> f64 {
        (-r + self.tail_exponent).exp().min(1.0)
    }
}

fn exp_mean_report(name: &str, exponents: &[f64]) -> (EstimateReport, f64) {
    let n = exponents.len();
    let log_mean = log_mean_exp(exponents);
    let max = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scaled: RunningStats = exponents.iter().map(|v| (v - max).exp()).collect();
    let value = log_mean.exp();
    let se = max.exp() * scaled.std_err();
    let report = EstimateReport::new(name, value, se, n);
    if value.is_finite() && se.is_finite() {
        (report, log_mean)
    } else {
        (EstimateReport::new(name, f64::MAX, f64::NAN, n).with_flag(Flag::LowerBound), log_mean)
    }
}

pub fn exp_integral_moment(
    sim: &Simulator,
    model: &LyapunovModel,
    x0: &SpectralField,
    theta: f64,
    lambda: f64,
    n_traj: usize,
    mode: ExecMode,
) -> Result<ExpMomentReport, LyapunovError> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(LyapunovError::Domain(format!("θ = {theta} outside (0, 1)")));
    }
    if n_traj == 0 {
        return Err(LyapunovError::Domain("need at least one trajectory".into()));
    }
    let hyp = model.hypothesis(lambda)?;
    let horizon = sim.config().horizon;
    let hs = model.gaussian.hs_norm_sq();
    let tail_exponent = psi_lambda(x0, lambda) + horizon * lambda * lambda * (0.5 * hyp.m_lambda + hs);
    let bound = theta + theta / (1.0 - theta) * tail_exponent.exp();

    let results = sim.ensemble(x0, n_traj, mode, |_| VNormIntegral::new(lambda));
    let mut v_exps = Vec::with_capacity(n_traj);
    let mut z_exps = Vec::with_capacity(n_traj);
    let mut blow_ups = 0;
    for r in results {
        match r {
            Ok(obs) => {
                v_exps.push(theta * lambda * obs.v_integral);
                z_exps.push(theta * obs.z_lambda);
            }
            Err(SimError::BlowUp { .. }) => blow_ups += 1,
            Err(e) => return Err(e.into()),
        }
    }
    if v_exps.is_empty() {
        return Err(LyapunovError::AllBlownUp);
    }
    let (mut estimate, log_estimate) = exp_mean_report("exp_integral_moment", &v_exps);
    let (mut z_estimate, _) = exp_mean_report("exp_z_lambda_moment", &z_exps);
    if blow_ups > 0 {
        estimate = estimate.with_flag(Flag::BlowUpsExcluded);
        z_estimate = z_estimate.with_flag(Flag::BlowUpsExcluded);
    }
    Ok(ExpMomentReport {
        theta,
        lambda,
        horizon,
        estimate,
        log_estimate,
        z_estimate,
        bound,
        tail_exponent,
        blow_ups,
    })
}
