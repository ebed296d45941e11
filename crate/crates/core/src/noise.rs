//! Gaussian forcing `Q dW` and the compensated compound-Poisson jump term.
//!
//! The jump noise is fixed to `U = ℝ₊` with intensity measure
//! `n(du) = λ_J F(du)` and coefficient `f(x, u) = G(x) u`, where `F` is the
//! mark law and `G` a bounded, Lipschitz direction map.

use rand::Rng;
use rand_distr::{Distribution, Exp, Pareto, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::GaussLegendre;
use crate::spectral::SpectralField;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NoiseError {
    #[error("time step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("invalid noise parameter: {0}")]
    InvalidParameter(String),
    #[error("hypothesis violated: {0}")]
    HypothesisViolation(String),
    #[error("exponential moment diverges at λ = {lambda} (admissible tilt a0_max = {a0_max})")]
    DivergentMoment { lambda: f64, a0_max: f64 },
}

/// Per-mode amplitudes `β_k` of the diagonal operator `Q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    betas: Vec<f64>,
}

impl GaussianSpec {
    pub fn new(betas: Vec<f64>) -> Result<Self, NoiseError> {
        if betas.is_empty() {
            return Err(NoiseError::InvalidParameter("no Gaussian modes".into()));
        }
        if let Some(b) = betas.iter().find(|b| !(b.is_finite() && **b >= 0.0)) {
            return Err(NoiseError::InvalidParameter(format!("β_k must be finite and ≥ 0, got {b}")));
        }
        Ok(Self { betas })
    }

    pub fn zero(n_modes: usize) -> Self {
        Self { betas: vec![0.0; n_modes] }
    }

    /// `β_k = b0 · k^{-q}`.
    pub fn power_decay(n_modes: usize, b0: f64, q: f64) -> Result<Self, NoiseError> {
        Self::new((1..=n_modes).map(|k| b0 * (k as f64).powf(-q)).collect())
    }

    /// Only mode `k` (1-based) is forced, with amplitude `beta`.
    pub fn single_mode(n_modes: usize, k: usize, beta: f64) -> Result<Self, NoiseError> {
        let mut betas = vec![0.0; n_modes];
        *betas
            .get_mut(k.wrapping_sub(1))
            .ok_or_else(|| NoiseError::InvalidParameter(format!("mode {k} outside 1..={n_modes}")))? = beta;
        Self::new(betas)
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn n_modes(&self) -> usize {
        self.betas.len()
    }

    /// `‖Q‖²_HS = Σ β_k²`.
    pub fn hs_norm_sq(&self) -> f64 {
        self.betas.iter().map(|b| b * b).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.betas.iter().all(|&b| b == 0.0)
    }
}

/// `Q ΔW` over a step of length `dt`: independent `N(0, β_k² dt)` per mode.
pub fn sample_wiener_increment<R: Rng + ?Sized>(
    spec: &GaussianSpec,
    dt: f64,
    rng: &mut R,
) -> Result<SpectralField, NoiseError> {
    if !(dt > 0.0) {
        return Err(NoiseError::NonPositiveStep(dt));
    }
    let sd = dt.sqrt();
    Ok(SpectralField::from_raw(
        spec.betas
            .iter()
            .map(|b| {
                let z: f64 = StandardNormal.sample(rng);
                b * sd * z
            })
            .collect(),
    ))
}

/// Law `F` of the jump marks on `ℝ₊`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum MarkLaw {
    Exponential { rate: f64 },
    Uniform { low: f64, high: f64 },
    Constant { value: f64 },
    Pareto { scale: f64, shape: f64 },
}

impl Default for MarkLaw {
    fn default() -> Self {
        MarkLaw::Exponential { rate: 2.0 }
    }
}

impl MarkLaw {
    pub fn validate(&self) -> Result<(), NoiseError> {
        let ok = match *self {
            MarkLaw::Exponential { rate } => rate.is_finite() && rate > 0.0,
            MarkLaw::Uniform { low, high } => low.is_finite() && high.is_finite() && 0.0 <= low && low < high,
            MarkLaw::Constant { value } => value.is_finite() && value >= 0.0,
            MarkLaw::Pareto { scale, shape } => {
                scale.is_finite() && shape.is_finite() && scale > 0.0 && shape > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(NoiseError::InvalidParameter(format!("mark law {self:?}")))
        }
    }

    /// `E_F[u]`, `None` when infinite.
    pub fn mean(&self) -> Option<f64> {
        match *self {
            MarkLaw::Exponential { rate } => Some(1.0 / rate),
            MarkLaw::Uniform { low, high } => Some(0.5 * (low + high)),
            MarkLaw::Constant { value } => Some(value),
            MarkLaw::Pareto { scale, shape } => (shape > 1.0).then(|| shape * scale / (shape - 1.0)),
        }
    }

    /// `E_F[u²]`, `None` when infinite.
    pub fn second_moment(&self) -> Option<f64> {
        self.tilted_second_moment(0.0)
    }

    /// Supremum of the tilts `a` with `E_F[u² e^{au}] < ∞`.
    pub fn max_tilt(&self) -> f64 {
        match *self {
            MarkLaw::Exponential { rate } => rate,
            MarkLaw::Uniform { .. } | MarkLaw::Constant { .. } => f64::INFINITY,
            MarkLaw::Pareto { .. } => 0.0,
        }
    }

    /// `E_F[u² e^{au}]` for `a ≥ 0`, `None` when it diverges.
    pub fn tilted_second_moment(&self, a: f64) -> Option<f64> {
        match *self {
            MarkLaw::Exponential { rate } => (a < rate).then(|| 2.0 * rate / (rate - a).powi(3)),
            MarkLaw::Constant { value } => Some(value * value * (a * value).exp()),
            MarkLaw::Uniform { .. } => Some(self.expectation(|u| u * u * (a * u).exp())),
            MarkLaw::Pareto { scale, shape } => {
                (a == 0.0 && shape > 2.0).then(|| shape * scale * scale / (shape - 2.0))
            }
        }
    }

    /// `E_F[φ(u)]` by quadrature. Accurate for integrands growing at most
    /// polynomially (exponentially below the tilt limit for the exponential law).
    pub fn expectation(&self, phi: impl Fn(f64) -> f64) -> f64 {
        let rule = GaussLegendre::new(16);
        match *self {
            MarkLaw::Exponential { rate } => {
                rule.integrate_composite(|u| phi(u) * rate * (-rate * u).exp(), 0.0, 200.0 / rate, 100)
            }
            MarkLaw::Uniform { low, high } => {
                rule.integrate_composite(&phi, low, high, 8) / (high - low)
            }
            MarkLaw::Constant { value } => phi(value),
            MarkLaw::Pareto { scale, shape } => {
                // u = scale · s^{-1/shape} maps the law onto uniform s ∈ (0, 1];
                // geometric panels absorb the singularity at s = 0.
                let g = |s: f64| phi(scale * s.powf(-1.0 / shape));
                (0..64)
                    .map(|j| {
                        let hi = 0.5f64.powi(j);
                        rule.integrate(g, 0.5 * hi, hi)
                    })
                    .sum()
            }
        }
    }

    /// Quantile function `F^{-1}(p)` for `p ∈ [0, 1)`.
    pub fn quantile(&self, p: f64) -> f64 {
        match *self {
            MarkLaw::Exponential { rate } => -(1.0 - p).ln() / rate,
            MarkLaw::Uniform { low, high } => low + p * (high - low),
            MarkLaw::Constant { value } => value,
            MarkLaw::Pareto { scale, shape } => scale * (1.0 - p).powf(-1.0 / shape),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            MarkLaw::Exponential { rate } => Exp::new(rate).expect("validated rate").sample(rng),
            MarkLaw::Uniform { low, high } => {
                Uniform::new(low, high).expect("validated bounds").sample(rng)
            }
            MarkLaw::Constant { value } => value,
            MarkLaw::Pareto { scale, shape } => {
                Pareto::new(scale, shape).expect("validated parameters").sample(rng)
            }
        }
    }
}

/// The map `G` in `f(x, u) = G(x) u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "map", rename_all = "snake_case", deny_unknown_fields)]
pub enum DirectionMap {
    /// `G(x) = g₀`.
    Constant { field: SpectralField },
    /// `G(x) = amplitude · tanh(‖x‖_H) · x/‖x‖_H`, zero at the origin.
    Saturated { amplitude: f64 },
}

impl DirectionMap {
    /// Constant map `amplitude · e_1`.
    pub fn first_mode(n_modes: usize, amplitude: f64) -> Self {
        DirectionMap::Constant { field: SpectralField::basis(n_modes, 1).scaled(amplitude) }
    }

    pub fn apply(&self, x: &SpectralField) -> SpectralField {
        match self {
            DirectionMap::Constant { field } => field.clone(),
            DirectionMap::Saturated { amplitude } => {
                let r = x.norm_h();
                let radial = if r < 1e-8 { 1.0 - r * r / 3.0 } else { r.tanh() / r };
                x.scaled(amplitude * radial)
            }
        }
    }

    /// `sup_x ‖G(x)‖_H`.
    pub fn sup_norm(&self) -> f64 {
        match self {
            DirectionMap::Constant { field } => field.norm_h(),
            DirectionMap::Saturated { amplitude } => amplitude.abs(),
        }
    }

    /// Lipschitz constant of `G` in `H`.
    pub fn lipschitz(&self) -> f64 {
        match self {
            DirectionMap::Constant { .. } => 0.0,
            // radial derivative sech² r and tangential factor tanh(r)/r are both ≤ 1
            DirectionMap::Saturated { amplitude } => amplitude.abs(),
        }
    }

    fn validate(&self, n_modes: Option<usize>) -> Result<(), NoiseError> {
        match self {
            DirectionMap::Constant { field } => {
                if let Some(n) = n_modes.filter(|&n| n != field.n_modes()) {
                    return Err(NoiseError::InvalidParameter(format!(
                        "direction field has {} modes, model has {n}",
                        field.n_modes()
                    )));
                }
                Ok(())
            }
            DirectionMap::Saturated { amplitude } if amplitude.is_finite() => Ok(()),
            DirectionMap::Saturated { amplitude } => {
                Err(NoiseError::InvalidParameter(format!("saturation amplitude {amplitude}")))
            }
        }
    }
}

/// Compound-Poisson jump specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpSpec {
    pub intensity: f64,
    pub mark: MarkLaw,
    pub direction: DirectionMap,
}

/// A jump at `time` with mark `mark`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub time: f64,
    pub mark: f64,
}

impl JumpSpec {
    pub fn new(intensity: f64, mark: MarkLaw, direction: DirectionMap) -> Result<Self, NoiseError> {
        let spec = Self { intensity, mark, direction };
        spec.validate(None)?;
        Ok(spec)
    }

    /// Intensity 1, exponential(2) marks, `G ≡ e_1`.
    pub fn default_model(n_modes: usize) -> Self {
        Self {
            intensity: 1.0,
            mark: MarkLaw::default(),
            direction: DirectionMap::first_mode(n_modes, 1.0),
        }
    }

    pub fn validate(&self, n_modes: Option<usize>) -> Result<(), NoiseError> {
        if !(self.intensity.is_finite() && self.intensity > 0.0) {
            return Err(NoiseError::InvalidParameter(format!(
                "jump intensity must be positive and finite, got {}",
                self.intensity
            )));
        }
        self.mark.validate()?;
        self.direction.validate(n_modes)
    }

    /// `∫‖f(x,u) − f(y,u)‖² n(du) ≤ K ‖x − y‖²` holds with this `K`.
    pub fn lipschitz_constant(&self) -> Option<f64> {
        let l = self.direction.lipschitz();
        self.mark.second_moment().map(|m2| self.intensity * m2 * l * l)
    }

    /// `∫‖f(x,u) − f(y,u)‖²_H n(du)`.
    pub fn l2_distance_sq(&self, x: &SpectralField, y: &SpectralField) -> Option<f64> {
        let d = self.direction.apply(x).sub(&self.direction.apply(y)).norm_h_sq();
        self.mark.second_moment().map(|m2| self.intensity * m2 * d)
    }
}

/// Event times of the compound Poisson process on `[0, horizon]`, with marks.
pub fn sample_jump_times<R: Rng + ?Sized>(spec: &JumpSpec, horizon: f64, rng: &mut R) -> Vec<JumpEvent> {
    let waiting = Exp::new(spec.intensity).expect("validated intensity");
    let mut events = Vec::new();
    let mut t = 0.0;
    loop {
        t += waiting.sample(rng);
        if t > horizon {
            return events;
        }
        let mark = spec.mark.sample(rng);
        events.push(JumpEvent { time: t, mark });
    }
}

/// `f(x, u) = G(x) u`.
pub fn jump_amplitude(spec: &JumpSpec, x: &SpectralField, u: f64) -> SpectralField {
    debug_assert!(u >= 0.0, "marks live on ℝ₊");
    spec.direction.apply(x).scaled(u)
}

/// `−∫ f(x,u) n(du) = −λ_J E_F[u] G(x)`.
pub fn compensator_drift(spec: &JumpSpec, x: &SpectralField) -> Result<SpectralField, NoiseError> {
    let mean = spec.mark.mean().ok_or_else(|| {
        NoiseError::HypothesisViolation(format!("mark law {:?} has no finite mean", spec.mark))
    })?;
    Ok(spec.direction.apply(x).scaled(-spec.intensity * mean))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMethod {
    Analytic,
    /// Supremum over visited states only; a lower bound.
    Sampled,
}

/// Square and exponential integrability constants of the jump coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    /// `M = sup_x ∫‖f(x,u)‖² n(du)`.
    pub m: f64,
    /// The tilt `λ` at which `m_lambda` was evaluated.
    pub lambda: f64,
    /// `M_λ = sup_x ∫‖f(x,u)‖² e^{λ‖f(x,u)‖} n(du)`.
    pub m_lambda: f64,
    /// Largest admissible tilt `a₀`.
    pub a0_max: f64,
    pub method: EstimateMethod,
}

impl HypothesisReport {
    /// Constants of the pure Brownian model.
    pub fn without_jumps(lambda: f64) -> Self {
        Self { m: 0.0, lambda, m_lambda: 0.0, a0_max: f64::INFINITY, method: EstimateMethod::Analytic }
    }
}

/// `a0_max` for a spec: the mark law's tilt limit divided by `sup‖G‖`.
pub fn admissible_tilt(spec: &JumpSpec) -> f64 {
    let g = spec.direction.sup_norm();
    if g == 0.0 {
        f64::INFINITY
    } else {
        spec.mark.max_tilt() / g
    }
}

/// Analytic `M`, `M_λ`, `a0_max` using the declared `sup‖G‖`.
pub fn hypothesis_constants(spec: &JumpSpec, lambda: f64) -> Result<HypothesisReport, NoiseError> {
    let a0_max = admissible_tilt(spec);
    if !(lambda >= 0.0) || lambda > a0_max {
        return Err(NoiseError::DivergentMoment { lambda, a0_max });
    }
    let g = spec.direction.sup_norm();
    let m2 = spec.mark.second_moment().ok_or_else(|| {
        NoiseError::HypothesisViolation(format!("mark law {:?} has no finite second moment", spec.mark))
    })?;
    let tilted = spec
        .mark
        .tilted_second_moment(lambda * g)
        .ok_or(NoiseError::DivergentMoment { lambda, a0_max })?;
    Ok(HypothesisReport {
        m: spec.intensity * g * g * m2,
        lambda,
        m_lambda: spec.intensity * g * g * tilted,
        a0_max,
        method: EstimateMethod::Analytic,
    })
}

/// `M` and `M_λ` as suprema over the supplied states only.
pub fn sampled_hypothesis_constants<'a>(
    spec: &JumpSpec,
    lambda: f64,
    states: impl IntoIterator<Item = &'a SpectralField>,
) -> Result<HypothesisReport, NoiseError> {
    let a0_max = admissible_tilt(spec);
    let mut m: f64 = 0.0;
    let mut m_lambda: f64 = 0.0;
    for x in states {
        let g = spec.direction.apply(x).norm_h();
        let m2 = spec.mark.second_moment().ok_or_else(|| {
            NoiseError::HypothesisViolation(format!("mark law {:?} has no finite second moment", spec.mark))
        })?;
        let tilted = spec
            .mark
            .tilted_second_moment(lambda * g)
            .ok_or(NoiseError::DivergentMoment { lambda, a0_max })?;
        m = m.max(spec.intensity * g * g * m2);
        m_lambda = m_lambda.max(spec.intensity * g * g * tilted);
    }
    Ok(HypothesisReport { m, lambda, m_lambda, a0_max, method: EstimateMethod::Sampled })
}
