//! Sine-basis representation of states in `H = L²(0,1)` with Dirichlet
//! boundary conditions.
//!
//! A state is stored through its coefficients `a_k` against the orthonormal
//! basis `e_k(ξ) = √2 sin(kπξ)`, `k = 1..N`. The Laplacian is diagonal in this
//! basis with eigenvalues `-α_k = -π²k²`.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest truncation for which the nonlinearity is evaluated with the exact
/// mode-coupling sum.
pub const EXACT_COUPLING_MAX_MODES: usize = 64;

/// Default Galerkin truncation level.
pub const DEFAULT_MODES: usize = 32;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error("coefficient a_{index} is not finite ({value})")]
    InvalidField { index: usize, value: f64 },
    #[error("a field needs at least one mode")]
    NoModes,
    #[error("{modes} modes cannot be resolved on {points} grid points")]
    Resolution { modes: usize, points: usize },
    #[error("time must be non-negative, got {0}")]
    NegativeTime(f64),
    #[error("mode count mismatch: {left} vs {right}")]
    ModeMismatch { left: usize, right: usize },
}

/// Eigenvalue `α_k = π²k²` of `-Δ` for the (1-based) mode `k`.
#[inline]
pub fn alpha(k: usize) -> f64 {
    let k = k as f64;
    PI * PI * k * k
}

/// A truncated sine series `x = Σ a_k e_k`.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SpectralField {
    coeffs: Vec<f64>,
}

impl SpectralField {
    pub fn new(coeffs: Vec<f64>) -> Result<Self, SpectralError> {
        if coeffs.is_empty() {
            return Err(SpectralError::NoModes);
        }
        if let Some((i, &v)) = coeffs.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(SpectralError::InvalidField { index: i + 1, value: v });
        }
        Ok(Self { coeffs })
    }

    /// Wraps coefficients produced by arithmetic on valid fields. Callers are
    /// responsible for checking finiteness where it can be lost.
    pub(crate) fn from_raw(coeffs: Vec<f64>) -> Self {
        debug_assert!(!coeffs.is_empty());
        Self { coeffs }
    }

    pub fn zeros(n_modes: usize) -> Self {
        assert!(n_modes > 0, "a field needs at least one mode");
        Self { coeffs: vec![0.0; n_modes] }
    }

    /// The basis element `e_k` (1-based) in an `n_modes` truncation.
    pub fn basis(n_modes: usize, k: usize) -> Self {
        assert!((1..=n_modes).contains(&k), "mode {k} outside 1..={n_modes}");
        let mut x = Self::zeros(n_modes);
        x.coeffs[k - 1] = 1.0;
        x
    }

    pub fn n_modes(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Coefficient of mode `k` (1-based).
    pub fn coeff(&self, k: usize) -> f64 {
        self.coeffs[k - 1]
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|v| v.is_finite())
    }

    pub fn validate(&self) -> Result<(), SpectralError> {
        match self.coeffs.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(SpectralError::InvalidField { index: i + 1, value: self.coeffs[i] }),
            None => Ok(()),
        }
    }

    pub fn norm_h_sq(&self) -> f64 {
        self.coeffs.iter().map(|a| a * a).sum()
    }

    /// `‖x‖_H = (Σ a_k²)^{1/2}`.
    pub fn norm_h(&self) -> f64 {
        self.norm_h_sq().sqrt()
    }

    /// `Σ k² a_k²`, i.e. `‖x‖²_V / π²`.
    ///
    /// Each term is at least the corresponding term of `norm_h_sq` after
    /// rounding, so the Poincaré inequality survives floating point.
    fn weighted_sq(&self) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let k = (i + 1) as f64;
                (k * k) * (a * a)
            })
            .sum()
    }

    pub fn norm_v_sq(&self) -> f64 {
        let v = self.norm_v();
        v * v
    }

    /// `‖x‖_V = (Σ π²k² a_k²)^{1/2}`; always `≥ π‖x‖_H`.
    pub fn norm_v(&self) -> f64 {
        PI * self.weighted_sq().sqrt()
    }

    /// H inner product.
    pub fn dot(&self, other: &Self) -> f64 {
        assert_eq!(self.n_modes(), other.n_modes(), "mode count mismatch");
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b).sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::from_raw(self.coeffs.iter().map(|a| c * a).collect())
    }

    /// `self += c * other`.
    pub fn add_scaled(&mut self, c: f64, other: &Self) {
        assert_eq!(self.n_modes(), other.n_modes(), "mode count mismatch");
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += c * b;
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.add_scaled(-1.0, other);
        out
    }

    /// `Δx`, coefficients `-α_k a_k`.
    pub fn laplacian(&self) -> Self {
        Self::from_raw(
            self.coeffs
                .iter()
                .enumerate()
                .map(|(i, a)| -alpha(i + 1) * a)
                .collect(),
        )
    }

    /// Fraction of `‖x‖²_H` carried by the top quarter of the modes. Used as a
    /// truncation diagnostic; zero for the zero field.
    pub fn tail_energy_fraction(&self) -> f64 {
        let total = self.norm_h_sq();
        if total == 0.0 {
            return 0.0;
        }
        let n = self.n_modes();
        let start = n - n.div_ceil(4);
        self.coeffs[start..].iter().map(|a| a * a).sum::<f64>() / total
    }

    pub(crate) fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }
}

impl TryFrom<Vec<f64>> for SpectralField {
    type Error = SpectralError;

    fn try_from(coeffs: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(coeffs)
    }
}

impl From<SpectralField> for Vec<f64> {
    fn from(x: SpectralField) -> Self {
        x.coeffs
    }
}

impl fmt::Debug for SpectralField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("SpectralField").field(&self.coeffs).finish()
    }
}

/// Samples of a function at the interior points `ξ_j = j/(M+1)`, `j = 1..M`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    /// Samples `f` at the `m` interior collocation points.
    pub fn from_fn(m: usize, f: impl Fn(f64) -> f64) -> Self {
        Self { values: (1..=m).map(|j| f(node(j, m))).collect() }
    }

    pub fn points(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        let m = self.points();
        (1..=m).map(move |j| node(j, m))
    }

    /// Rectangle-rule approximation of `∫₀¹ g(ξ)² dξ`.
    pub fn quadrature_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>() / (self.points() + 1) as f64
    }
}

#[inline]
fn node(j: usize, m: usize) -> f64 {
    j as f64 / (m + 1) as f64
}

/// `values_j = Σ_k a_k √2 sin(kπξ_j)`.
pub fn evaluate(x: &SpectralField, m: usize) -> GridFunction {
    let h = PI / (m + 1) as f64;
    let values = (1..=m)
        .map(|j| {
            x.coeffs()
                .iter()
                .enumerate()
                .map(|(i, a)| a * ((i + 1) as f64 * j as f64 * h).sin())
                .sum::<f64>()
                * SQRT_2
        })
        .collect();
    GridFunction { values }
}

/// Discrete sine transform onto `e_1..e_{n_modes}`; exact on sine polynomials
/// of degree at most `M`.
pub fn project(g: &GridFunction, n_modes: usize) -> Result<SpectralField, SpectralError> {
    let m = g.points();
    if n_modes == 0 {
        return Err(SpectralError::NoModes);
    }
    if n_modes > m {
        return Err(SpectralError::Resolution { modes: n_modes, points: m });
    }
    let h = PI / (m + 1) as f64;
    let scale = SQRT_2 / (m + 1) as f64;
    let coeffs = (1..=n_modes)
        .map(|k| {
            g.values
                .iter()
                .enumerate()
                .map(|(j, v)| v * (k as f64 * (j + 1) as f64 * h).sin())
                .sum::<f64>()
                * scale
        })
        .collect();
    SpectralField::new(coeffs)
}

/// Heat semigroup `S(t) = e^{tΔ}`: `a_k ↦ e^{-π²k²t} a_k`.
pub fn heat_semigroup(x: &SpectralField, t: f64) -> Result<SpectralField, SpectralError> {
    if !(t >= 0.0) {
        return Err(SpectralError::NegativeTime(t));
    }
    Ok(SpectralField::from_raw(
        x.coeffs()
            .iter()
            .enumerate()
            .map(|(i, a)| (-alpha(i + 1) * t).exp() * a)
            .collect(),
    ))
}

/// Galerkin projection of `x·x′` computed with the exact mode-coupling sum.
///
/// With `x = Σ a_m √2 sin(mπξ)`, the product expands into
/// `a_m a_n nπ [sin((m+n)πξ) + sin((m−n)πξ)]`, whose projection on `e_k` is
/// `(π/√2) a_m a_n n` for each coupling `m ± n = k`.
pub fn burgers_exact(x: &SpectralField) -> SpectralField {
    let n = x.n_modes();
    let a = x.coeffs();
    let mut b = vec![0.0; n];
    let c = PI / SQRT_2;
    for m in 1..=n {
        let am = a[m - 1];
        if am == 0.0 {
            continue;
        }
        for q in 1..=n {
            let w = c * am * a[q - 1] * q as f64;
            if m + q <= n {
                b[m + q - 1] += w;
            }
            if m > q {
                b[m - q - 1] += w;
            } else if q > m {
                b[q - m - 1] -= w;
            }
        }
    }
    SpectralField::from_raw(b)
}

/// Pseudo-spectral evaluation of the nonlinearity on `M ≥ 2N` collocation
/// points, where the quadratic product is resolved without aliasing.
#[derive(Clone)]
pub struct PseudoSpectral {
    n_modes: usize,
    points: usize,
    inverse: Arc<dyn Fft<f64>>,
    forward: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for PseudoSpectral {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PseudoSpectral")
            .field("n_modes", &self.n_modes)
            .field("points", &self.points)
            .finish()
    }
}

impl PseudoSpectral {
    pub fn new(n_modes: usize) -> Self {
        Self::with_points(n_modes, 2 * n_modes).expect("2N points always resolve N modes")
    }

    pub fn with_points(n_modes: usize, points: usize) -> Result<Self, SpectralError> {
        if n_modes == 0 {
            return Err(SpectralError::NoModes);
        }
        if points < 2 * n_modes {
            return Err(SpectralError::Resolution { modes: n_modes, points });
        }
        let len = 2 * (points + 1);
        let mut planner = FftPlanner::new();
        Ok(Self {
            n_modes,
            points,
            inverse: planner.plan_fft_inverse(len),
            forward: planner.plan_fft_forward(len),
        })
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn apply(&self, x: &SpectralField) -> SpectralField {
        assert_eq!(x.n_modes(), self.n_modes, "mode count mismatch");
        let len = 2 * (self.points + 1);
        let zero = Complex::new(0.0, 0.0);
        let mut values = vec![zero; len];
        let mut slopes = vec![zero; len];
        for (i, &a) in x.coeffs().iter().enumerate() {
            let k = (i + 1) as f64;
            values[i + 1] = Complex::new(a, 0.0);
            slopes[i + 1] = Complex::new(k * a, 0.0);
        }
        self.inverse.process(&mut values);
        self.inverse.process(&mut slopes);

        // x_j = √2 Im(..), x'_j = √2 π Re(..); product lives on j = 1..M.
        let mut product = vec![zero; len];
        for j in 1..=self.points {
            let u = SQRT_2 * values[j].im;
            let du = SQRT_2 * PI * slopes[j].re;
            product[j] = Complex::new(u * du, 0.0);
        }
        self.forward.process(&mut product);
        let scale = -SQRT_2 / (self.points + 1) as f64;
        SpectralField::from_raw((1..=self.n_modes).map(|k| scale * product[k].im).collect())
    }
}

/// Evaluation strategy for `B(x) = x·x′`, chosen by truncation level.
#[derive(Debug, Clone)]
pub enum Nonlinearity {
    Exact,
    PseudoSpectral(PseudoSpectral),
}

impl Nonlinearity {
    pub fn for_modes(n_modes: usize) -> Self {
        if n_modes <= EXACT_COUPLING_MAX_MODES {
            Nonlinearity::Exact
        } else {
            Nonlinearity::PseudoSpectral(PseudoSpectral::new(n_modes))
        }
    }

    pub fn apply(&self, x: &SpectralField) -> SpectralField {
        match self {
            Nonlinearity::Exact => burgers_exact(x),
            Nonlinearity::PseudoSpectral(p) => p.apply(x),
        }
    }
}

/// `B(x) = P_N(x·x′)`, the Burgers nonlinearity projected on the truncation.
pub fn burgers_nonlinearity(x: &SpectralField) -> SpectralField {
    if x.n_modes() <= EXACT_COUPLING_MAX_MODES {
        burgers_exact(x)
    } else {
        PseudoSpectral::new(x.n_modes()).apply(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn field(coeffs: &[f64]) -> SpectralField {
        SpectralField::new(coeffs.to_vec()).unwrap()
    }

    /// Projection of `x·x′` on `e_k` by composite Gauss–Legendre quadrature of
    /// the physical-space product.
    fn quadrature_projection(x: &SpectralField, k: usize) -> f64 {
        let nodes = crate::quadrature::GaussLegendre::new(24);
        let value = |xi: f64| -> f64 {
            let mut u = 0.0;
            let mut du = 0.0;
            for (i, a) in x.coeffs().iter().enumerate() {
                let m = (i + 1) as f64;
                u += a * SQRT_2 * (m * PI * xi).sin();
                du += a * SQRT_2 * m * PI * (m * PI * xi).cos();
            }
            u * du * SQRT_2 * (k as f64 * PI * xi).sin()
        };
        nodes.integrate_composite(value, 0.0, 1.0, 64)
    }

    #[test]
    fn norms_of_simple_fields() {
        assert_eq!(SpectralField::basis(8, 1).norm_h(), 1.0);
        assert_eq!(SpectralField::zeros(8).norm_h(), 0.0);
        assert_eq!(field(&[3.0, 4.0, 0.0]).norm_h(), 5.0);
        assert_abs_diff_eq!(SpectralField::basis(8, 1).norm_v(), PI, epsilon = 1e-15);
        assert_abs_diff_eq!(SpectralField::basis(8, 2).norm_v(), 2.0 * PI, epsilon = 1e-15);
        assert_eq!(SpectralField::zeros(4).norm_v(), 0.0);
    }

    #[test]
    fn rejects_non_finite_coefficients() {
        assert!(matches!(
            SpectralField::new(vec![0.0, f64::NAN]),
            Err(SpectralError::InvalidField { index: 2, .. })
        ));
        assert!(matches!(
            SpectralField::new(vec![f64::INFINITY]),
            Err(SpectralError::InvalidField { index: 1, .. })
        ));
        assert_eq!(SpectralField::new(vec![]), Err(SpectralError::NoModes));
    }

    #[test]
    fn nonlinearity_of_first_mode_matches_quadrature() {
        let x = SpectralField::basis(8, 1);
        let b = burgers_nonlinearity(&x);
        for k in 1..=8 {
            let oracle = quadrature_projection(&x, k);
            assert_abs_diff_eq!(b.coeff(k), oracle, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(b.coeff(2), PI / SQRT_2, epsilon = 1e-12);
        assert_eq!(burgers_nonlinearity(&SpectralField::zeros(8)).norm_h(), 0.0);
    }

    #[test]
    fn exact_sum_agrees_with_quadrature_on_mixed_field() {
        let x = field(&[0.7, -0.3, 0.25, 0.0, 0.1, -0.05]);
        let b = burgers_exact(&x);
        for k in 1..=6 {
            assert_abs_diff_eq!(b.coeff(k), quadrature_projection(&x, k), epsilon = 1e-11);
        }
    }

    #[test]
    fn large_truncation_uses_pseudo_spectral_path() {
        let n = 80;
        let coeffs: Vec<f64> = (1..=n).map(|k| (k as f64).recip().powi(2) * (k as f64).cos()).collect();
        let x = field(&coeffs);
        assert!(matches!(Nonlinearity::for_modes(n), Nonlinearity::PseudoSpectral(_)));
        let fast = burgers_nonlinearity(&x);
        let exact = burgers_exact(&x);
        for k in 1..=n {
            assert_abs_diff_eq!(fast.coeff(k), exact.coeff(k), epsilon = 1e-10);
        }
    }

    #[test]
    fn grid_round_trip_and_point_values() {
        let e1 = SpectralField::basis(4, 1);
        let g = evaluate(&e1, 1);
        assert_abs_diff_eq!(g.values()[0], SQRT_2, epsilon = 1e-15);
        let g = evaluate(&SpectralField::basis(4, 2), 1);
        assert_abs_diff_eq!(g.values()[0], 0.0, epsilon = 1e-15);
        assert!(evaluate(&SpectralField::zeros(4), 9).values().iter().all(|&v| v == 0.0));

        let e3 = evaluate(&SpectralField::basis(8, 3), 64);
        let p = project(&e3, 8).unwrap();
        for k in 1..=8 {
            assert_abs_diff_eq!(p.coeff(k), if k == 3 { 1.0 } else { 0.0 }, epsilon = 1e-13);
        }
        let combo = field(&[1.0, 2.0, 0.0, 0.0]);
        let p = project(&evaluate(&combo, 16), 4).unwrap();
        assert_abs_diff_eq!(p.coeff(1), 1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(p.coeff(2), 2.0, epsilon = 1e-13);
        let zero = project(&GridFunction::new(vec![0.0; 10]), 4).unwrap();
        assert_eq!(zero.norm_h(), 0.0);
    }

    #[test]
    fn project_rejects_underresolved_grid() {
        let g = GridFunction::new(vec![1.0; 4]);
        assert_eq!(
            project(&g, 5).unwrap_err(),
            SpectralError::Resolution { modes: 5, points: 4 }
        );
        assert!(PseudoSpectral::with_points(8, 15).is_err());
    }

    #[test]
    fn heat_semigroup_values() {
        let e1 = SpectralField::basis(4, 1);
        assert_eq!(heat_semigroup(&e1, 0.0).unwrap(), e1);
        let s = heat_semigroup(&e1, 1.0).unwrap();
        assert_abs_diff_eq!(s.coeff(1), (-PI * PI).exp(), epsilon = 1e-18);
        assert_abs_diff_eq!(s.coeff(1), 5.1723e-5, epsilon = 1e-8);
        let s = heat_semigroup(&SpectralField::basis(4, 2), 0.1).unwrap();
        assert_abs_diff_eq!(s.coeff(2), (-0.4 * PI * PI).exp(), epsilon = 1e-15);
        assert_eq!(heat_semigroup(&e1, -1.0), Err(SpectralError::NegativeTime(-1.0)));
    }

    #[test]
    fn tail_fraction_reports_top_quarter() {
        let x = field(&[1.0, 0.0, 0.0, 1.0]);
        assert_abs_diff_eq!(x.tail_energy_fraction(), 0.5, epsilon = 1e-15);
        assert_eq!(SpectralField::zeros(4).tail_energy_fraction(), 0.0);
    }

    fn arb_field(max_modes: usize) -> impl Strategy<Value = SpectralField> {
        prop::collection::vec(-3.0f64..3.0, 1..=max_modes)
            .prop_map(|c| SpectralField::new(c).unwrap())
    }

    proptest! {
        #[test]
        fn poincare_holds_in_floating_point(x in arb_field(40)) {
            prop_assert!(x.norm_v() >= PI * x.norm_h());
        }

        #[test]
        fn nonlinearity_is_skew(x in arb_field(48)) {
            let b = burgers_nonlinearity(&x);
            let h = x.norm_h();
            prop_assert!(b.dot(&x).abs() <= 1e-10 * (1.0 + h * h * h));
        }

        #[test]
        fn nonlinearity_is_quadratic(x in arb_field(16), c in -4.0f64..4.0) {
            let lhs = burgers_nonlinearity(&x.scaled(c));
            let rhs = burgers_nonlinearity(&x).scaled(c * c);
            for (l, r) in lhs.coeffs().iter().zip(rhs.coeffs()) {
                prop_assert!((l - r).abs() <= 1e-10 * (1.0 + r.abs()));
            }
        }

        #[test]
        fn exact_and_pseudo_spectral_agree(x in arb_field(16)) {
            let exact = burgers_exact(&x);
            let fast = PseudoSpectral::new(x.n_modes()).apply(&x);
            for (l, r) in exact.coeffs().iter().zip(fast.coeffs()) {
                prop_assert!((l - r).abs() <= 1e-10);
            }
        }

        #[test]
        fn grid_round_trip(x in arb_field(16), extra in 0usize..20) {
            let m = 2 * x.n_modes() + extra;
            let back = project(&evaluate(&x, m), x.n_modes()).unwrap();
            for (l, r) in back.coeffs().iter().zip(x.coeffs()) {
                prop_assert!((l - r).abs() <= 1e-12);
            }
            let parseval = evaluate(&x, m).quadrature_sq();
            prop_assert!((parseval - x.norm_h_sq()).abs() <= 1e-10 * (1.0 + x.norm_h_sq()));
        }

        #[test]
        fn semigroup_law_and_contraction(x in arb_field(12), t in 0.0f64..0.5, s in 0.0f64..0.5) {
            let ts = heat_semigroup(&heat_semigroup(&x, s).unwrap(), t).unwrap();
            let direct = heat_semigroup(&x, t + s).unwrap();
            for (l, r) in ts.coeffs().iter().zip(direct.coeffs()) {
                prop_assert!((l - r).abs() <= 1e-14 * (1.0 + r.abs()));
            }
            prop_assert!(direct.norm_h() <= (-PI * PI * (t + s)).exp() * x.norm_h() * (1.0 + 1e-14));
        }
    }
}
