use serde::{Deserialize, Serialize};

use crate::lyapunov::psi;
use crate::spectral::SpectralField;

/// Number of functions in the fixed `B_ψ` test dictionary.
pub const DICTIONARY_LEN: usize = 16;

/// Declared growth bound of an observable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Envelope {
    /// `|g(x)| ≤ ψ(x)`.
    Psi,
    /// `|g(x)| ≤ c`.
    Const(f64),
    /// No bound relative to `ψ`.
    Unbounded,
}

impl Envelope {
    pub fn bound(&self, x: &SpectralField) -> f64 {
        match self {
            Envelope::Psi => psi(x),
            Envelope::Const(c) => *c,
            Envelope::Unbounded => f64::INFINITY,
        }
    }

    /// Every bounded envelope is dominated by a multiple of `ψ`.
    pub fn in_b_psi(&self) -> bool {
        match self {
            Envelope::Psi => true,
            Envelope::Const(c) => *c <= 1.0,
            Envelope::Unbounded => false,
        }
    }
}

/// Scalar test functions of the state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Observable {
    /// Coefficient `⟨x, e_k⟩` (zero beyond the truncation).
    Mode { k: usize },
    NormH,
    NormHSq,
    Psi,
    Constant { value: f64 },
    /// Entry `index` of the `B_ψ` dictionary.
    Dictionary { index: usize },
}

fn mode(x: &SpectralField, k: usize) -> f64 {
    x.coeffs().get(k.wrapping_sub(1)).copied().unwrap_or(0.0)
}

impl Observable {
    pub fn name(&self) -> String {
        match self {
            Observable::Mode { k } => format!("mode_{k}"),
            Observable::NormH => "norm_h".into(),
            Observable::NormHSq => "norm_h_sq".into(),
            Observable::Psi => "psi".into(),
            Observable::Constant { value } => format!("const_{value}"),
            Observable::Dictionary { index } => match index {
                0..=7 => format!("tanh_mode_{}", index + 1),
                8..=11 => format!("mode_{}", index - 7),
                12 => "norm_h".into(),
                13 => "psi_minus_one".into(),
                14 => "tanh_norm_h".into(),
                _ => "norm_h_sq_over_psi".into(),
            },
        }
    }

    pub fn envelope(&self) -> Envelope {
        match self {
            Observable::Mode { .. } | Observable::NormH | Observable::Psi => Envelope::Psi,
            Observable::NormHSq => Envelope::Unbounded,
            Observable::Constant { value } => Envelope::Const(value.abs()),
            Observable::Dictionary { index } => match index {
                0..=7 | 14 => Envelope::Const(1.0),
                _ => Envelope::Psi,
            },
        }
    }

    /// Rejects dictionary indices and mode numbers that do not exist.
    pub fn validate(&self) -> Result<(), String> {
        match self {
            Observable::Mode { k: 0 } => Err("mode numbers start at 1".into()),
            Observable::Dictionary { index } if *index >= DICTIONARY_LEN => {
                Err(format!("dictionary index {index} out of range 0..{DICTIONARY_LEN}"))
            }
            Observable::Constant { value } if !value.is_finite() => Err("constant must be finite".into()),
            _ => Ok(()),
        }
    }

    fn raw(&self, x: &SpectralField) -> f64 {
        match self {
            Observable::Mode { k } => mode(x, *k),
            Observable::NormH => x.norm_h(),
            Observable::NormHSq => x.norm_h_sq(),
            Observable::Psi => psi(x),
            Observable::Constant { value } => *value,
            Observable::Dictionary { index } => match index {
                0..=7 => mode(x, index + 1).tanh(),
                8..=11 => mode(x, index - 7),
                12 => x.norm_h(),
                13 => psi(x) - 1.0,
                14 => x.norm_h().tanh(),
                _ => x.norm_h_sq() / psi(x),
            },
        }
    }

    /// `g(x)`, asserting the declared envelope.
    pub fn eval(&self, x: &SpectralField) -> f64 {
        let v = self.raw(x);
        let bound = self.envelope().bound(x);
        assert!(
            v.abs() <= bound * (1.0 + 1e-12),
            "{} = {v} exceeds its envelope {bound}",
            self.name()
        );
        v
    }
}

/// The 16 fixed members of `B_ψ` used as a proxy for the supremum over `B_ψ`.
pub fn b_psi_dictionary() -> Vec<Observable> {
    (0..DICTIONARY_LEN).map(|index| Observable::Dictionary { index }).collect()
}
