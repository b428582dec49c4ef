//! The uncertain expected-return structure and its ambiguity family.
//!
//! Expected returns are modeled as `μ(ζ) = μ⁰ + Σ_j ζ_j μ⁽ʲ⁾` where the
//! `μ⁽ʲ⁾` are fixed basic shift vectors and `ζ` is a random perturbation
//! whose distribution is known only through componentwise mean bounds
//! `[m^L, m^U]` and, optionally, standard deviations `s`. Everything here is
//! a pure value type; the surrogate builders consume these descriptions.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("at least one basic shift is required")]
    EmptyShifts,
    #[error("shift {index} has length {found}, expected {expected}")]
    ShiftLengthMismatch {
        index: usize,
        found: usize,
        expected: usize,
    },
    #[error("shift {index} contains a non-finite entry")]
    NonFiniteShift { index: usize },
    #[error("mean bounds inverted at factor {0}: lower > upper")]
    BoundsInverted(usize),
    #[error("negative standard deviation at factor {0}")]
    NegativeStd(usize),
    #[error("confidence level beta must lie in (0, 1), got {0}")]
    BetaOutOfRange(f64),
    #[error("family describes {family} factor(s) but there are {shifts} shift(s)")]
    FactorCountMismatch { family: usize, shifts: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("model json: {0}")]
    Json(String),
}

/// The fixed direction vectors `μ⁽ʲ⁾` scaling the perturbation components.
#[derive(Debug, Clone, PartialEq)]
pub struct BasicShifts {
    shifts: Vec<DVector<f64>>,
}

impl BasicShifts {
    pub fn new(shifts: Vec<DVector<f64>>) -> Result<Self, ModelError> {
        let n = match shifts.first() {
            Some(first) => first.len(),
            None => return Err(ModelError::EmptyShifts),
        };
        for (index, shift) in shifts.iter().enumerate() {
            if shift.len() != n {
                return Err(ModelError::ShiftLengthMismatch {
                    index,
                    found: shift.len(),
                    expected: n,
                });
            }
            if shift.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::NonFiniteShift { index });
            }
        }
        Ok(Self { shifts })
    }

    /// One factor per asset, `μ⁽ʲ⁾ = d_j e_j` — the usual diagonal layout.
    pub fn diagonal(d: &[f64]) -> Result<Self, ModelError> {
        let n = d.len();
        Self::new(
            d.iter()
                .enumerate()
                .map(|(j, &dj)| DVector::from_fn(n, |i, _| if i == j { dj } else { 0.0 }))
                .collect(),
        )
    }

    pub fn factor_count(&self) -> usize {
        self.shifts.len()
    }

    pub fn asset_count(&self) -> usize {
        self.shifts[0].len()
    }

    pub fn vectors(&self) -> &[DVector<f64>] {
        &self.shifts
    }
}

/// Moment envelope of the perturbation distribution family 𝒫.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationFamily {
    pub mean_lower: DVector<f64>,
    pub mean_upper: DVector<f64>,
    pub std: Option<DVector<f64>>,
    /// Components of ζ are treated as mutually independent; required by the
    /// piecewise-quadratic surrogate.
    pub independent: bool,
}

impl PerturbationFamily {
    pub fn new(
        mean_lower: DVector<f64>,
        mean_upper: DVector<f64>,
        std: Option<DVector<f64>>,
    ) -> Result<Self, ModelError> {
        if mean_lower.len() != mean_upper.len() {
            return Err(ModelError::DimensionMismatch(format!(
                "mean_lower has length {}, mean_upper {}",
                mean_lower.len(),
                mean_upper.len()
            )));
        }
        for j in 0..mean_lower.len() {
            if mean_lower[j] > mean_upper[j] {
                return Err(ModelError::BoundsInverted(j));
            }
        }
        if let Some(s) = &std {
            if s.len() != mean_lower.len() {
                return Err(ModelError::DimensionMismatch(format!(
                    "std has length {}, bounds {}",
                    s.len(),
                    mean_lower.len()
                )));
            }
            if let Some(j) = (0..s.len()).find(|&j| s[j] < 0.0) {
                return Err(ModelError::NegativeStd(j));
            }
        }
        Ok(Self {
            mean_lower,
            mean_upper,
            std,
            independent: true,
        })
    }

    pub fn factor_count(&self) -> usize {
        self.mean_lower.len()
    }
}

/// Full description of the ambiguous chance constraint's data: nominal mean,
/// shifts, family, confidence level β, and target return τ.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertainReturnModel {
    pub mu0: DVector<f64>,
    pub shifts: BasicShifts,
    pub family: PerturbationFamily,
    pub beta: f64,
    pub tau: f64,
}

impl UncertainReturnModel {
    pub fn new(
        mu0: DVector<f64>,
        shifts: BasicShifts,
        family: PerturbationFamily,
        beta: f64,
        tau: f64,
    ) -> Result<Self, ModelError> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(ModelError::BetaOutOfRange(beta));
        }
        if shifts.factor_count() != family.factor_count() {
            return Err(ModelError::FactorCountMismatch {
                family: family.factor_count(),
                shifts: shifts.factor_count(),
            });
        }
        if shifts.asset_count() != mu0.len() {
            return Err(ModelError::DimensionMismatch(format!(
                "mu0 has length {}, shifts act on {} assets",
                mu0.len(),
                shifts.asset_count()
            )));
        }
        Ok(Self {
            mu0,
            shifts,
            family,
            beta,
            tau,
        })
    }

    pub fn n_assets(&self) -> usize {
        self.mu0.len()
    }

    pub fn factor_count(&self) -> usize {
        self.shifts.factor_count()
    }

    /// Same model with a different target return; used by frontier sweeps.
    pub fn with_tau(&self, tau: f64) -> Self {
        let mut model = self.clone();
        model.tau = tau;
        model
    }

    /// Factor exposures `w_j = (μ⁽ʲ⁾)ᵀx` of a weight vector.
    pub fn factor_exposures(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.factor_count(), |j, _| self.shifts.vectors()[j].dot(x))
    }
}

/// Which end of the mean box to substitute for every factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundSide {
    Lower,
    Upper,
}

/// The vector `c` with `c[i] = μ⁰[i] + Σ_j μ⁽ʲ⁾[i]·m_j` for the chosen bound
/// side, so that the mean-bound substitution of `E[μ(ζ)]ᵀx` is `cᵀx`.
pub fn effective_mean_coefficients(model: &UncertainReturnModel, side: BoundSide) -> DVector<f64> {
    let m = match side {
        BoundSide::Lower => &model.family.mean_lower,
        BoundSide::Upper => &model.family.mean_upper,
    };
    let mut coeffs = model.mu0.clone();
    for (j, shift) in model.shifts.vectors().iter().enumerate() {
        coeffs.axpy(m[j], shift, 1.0);
    }
    coeffs
}

/// Minimum of `E[μ(ζ)]ᵀx` over admissible mean vectors: each factor picks the
/// bound end that hurts given the sign of its exposure `w_j = (μ⁽ʲ⁾)ᵀx`. When
/// all exposures are non-negative this reduces to the lower-side effective
/// mean applied to x.
pub fn worst_case_mean_return(
    model: &UncertainReturnModel,
    x: &DVector<f64>,
) -> Result<f64, ModelError> {
    if x.len() != model.n_assets() {
        return Err(ModelError::InvalidWeights(format!(
            "length {} vs {} assets",
            x.len(),
            model.n_assets()
        )));
    }
    let budget = x.sum();
    if (budget - 1.0).abs() > 1e-8 {
        return Err(ModelError::InvalidWeights(format!(
            "weights sum to {budget}, not 1"
        )));
    }
    if let Some(bad) = x.iter().find(|&&v| v < -1e-8) {
        return Err(ModelError::InvalidWeights(format!("negative weight {bad}")));
    }
    let mut value = model.mu0.dot(x);
    for (j, shift) in model.shifts.vectors().iter().enumerate() {
        let w = shift.dot(x);
        value += (model.family.mean_lower[j] * w).min(model.family.mean_upper[j] * w);
    }
    Ok(value)
}

#[derive(Serialize, Deserialize)]
struct ModelJson {
    mu0: Vec<f64>,
    shifts: Vec<Vec<f64>>,
    mean_lower: Vec<f64>,
    mean_upper: Vec<f64>,
    std: Option<Vec<f64>>,
    beta: f64,
    tau: f64,
    #[serde(default = "default_independent")]
    independent: bool,
}

fn default_independent() -> bool {
    true
}

pub fn model_to_json(model: &UncertainReturnModel) -> String {
    let doc = ModelJson {
        mu0: model.mu0.iter().copied().collect(),
        shifts: model
            .shifts
            .vectors()
            .iter()
            .map(|s| s.iter().copied().collect())
            .collect(),
        mean_lower: model.family.mean_lower.iter().copied().collect(),
        mean_upper: model.family.mean_upper.iter().copied().collect(),
        std: model
            .family
            .std
            .as_ref()
            .map(|s| s.iter().copied().collect()),
        beta: model.beta,
        tau: model.tau,
        independent: model.family.independent,
    };
    serde_json::to_string_pretty(&doc).expect("model serialize")
}

pub fn model_from_json(text: &str) -> Result<UncertainReturnModel, ModelError> {
    let doc: ModelJson = serde_json::from_str(text).map_err(|e| ModelError::Json(e.to_string()))?;
    let shifts = BasicShifts::new(doc.shifts.into_iter().map(DVector::from_vec).collect())?;
    let mut family = PerturbationFamily::new(
        DVector::from_vec(doc.mean_lower),
        DVector::from_vec(doc.mean_upper),
        doc.std.map(DVector::from_vec),
    )?;
    family.independent = doc.independent;
    UncertainReturnModel::new(DVector::from_vec(doc.mu0), shifts, family, doc.beta, doc.tau)
}
