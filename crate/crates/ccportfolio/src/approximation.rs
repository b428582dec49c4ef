//! Canonical convex programs for the nominal problem and the three safe
//! approximations of the ambiguous chance constraint.
//!
//! Every program minimizes the portfolio risk `½xᵀΣx` over the simplex
//! `Σx = 1, x ≥ 0` plus one surrogate constraint:
//!
//! * nominal: `μ⁰ᵀx ≥ τ` (no ambiguity, kept as the baseline);
//! * piecewise-linear `γ(t) = [1+t]₊`: `μ_effᵀx ≥ τ + β`;
//! * Bernstein `γ(t) = eᵗ`: `μ_effᵀx ≥ τ − ln(1−β)`;
//! * piecewise-quadratic `γ(t) = ([1+t]₊)²`: a convex quadratic constraint in
//!   canonical `(H, g, c)` form.
//!
//! Here `μ_eff` is the lower-side effective mean from the uncertainty module.
//! The builders keep the surrogate algebra exactly as derived; the quadratic
//! one passes through a convexity gate because the mixed bound substitution is
//! not positive semidefinite for every bound configuration.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::market_data::MomentEstimates;
use crate::uncertainty::{effective_mean_coefficients, BoundSide, UncertainReturnModel};

#[derive(Debug, Error)]
pub enum ApproxError {
    #[error("the perturbation family lacks finite mean bounds")]
    MissingMeanBounds,
    #[error("the piecewise-quadratic surrogate needs per-factor standard deviations")]
    MissingStd,
    #[error("the piecewise-quadratic surrogate requires independent perturbation components")]
    DependentPerturbations,
    #[error("surrogate constraint is not convex: min eigenvalue {eig_min:.3e}")]
    NonConvexSurrogate { eig_min: f64 },
    #[error("invalid objective: {0}")]
    InvalidObjective(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// `aᵀx ≤ b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearIneq {
    pub a: DVector<f64>,
    pub b: f64,
    pub label: String,
}

/// `½xᵀHx + gᵀx + c ≤ 0` with H symmetric PSD (enforced at build time).
#[derive(Debug, Clone, PartialEq)]
pub struct QuadIneq {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub c: f64,
    pub label: String,
}

impl QuadIneq {
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * (&self.h * x).dot(x) + self.g.dot(x) + self.c
    }
}

/// Minimize `½xᵀQx` subject to the listed inequalities and the implicit
/// simplex constraints `Σx = 1`, `x ≥ 0`. Immutable once built; the solver
/// only reads it.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexProgram {
    objective_q: DMatrix<f64>,
    linear_ineqs: Vec<LinearIneq>,
    quad_ineqs: Vec<QuadIneq>,
    warnings: Vec<String>,
}

impl ConvexProgram {
    /// Starts a program from its risk matrix, which must be symmetric within
    /// 1e-12 (relative) and PSD within eigenvalue tolerance −1e-9.
    pub fn new(objective_q: DMatrix<f64>) -> Result<Self, ApproxError> {
        let n = objective_q.nrows();
        if objective_q.ncols() != n || n == 0 {
            return Err(ApproxError::InvalidObjective(format!(
                "objective must be square and non-empty, got {}x{}",
                n,
                objective_q.ncols()
            )));
        }
        let scale = objective_q.amax().max(1.0);
        for i in 0..n {
            for j in (i + 1)..n {
                if (objective_q[(i, j)] - objective_q[(j, i)]).abs() > 1e-12 * scale {
                    return Err(ApproxError::InvalidObjective(format!(
                        "not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let sym = objective_q.symmetric_part();
        let eig_min = min_eigenvalue(&sym);
        if eig_min < -1e-9 * scale {
            return Err(ApproxError::InvalidObjective(format!(
                "not positive semidefinite (min eigenvalue {eig_min:.3e})"
            )));
        }
        Ok(Self {
            objective_q: sym,
            linear_ineqs: Vec::new(),
            quad_ineqs: Vec::new(),
            warnings: Vec::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.objective_q.nrows()
    }

    pub fn add_linear(
        &mut self,
        a: DVector<f64>,
        b: f64,
        label: impl Into<String>,
    ) -> Result<(), ApproxError> {
        if a.len() != self.n() {
            return Err(ApproxError::DimensionMismatch(format!(
                "constraint vector length {} vs {} variables",
                a.len(),
                self.n()
            )));
        }
        self.linear_ineqs.push(LinearIneq {
            a,
            b,
            label: label.into(),
        });
        Ok(())
    }

    /// Adds a quadratic inequality after the convexity gate: H is symmetrized
    /// and rejected if its smallest eigenvalue is below −1e-8 (relative to
    /// the matrix scale).
    pub fn add_quadratic(
        &mut self,
        h: DMatrix<f64>,
        g: DVector<f64>,
        c: f64,
        label: impl Into<String>,
    ) -> Result<(), ApproxError> {
        let n = self.n();
        if h.nrows() != n || h.ncols() != n || g.len() != n {
            return Err(ApproxError::DimensionMismatch(format!(
                "quadratic constraint shaped {}x{} with g length {}, expected n = {n}",
                h.nrows(),
                h.ncols(),
                g.len()
            )));
        }
        let h = h.symmetric_part();
        let eig_min = min_eigenvalue(&h);
        if eig_min < -1e-8 * h.amax().max(1.0) {
            return Err(ApproxError::NonConvexSurrogate { eig_min });
        }
        self.quad_ineqs.push(QuadIneq {
            h,
            g,
            c,
            label: label.into(),
        });
        Ok(())
    }

    pub fn objective_q(&self) -> &DMatrix<f64> {
        &self.objective_q
    }

    pub fn linear_ineqs(&self) -> &[LinearIneq] {
        &self.linear_ineqs
    }

    pub fn quad_ineqs(&self) -> &[QuadIneq] {
        &self.quad_ineqs
    }

    /// Build-time notes (for example a bound-substitution regime warning);
    /// surfaced by the CLI, never fatal.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn push_warning(&mut self, w: impl Into<String>) {
        self.warnings.push(w.into());
    }

    pub fn objective_value(&self, x: &DVector<f64>) -> f64 {
        0.5 * (&self.objective_q * x).dot(x)
    }

    /// JSON rendering for inspection and cross-implementation diffing:
    /// matrices row-major, constraint labels included.
    pub fn to_json(&self) -> String {
        let row_major = |m: &DMatrix<f64>| -> Vec<f64> {
            (0..m.nrows())
                .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
                .map(|(i, j)| m[(i, j)])
                .collect()
        };
        let value = serde_json::json!({
            "n": self.n(),
            "objective_q": row_major(&self.objective_q),
            "linear_inequalities": self.linear_ineqs.iter().map(|lin| {
                serde_json::json!({
                    "a": lin.a.iter().copied().collect::<Vec<f64>>(),
                    "b": lin.b,
                    "label": lin.label,
                })
            }).collect::<Vec<_>>(),
            "quadratic_inequalities": self.quad_ineqs.iter().map(|quad| {
                serde_json::json!({
                    "h": row_major(&quad.h),
                    "g": quad.g.iter().copied().collect::<Vec<f64>>(),
                    "c": quad.c,
                    "label": quad.label,
                })
            }).collect::<Vec<_>>(),
            "warnings": self.warnings,
        });
        serde_json::to_string_pretty(&value).expect("program JSON is always serializable")
    }

    /// Largest violation across every stored constraint, the simplex equality
    /// included. Non-positive for feasible points (up to sign conventions of
    /// the equality, reported as |Σx − 1|).
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let mut worst = (x.sum() - 1.0).abs();
        for xi in x.iter() {
            worst = worst.max(-xi);
        }
        for lin in &self.linear_ineqs {
            worst = worst.max(lin.a.dot(x) - lin.b);
        }
        for quad in &self.quad_ineqs {
            worst = worst.max(quad.value(x));
        }
        worst
    }
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Nominal Markowitz program: minimize risk subject to `μ⁰ᵀx ≥ τ` and the
/// simplex.
pub fn build_nominal(moments: &MomentEstimates, tau: f64) -> Result<ConvexProgram, ApproxError> {
    let mut program = ConvexProgram::new(moments.sigma.clone())?;
    program.add_linear(-moments.mu0.clone(), -tau, "target-return")?;
    Ok(program)
}

/// Piecewise-linear surrogate: `μ_effᵀx ≥ τ + β` with the lower-side
/// effective mean. The always-true branch of the derivation (`E[0] ≤ 1−β`)
/// is dropped.
pub fn build_piecewise_linear(
    model: &UncertainReturnModel,
    moments: &MomentEstimates,
) -> Result<ConvexProgram, ApproxError> {
    require_finite_bounds(model)?;
    let mut program = ConvexProgram::new(moments.sigma.clone())?;
    let mu_eff = effective_mean_coefficients(model, BoundSide::Lower);
    program.add_linear(
        -mu_eff,
        -(model.tau + model.beta),
        "piecewise-linear-surrogate",
    )?;
    warn_on_negative_shifts(model, &mut program);
    Ok(program)
}

/// Bernstein (exponential) surrogate: `μ_effᵀx ≥ τ − ln(1−β)`, natural log.
pub fn build_bernstein(
    model: &UncertainReturnModel,
    moments: &MomentEstimates,
) -> Result<ConvexProgram, ApproxError> {
    require_finite_bounds(model)?;
    let mut program = ConvexProgram::new(moments.sigma.clone())?;
    let mu_eff = effective_mean_coefficients(model, BoundSide::Lower);
    program.add_linear(
        -mu_eff,
        -(model.tau - (1.0 - model.beta).ln()),
        "bernstein-surrogate",
    )?;
    warn_on_negative_shifts(model, &mut program);
    Ok(program)
}

/// Piecewise-quadratic surrogate. With `a = 1 + τ − μ⁰ᵀx` and factor
/// exposures `w_j = (μ⁽ʲ⁾)ᵀx`, the constraint is
///
/// ```txt
/// a² + Σ_j w_j²s_j² + (Σ_j w_j m_j^U)² − 2a(Σ_j w_j m_j^L) ≤ 1 − β
/// ```
///
/// expanded here into canonical `(H, g, c)`. The expansion is exact:
/// with `k = 1 + τ`, `u_L = Σ_j m_j^L μ⁽ʲ⁾`, `u_U = Σ_j m_j^U μ⁽ʲ⁾`,
///
/// ```txt
/// H/2 = μ⁰μ⁰ᵀ + Σ_j s_j²μ⁽ʲ⁾(μ⁽ʲ⁾)ᵀ + u_U u_Uᵀ + μ⁰u_Lᵀ + u_Lμ⁰ᵀ
/// g   = −2k(μ⁰ + u_L)
/// c   = k² − (1 − β)
/// ```
pub fn build_piecewise_quadratic(
    model: &UncertainReturnModel,
    moments: &MomentEstimates,
) -> Result<ConvexProgram, ApproxError> {
    require_finite_bounds(model)?;
    let std = model.family.std.as_ref().ok_or(ApproxError::MissingStd)?;
    if !model.family.independent {
        return Err(ApproxError::DependentPerturbations);
    }

    let n = model.n_assets();
    let mu0 = &model.mu0;
    let mut u_lower = DVector::zeros(n);
    let mut u_upper = DVector::zeros(n);
    let mut h_half = mu0 * mu0.transpose();
    for (j, shift) in model.shifts.vectors().iter().enumerate() {
        u_lower.axpy(model.family.mean_lower[j], shift, 1.0);
        u_upper.axpy(model.family.mean_upper[j], shift, 1.0);
        h_half.syger(std[j] * std[j], shift, shift, 1.0);
    }
    h_half.syger(1.0, &u_upper, &u_upper, 1.0);
    h_half.syger(1.0, mu0, &u_lower, 1.0);
    h_half.syger(1.0, &u_lower, mu0, 1.0);
    // syger fills only the lower triangle; mirror it before use
    h_half.fill_upper_triangle_with_lower_triangle();

    let k = 1.0 + model.tau;
    let g = (mu0 + &u_lower) * (-2.0 * k);
    let c = k * k - (1.0 - model.beta);

    let mut program = ConvexProgram::new(moments.sigma.clone())?;
    program.add_quadratic(2.0 * h_half, g, c, "piecewise-quadratic-surrogate")?;
    warn_on_negative_shifts(model, &mut program);
    Ok(program)
}

/// Direct (non-canonical) evaluation of the piecewise-quadratic surrogate
/// value at `x`; the canonical expansion must agree with this to 1e-10.
pub fn quadratic_surrogate_value(
    model: &UncertainReturnModel,
    x: &DVector<f64>,
) -> Result<f64, ApproxError> {
    let std = model.family.std.as_ref().ok_or(ApproxError::MissingStd)?;
    if x.len() != model.n_assets() {
        return Err(ApproxError::DimensionMismatch(format!(
            "x has length {}, expected {}",
            x.len(),
            model.n_assets()
        )));
    }
    let a = 1.0 + model.tau - model.mu0.dot(x);
    let w = model.factor_exposures(x);
    let var_term: f64 = (0..w.len()).map(|j| w[j] * w[j] * std[j] * std[j]).sum();
    let upper = w.dot(&model.family.mean_upper);
    let lower = w.dot(&model.family.mean_lower);
    Ok(a * a + var_term + upper * upper - 2.0 * a * lower - (1.0 - model.beta))
}

fn require_finite_bounds(model: &UncertainReturnModel) -> Result<(), ApproxError> {
    let finite = model.family.mean_lower.iter().all(|v| v.is_finite())
        && model.family.mean_upper.iter().all(|v| v.is_finite());
    if finite {
        Ok(())
    } else {
        Err(ApproxError::MissingMeanBounds)
    }
}

fn warn_on_negative_shifts(model: &UncertainReturnModel, program: &mut ConvexProgram) {
    let has_negative = model
        .shifts
        .vectors()
        .iter()
        .any(|s| s.iter().any(|&v| v < 0.0));
    if has_negative {
        program.push_warning(
            "some basic shift entries are negative; the fixed lower/upper bound substitution \
             in the surrogate is only a guaranteed worst case for non-negative shifts"
                .to_string(),
        );
    }
}

/// The three catalog generating functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GammaKind {
    PiecewiseLinear,
    Exponential,
    PiecewiseQuadratic,
}

/// A scalar generating function `γ` together with its catalog tag. The
/// verifier accepts any evaluator, so property violations of candidate
/// functions can be demonstrated too.
#[derive(Clone, Copy)]
pub struct GeneratingFunctionSpec {
    pub kind: GammaKind,
    pub evaluator: fn(f64) -> f64,
}

impl GeneratingFunctionSpec {
    pub fn catalog(kind: GammaKind) -> Self {
        let evaluator = match kind {
            GammaKind::PiecewiseLinear => gamma_piecewise_linear as fn(f64) -> f64,
            GammaKind::Exponential => gamma_exponential,
            GammaKind::PiecewiseQuadratic => gamma_piecewise_quadratic,
        };
        Self { kind, evaluator }
    }

    pub fn eval(&self, t: f64) -> f64 {
        (self.evaluator)(t)
    }
}

pub fn gamma_piecewise_linear(t: f64) -> f64 {
    (1.0 + t).max(0.0)
}

pub fn gamma_exponential(t: f64) -> f64 {
    t.exp()
}

pub fn gamma_piecewise_quadratic(t: f64) -> f64 {
    let u = (1.0 + t).max(0.0);
    u * u
}

/// Outcome of one property check; `first_violation` holds the smallest grid
/// point at which the property failed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropertyCheck {
    pub passed: bool,
    pub first_violation: Option<f64>,
}

impl PropertyCheck {
    fn pass() -> Self {
        Self {
            passed: true,
            first_violation: None,
        }
    }

    fn fail(at: f64) -> Self {
        Self {
            passed: false,
            first_violation: Some(at),
        }
    }
}

/// Per-property report of [`verify_generating_function`].
#[derive(Debug, Clone, PartialEq)]
pub struct GammaReport {
    pub non_negative: PropertyCheck,
    pub non_decreasing: PropertyCheck,
    pub convex: PropertyCheck,
    pub unit_at_zero: PropertyCheck,
    pub vanishes_at_minus_infinity: PropertyCheck,
    pub dominates_indicator: PropertyCheck,
}

impl GammaReport {
    pub fn all_pass(&self) -> bool {
        self.non_negative.passed
            && self.non_decreasing.passed
            && self.convex.passed
            && self.unit_at_zero.passed
            && self.vanishes_at_minus_infinity.passed
            && self.dominates_indicator.passed
    }
}

/// Checks the defining properties of a generating function on a uniform grid:
/// non-negativity, monotonicity, midpoint convexity (strides 1, 5, and 50),
/// `γ(0) ≥ 1`, decay at −∞ (evaluated at t = −10⁶), and domination of the
/// indicator `χ(t) = 1{t ≥ 0}`. The grid is widened to cover [−10, 10] if the
/// requested range does not.
pub fn verify_generating_function(
    spec: &GeneratingFunctionSpec,
    start: f64,
    end: f64,
    step: f64,
) -> GammaReport {
    let start = start.min(-10.0);
    let end = end.max(10.0);
    let step = step.abs().max(1e-6);
    let count = ((end - start) / step).ceil() as usize + 1;
    let ts: Vec<f64> = (0..count).map(|i| start + i as f64 * step).collect();
    let vals: Vec<f64> = ts.iter().map(|&t| spec.eval(t)).collect();
    let scale = vals.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-9 * scale;

    let mut non_negative = PropertyCheck::pass();
    for (&t, &v) in ts.iter().zip(&vals) {
        if v < -tol {
            non_negative = PropertyCheck::fail(t);
            break;
        }
    }

    let mut non_decreasing = PropertyCheck::pass();
    for i in 1..ts.len() {
        if vals[i] < vals[i - 1] - tol {
            non_decreasing = PropertyCheck::fail(ts[i]);
            break;
        }
    }

    let mut convex = PropertyCheck::pass();
    'outer: for stride in [1usize, 5, 50] {
        for i in stride..ts.len().saturating_sub(stride) {
            let mid = vals[i];
            let chord = 0.5 * (vals[i - stride] + vals[i + stride]);
            if mid > chord + tol {
                convex = PropertyCheck::fail(ts[i]);
                break 'outer;
            }
        }
    }

    let unit_at_zero = if spec.eval(0.0) >= 1.0 - 1e-12 {
        PropertyCheck::pass()
    } else {
        PropertyCheck::fail(0.0)
    };

    let far_left = -1e6;
    let vanishes_at_minus_infinity = if spec.eval(far_left).abs() <= 1e-9 {
        PropertyCheck::pass()
    } else {
        PropertyCheck::fail(far_left)
    };

    let mut dominates_indicator = PropertyCheck::pass();
    for (&t, &v) in ts.iter().zip(&vals) {
        let indicator = if t >= 0.0 { 1.0 } else { 0.0 };
        if v < indicator - tol {
            dominates_indicator = PropertyCheck::fail(t);
            break;
        }
    }

    GammaReport {
        non_negative,
        non_decreasing,
        convex,
        unit_at_zero,
        vanishes_at_minus_infinity,
        dominates_indicator,
    }
}
