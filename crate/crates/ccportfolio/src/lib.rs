//! Ambiguous chance-constrained Markowitz portfolio selection via safe convex
//! approximations.
//!
//! The chance constraint `Prob{μ(ζ)ᵀx ≥ τ} ≥ β`, required to hold for every
//! perturbation distribution in a moment-described family, is replaced by one
//! of three deterministic surrogates derived from generating functions:
//!
//! * piecewise-linear `γ(t) = [1+t]₊` → a linear constraint, solved as a QP;
//! * exponential (Bernstein) `γ(t) = eᵗ` → a linear constraint with a
//!   logarithmic right-hand side, solved as a QP;
//! * piecewise-quadratic `γ(t) = ([1+t]₊)²` → a convex quadratic constraint,
//!   solved as a QCQP.
//!
//! Every surrogate feasible point satisfies the original chance constraint, so
//! minimizing the portfolio risk `½xᵀΣx` over the surrogate set gives a
//! conservative (safe) allocation. The crate bundles:
//!
//! * [`market_data`] — price ingestion and moment estimation (μ⁰, Σ);
//! * [`uncertainty`] — the uncertain-mean structure `μ(ζ) = μ⁰ + Σ_j ζ_j μ⁽ʲ⁾`
//!   and the ambiguity family (mean bounds, optional standard deviations);
//! * [`approximation`] — canonical convex programs for the nominal model and
//!   the three surrogates, plus generating-function verification;
//! * [`solver`] — a deterministic log-barrier interior-point method over the
//!   simplex with KKT certificates and explicit infeasibility detection;
//! * [`frontier`] — τ sweeps and CSV/JSON/SVG emission of efficient frontiers;
//! * [`validator`] — Monte Carlo estimation of the satisfaction probability
//!   under sampled members of the family;
//! * [`cli`] — the `ccportfolio` command-line front end.

pub mod approximation;
pub mod cli;
pub mod frontier;
pub mod market_data;
pub mod solver;
pub mod uncertainty;
pub mod validator;
