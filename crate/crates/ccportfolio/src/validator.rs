//! Monte Carlo check of the safety claim: estimate the probability that a
//! candidate portfolio meets its target return under sampled members of the
//! perturbation family, and compare the empirical satisfaction frequency
//! against the required confidence level β.
//!
//! The validator reports evidence, not proofs. Verdicts use Wilson score
//! intervals, which stay honest in the probability-near-one regime this
//! problem lives in.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::uncertainty::{PerturbationFamily, UncertainReturnModel};

#[derive(Debug, Error)]
pub enum ValidatorError {
    #[error("distribution mean escapes the family bounds at component {component}: {mean}")]
    InvalidDistribution { component: usize, mean: f64 },
    #[error("distribution std disagrees with the family std at component {component}")]
    StdMismatch { component: usize },
    #[error("candidate weights are not on the simplex: {0}")]
    OffSimplex(String),
    #[error("sample count must be at least 1")]
    EmptySample,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("rejection sampling stalled for component {0}")]
    SamplingStalled(usize),
}

/// A concrete member of the perturbation family, sampled componentwise
/// independently.
#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioDistribution {
    /// Deterministic perturbation ζ = mean.
    PointMass { mean: DVector<f64> },
    /// Componentwise uniform on `[lower, upper]`.
    Uniform {
        lower: DVector<f64>,
        upper: DVector<f64>,
    },
    /// Componentwise normal with the given center and std, truncated to
    /// `[lower, upper]` by rejection.
    TruncatedNormal {
        center: DVector<f64>,
        std: DVector<f64>,
        lower: DVector<f64>,
        upper: DVector<f64>,
    },
}

impl ScenarioDistribution {
    pub fn label(&self) -> String {
        let list = |v: &DVector<f64>| format!("{:?}", v.iter().copied().collect::<Vec<f64>>());
        match self {
            Self::PointMass { mean } => format!("point_mass{}", list(mean)),
            Self::Uniform { lower, upper } => format!("uniform[{} .. {}]", list(lower), list(upper)),
            Self::TruncatedNormal { center, std, .. } => {
                format!("truncated_normal[center={}, std={}]", list(center), list(std))
            }
        }
    }

    fn factor_count(&self) -> usize {
        match self {
            Self::PointMass { mean } => mean.len(),
            Self::Uniform { lower, .. } => lower.len(),
            Self::TruncatedNormal { center, .. } => center.len(),
        }
    }

    /// Verifies the family-membership invariants: componentwise means inside
    /// `[m^L, m^U]` (analytically for point masses and uniforms, by numeric
    /// integration within 1e-6 for truncated normals) and, when the family
    /// carries stds, matching truncation stds.
    pub fn check_against(&self, family: &PerturbationFamily) -> Result<(), ValidatorError> {
        let l = family.mean_lower.len();
        if self.factor_count() != l {
            return Err(ValidatorError::DimensionMismatch(format!(
                "distribution has {} components, family has {l}",
                self.factor_count()
            )));
        }
        let in_bounds = |j: usize, mean: f64, tol: f64| -> Result<(), ValidatorError> {
            if mean < family.mean_lower[j] - tol || mean > family.mean_upper[j] + tol {
                Err(ValidatorError::InvalidDistribution { component: j, mean })
            } else {
                Ok(())
            }
        };
        match self {
            Self::PointMass { mean } => {
                for j in 0..l {
                    in_bounds(j, mean[j], 1e-12)?;
                }
            }
            Self::Uniform { lower, upper } => {
                for j in 0..l {
                    if lower[j] > upper[j] {
                        return Err(ValidatorError::InvalidDistribution {
                            component: j,
                            mean: f64::NAN,
                        });
                    }
                    in_bounds(j, 0.5 * (lower[j] + upper[j]), 1e-12)?;
                }
            }
            Self::TruncatedNormal {
                center,
                std,
                lower,
                upper,
            } => {
                for j in 0..l {
                    if lower[j] > upper[j] || std[j] < 0.0 {
                        return Err(ValidatorError::InvalidDistribution {
                            component: j,
                            mean: f64::NAN,
                        });
                    }
                    let (mean, _) = truncated_moments(center[j], std[j], lower[j], upper[j]);
                    in_bounds(j, mean, 1e-6)?;
                    if let Some(s) = &family.std {
                        if (std[j] - s[j]).abs() > 1e-9 {
                            return Err(ValidatorError::StdMismatch { component: j });
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Composite Simpson rule on a uniform grid (n must be even).
fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / n as f64;
    let mut acc = f(lo) + f(hi);
    for i in 1..n {
        acc += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

/// Post-truncation mean and std of a normal restricted to `[lo, hi]`,
/// computed by numeric integration (no special-function dependency).
pub fn truncated_moments(center: f64, std: f64, lo: f64, hi: f64) -> (f64, f64) {
    if std <= 0.0 {
        return (center.clamp(lo, hi), 0.0);
    }
    let weight = |t: f64| (-0.5 * ((t - center) / std).powi(2)).exp();
    let n = 2000;
    let z = simpson(weight, lo, hi, n);
    let m1 = simpson(|t| t * weight(t), lo, hi, n) / z;
    let m2 = simpson(|t| t * t * weight(t), lo, hi, n) / z;
    (m1, (m2 - m1 * m1).max(0.0).sqrt())
}

/// The default evidence suite: point masses at every box vertex, the uniform
/// distribution over the box, and (when the family carries stds) truncated
/// normals centered at each mean bound. Vertex count is 2^L; intended for
/// small factor counts.
pub fn default_suite(model: &UncertainReturnModel) -> Vec<ScenarioDistribution> {
    let family = &model.family;
    let l = model.factor_count();
    let mut suite = Vec::new();
    for v in 0..(1usize << l) {
        let mean = DVector::from_fn(l, |j, _| {
            if (v >> j) & 1 == 0 {
                family.mean_lower[j]
            } else {
                family.mean_upper[j]
            }
        });
        suite.push(ScenarioDistribution::PointMass { mean });
    }
    suite.push(ScenarioDistribution::Uniform {
        lower: family.mean_lower.clone(),
        upper: family.mean_upper.clone(),
    });
    if let Some(std) = &family.std {
        for center in [&family.mean_lower, &family.mean_upper] {
            suite.push(ScenarioDistribution::TruncatedNormal {
                center: center.clone(),
                std: std.clone(),
                lower: family.mean_lower.clone(),
                upper: family.mean_upper.clone(),
            });
        }
    }
    suite
}

/// Stream of per-distribution RNG seeds; each distribution gets its own
/// generator so reordering the suite cannot change individual results.
fn derived_seed(seed: u64, index: u64) -> u64 {
    seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Draws `count` independent ζ vectors. Deterministic for a fixed seed; the
/// distribution is validated against the family bounds first.
pub fn sample_scenarios(
    dist: &ScenarioDistribution,
    family: &PerturbationFamily,
    count: usize,
    seed: u64,
) -> Result<Vec<DVector<f64>>, ValidatorError> {
    if count == 0 {
        return Err(ValidatorError::EmptySample);
    }
    dist.check_against(family)?;
    let l = dist.factor_count();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut draws = Vec::with_capacity(count);
    match dist {
        ScenarioDistribution::PointMass { mean } => {
            for _ in 0..count {
                draws.push(mean.clone());
            }
        }
        ScenarioDistribution::Uniform { lower, upper } => {
            for _ in 0..count {
                draws.push(DVector::from_fn(l, |j, _| {
                    lower[j] + (upper[j] - lower[j]) * rng.random::<f64>()
                }));
            }
        }
        ScenarioDistribution::TruncatedNormal {
            center,
            std,
            lower,
            upper,
        } => {
            let normals: Vec<Option<Normal<f64>>> = (0..l)
                .map(|j| {
                    if std[j] > 0.0 {
                        Some(Normal::new(center[j], std[j]).expect("validated std"))
                    } else {
                        None
                    }
                })
                .collect();
            for _ in 0..count {
                let mut zeta = DVector::zeros(l);
                for j in 0..l {
                    zeta[j] = match &normals[j] {
                        None => center[j].clamp(lower[j], upper[j]),
                        Some(normal) => {
                            let mut accepted = None;
                            for _ in 0..100_000 {
                                let draw = normal.sample(&mut rng);
                                if draw >= lower[j] && draw <= upper[j] {
                                    accepted = Some(draw);
                                    break;
                                }
                            }
                            accepted.ok_or(ValidatorError::SamplingStalled(j))?
                        }
                    };
                }
                draws.push(zeta);
            }
        }
    }
    Ok(draws)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub distribution: String,
    pub probability: f64,
    pub successes: u64,
    pub count: u64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub half_width: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub x: Vec<f64>,
    pub tau: f64,
    pub beta: f64,
    pub count: u64,
    pub seed: u64,
    pub entries: Vec<ReportEntry>,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.verdict == Verdict::Pass)
    }
}

/// 95% Wilson score interval for `successes` out of `count`.
fn wilson_interval(successes: u64, count: u64) -> (f64, f64) {
    let z = 1.959964;
    let n = count as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Estimates `Prob{μ(ζ)ᵀx ≥ τ}` under every given distribution. Verdicts:
/// `pass` when the Wilson lower bound reaches β, `fail` when the upper bound
/// misses β, `inconclusive` otherwise.
pub fn validate(
    x: &DVector<f64>,
    model: &UncertainReturnModel,
    dists: &[ScenarioDistribution],
    count: usize,
    seed: u64,
) -> Result<ValidationReport, ValidatorError> {
    if count == 0 {
        return Err(ValidatorError::EmptySample);
    }
    if x.len() != model.n_assets() {
        return Err(ValidatorError::DimensionMismatch(format!(
            "{} weights for {} assets",
            x.len(),
            model.n_assets()
        )));
    }
    if (x.sum() - 1.0).abs() > 1e-8 || x.iter().any(|&v| v < -1e-8) {
        return Err(ValidatorError::OffSimplex(format!(
            "sum {} min {}",
            x.sum(),
            x.iter().copied().fold(f64::INFINITY, f64::min)
        )));
    }

    let base = model.mu0.dot(x);
    let exposures = model.factor_exposures(x);
    let mut entries = Vec::with_capacity(dists.len());
    for (index, dist) in dists.iter().enumerate() {
        let draws = sample_scenarios(dist, &model.family, count, derived_seed(seed, index as u64))?;
        let successes = draws
            .iter()
            .filter(|zeta| base + exposures.dot(zeta) >= model.tau)
            .count() as u64;
        let probability = successes as f64 / count as f64;
        let (ci_lower, ci_upper) = wilson_interval(successes, count as u64);
        let verdict = if ci_lower >= model.beta {
            Verdict::Pass
        } else if ci_upper < model.beta {
            Verdict::Fail
        } else {
            Verdict::Inconclusive
        };
        entries.push(ReportEntry {
            distribution: dist.label(),
            probability,
            successes,
            count: count as u64,
            ci_lower,
            ci_upper,
            half_width: 0.5 * (ci_upper - ci_lower),
            verdict,
        });
    }
    Ok(ValidationReport {
        x: x.iter().copied().collect(),
        tau: model.tau,
        beta: model.beta,
        count: count as u64,
        seed,
        entries,
    })
}

pub fn report_to_json(report: &ValidationReport) -> String {
    let mut text =
        serde_json::to_string_pretty(report).expect("reports are always serializable");
    text.push('\n');
    text
}

/// Fixed-width text rendering for terminals.
pub fn report_to_text(report: &ValidationReport) -> String {
    use std::fmt::Write as _;
    let width = report
        .entries
        .iter()
        .map(|e| e.distribution.len())
        .max()
        .unwrap_or(12)
        .max(12);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "satisfaction of target {} at confidence {} ({} draws per distribution, seed {})",
        report.tau, report.beta, report.count, report.seed
    );
    let _ = writeln!(
        out,
        "{:<width$}  {:>11}  {:>9}  {:>9}  verdict",
        "distribution", "probability", "ci_lower", "ci_upper"
    );
    for e in &report.entries {
        let _ = writeln!(
            out,
            "{:<width$}  {:>11.6}  {:>9.6}  {:>9.6}  {}",
            e.distribution, e.probability, e.ci_lower, e.ci_upper, e.verdict
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approximation::{
        build_bernstein, build_nominal, build_piecewise_linear, build_piecewise_quadratic,
    };
    use crate::market_data::MomentEstimates;
    use crate::solver::{solve, SolveOptions};
    use crate::uncertainty::{BasicShifts, PerturbationFamily, UncertainReturnModel};
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    fn nifty_moments() -> MomentEstimates {
        MomentEstimates::new(
            vec!["bank".into(), "pharma".into(), "it".into()],
            DVector::from_vec(vec![2.609, -1.430, 6.329]),
            DMatrix::from_row_slice(
                3,
                3,
                &[
                    24.126, -1.460, 11.032, //
                    -1.460, 8.237, 0.461, //
                    11.032, 0.461, 18.034,
                ],
            ),
        )
        .unwrap()
    }

    fn nifty_model(tau: f64) -> UncertainReturnModel {
        UncertainReturnModel::new(
            DVector::from_vec(vec![2.609, -1.430, 6.329]),
            BasicShifts::diagonal(&[0.2, 0.1, 0.3]).unwrap(),
            PerturbationFamily::new(
                DVector::from_vec(vec![-0.3, -0.2, -0.1]),
                DVector::from_vec(vec![0.3, 0.2, 0.1]),
                Some(DVector::from_vec(vec![0.1, 0.1, 0.1])),
            )
            .unwrap(),
            0.95,
            tau,
        )
        .unwrap()
    }

    #[test]
    fn point_mass_at_the_lower_vertex_is_deterministically_safe() {
        let model = nifty_model(1.5);
        let x = DVector::from_vec(vec![0.0979, 0.4493, 0.4528]);
        let dist = ScenarioDistribution::PointMass {
            mean: model.family.mean_lower.clone(),
        };
        let report = validate(&x, &model, &[dist], 100, 7).unwrap();
        assert_eq!(report.entries[0].probability, 1.0);
        assert_eq!(report.entries[0].successes, 100);
    }

    #[test]
    fn nominal_solution_fails_under_the_adverse_vertex() {
        let model = nifty_model(3.3);
        let program = build_nominal(&nifty_moments(), 3.3).unwrap();
        let x = solve(&program, &SolveOptions::default()).x_vector().unwrap();
        let dist = ScenarioDistribution::PointMass {
            mean: model.family.mean_lower.clone(),
        };
        let report = validate(&x, &model, &[dist], 100, 7).unwrap();
        assert_eq!(report.entries[0].probability, 0.0);
        assert_eq!(report.entries[0].verdict, Verdict::Fail);
    }

    #[test]
    fn vacuous_threshold_is_always_satisfied() {
        let model = nifty_model(-1e6);
        let x = DVector::from_vec(vec![0.2, 0.3, 0.5]);
        let report = validate(&x, &model, &default_suite(&model), 200, 42).unwrap();
        for entry in &report.entries {
            assert_eq!(entry.probability, 1.0);
        }
    }

    #[test]
    fn uniform_sample_mean_obeys_the_clt_bound() {
        let model = nifty_model(1.5);
        let dist = ScenarioDistribution::Uniform {
            lower: model.family.mean_lower.clone(),
            upper: model.family.mean_upper.clone(),
        };
        let draws = sample_scenarios(&dist, &model.family, 1_000_000, 12345).unwrap();
        let mean: f64 = draws.iter().map(|z| z[0]).sum::<f64>() / draws.len() as f64;
        // std of U(−0.3, 0.3) is 0.6/√12; allow three standard errors
        let bound = 3.0 * (0.6 / 12f64.sqrt()) / 1000.0;
        assert!(mean.abs() <= bound, "mean {mean}, bound {bound}");
    }

    #[test]
    fn truncated_normal_std_matches_the_integration_oracle() {
        let model = nifty_model(1.5);
        let dist = ScenarioDistribution::TruncatedNormal {
            center: model.family.mean_upper.clone(),
            std: model.family.std.clone().unwrap(),
            lower: model.family.mean_lower.clone(),
            upper: model.family.mean_upper.clone(),
        };
        let draws = sample_scenarios(&dist, &model.family, 100_000, 99).unwrap();
        let samples: Vec<f64> = draws.iter().map(|z| z[0]).collect();
        let mean: f64 = samples.iter().sum::<f64>() / samples.len() as f64;
        let var: f64 =
            samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / samples.len() as f64;
        let (oracle_mean, oracle_std) = truncated_moments(0.3, 0.1, -0.3, 0.3);
        assert!((var.sqrt() - oracle_std).abs() <= 0.02 * oracle_std);
        assert!((mean - oracle_mean).abs() <= 0.02 * oracle_std);
    }

    #[test]
    fn symmetric_truncation_has_zero_mean_and_reduced_std() {
        let (mean, std) = truncated_moments(0.0, 0.1, -0.3, 0.3);
        assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-12);
        // analytic: σ√(1 − 6φ(3)/(2Φ(3)−1)) = 0.0986578392…
        assert_abs_diff_eq!(std, 0.0986578392, epsilon = 1e-7);
    }

    #[test]
    fn out_of_bounds_point_mass_is_rejected() {
        let model = nifty_model(1.5);
        let dist = ScenarioDistribution::PointMass {
            mean: DVector::from_vec(vec![0.4, 0.0, 0.0]),
        };
        assert!(matches!(
            sample_scenarios(&dist, &model.family, 10, 1),
            Err(ValidatorError::InvalidDistribution { component: 0, .. })
        ));
    }

    #[test]
    fn mismatched_truncation_std_is_rejected() {
        let model = nifty_model(1.5);
        let dist = ScenarioDistribution::TruncatedNormal {
            center: DVector::zeros(3),
            std: DVector::from_vec(vec![0.2, 0.1, 0.1]),
            lower: model.family.mean_lower.clone(),
            upper: model.family.mean_upper.clone(),
        };
        assert!(matches!(
            dist.check_against(&model.family),
            Err(ValidatorError::StdMismatch { component: 0 })
        ));
    }

    #[test]
    fn off_simplex_candidates_are_rejected() {
        let model = nifty_model(1.5);
        let x = DVector::from_vec(vec![0.5, 0.6, 0.1]);
        assert!(matches!(
            validate(&x, &model, &default_suite(&model), 10, 1),
            Err(ValidatorError::OffSimplex(_))
        ));
    }

    #[test]
    fn reports_are_seed_deterministic() {
        let model = nifty_model(2.5);
        let x = DVector::from_vec(vec![0.054, 0.3415, 0.6045]);
        let suite = default_suite(&model);
        let a = validate(&x, &model, &suite, 5000, 42).unwrap();
        let b = validate(&x, &model, &suite, 5000, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn default_suite_enumerates_vertices_and_tails() {
        let model = nifty_model(1.5);
        let suite = default_suite(&model);
        // 8 vertices + uniform + two truncated normals
        assert_eq!(suite.len(), 11);
        let point_masses = suite
            .iter()
            .filter(|d| matches!(d, ScenarioDistribution::PointMass { .. }))
            .count();
        assert_eq!(point_masses, 8);
    }

    #[test]
    fn wilson_interval_behaves_at_the_edges() {
        let (lo, hi) = wilson_interval(10_000, 10_000);
        assert!(hi <= 1.0 && lo < 1.0 && lo > 0.999);
        let (lo, hi) = wilson_interval(0, 10_000);
        assert!(lo >= 0.0 && hi > 0.0 && hi < 0.001);
    }

    #[test]
    fn wilson_interval_is_calibrated_on_a_known_bernoulli_stream() {
        let p = 0.95;
        let mut rng = ChaCha12Rng::seed_from_u64(2024);
        let mut covered = 0;
        let reps = 1000;
        for _ in 0..reps {
            let successes = (0..10_000).filter(|_| rng.random::<f64>() < p).count() as u64;
            let (lo, hi) = wilson_interval(successes, 10_000);
            if lo <= p && p <= hi {
                covered += 1;
            }
        }
        let coverage = covered as f64 / reps as f64;
        assert!(coverage >= 0.93, "coverage {coverage}");
    }

    #[test]
    fn robust_solutions_pass_every_vertex_point_mass() {
        let model = nifty_model(1.5);
        let program = build_piecewise_linear(&model, &nifty_moments()).unwrap();
        let x = solve(&program, &SolveOptions::default()).x_vector().unwrap();
        let vertices: Vec<ScenarioDistribution> = default_suite(&model)
            .into_iter()
            .filter(|d| matches!(d, ScenarioDistribution::PointMass { .. }))
            .collect();
        let report = validate(&x, &model, &vertices, 10, 3).unwrap();
        for entry in &report.entries {
            assert_eq!(entry.probability, 1.0, "{}", entry.distribution);
        }
    }

    #[test]
    fn bernstein_solution_passes_the_truncated_normal_suite() {
        let model = nifty_model(2.5);
        let program = build_bernstein(&model, &nifty_moments()).unwrap();
        let x = solve(&program, &SolveOptions::default()).x_vector().unwrap();
        let tails: Vec<ScenarioDistribution> = default_suite(&model)
            .into_iter()
            .filter(|d| matches!(d, ScenarioDistribution::TruncatedNormal { .. }))
            .collect();
        let report = validate(&x, &model, &tails, 20_000, 42).unwrap();
        for entry in &report.entries {
            assert!(entry.ci_lower >= model.beta, "{entry:?}");
        }
    }

    /// Surrogate feasibility must imply empirical safety: for every suite
    /// distribution, the sampled mean of γ(τ − return) stays below 1 − β
    /// within three standard errors.
    #[test]
    fn surrogate_safety_is_empirically_sufficient() {
        let moments = nifty_moments();
        let model = nifty_model(1.9);
        type Gamma = fn(f64) -> f64;
        let gammas: [(&str, Gamma); 3] = [
            ("piecewise_linear", crate::approximation::gamma_piecewise_linear),
            ("bernstein", crate::approximation::gamma_exponential),
            (
                "piecewise_quadratic",
                crate::approximation::gamma_piecewise_quadratic,
            ),
        ];
        for (kind, gamma) in gammas {
            let program = match kind {
                "piecewise_linear" => build_piecewise_linear(&model, &moments).unwrap(),
                "bernstein" => build_bernstein(&model, &moments).unwrap(),
                _ => build_piecewise_quadratic(&model, &moments).unwrap(),
            };
            let x = solve(&program, &SolveOptions::default()).x_vector().unwrap();
            let base = model.mu0.dot(&x);
            let exposures = model.factor_exposures(&x);
            for (index, dist) in default_suite(&model).iter().enumerate() {
                let draws =
                    sample_scenarios(dist, &model.family, 50_000, derived_seed(11, index as u64))
                        .unwrap();
                let values: Vec<f64> = draws
                    .iter()
                    .map(|zeta| gamma(model.tau - (base + exposures.dot(zeta))))
                    .collect();
                let mean: f64 = values.iter().sum::<f64>() / values.len() as f64;
                let var: f64 = values
                    .iter()
                    .map(|v| (v - mean) * (v - mean))
                    .sum::<f64>()
                    / values.len() as f64;
                let se = (var / values.len() as f64).sqrt();
                assert!(
                    mean <= (1.0 - model.beta) + 3.0 * se + 1e-9,
                    "{kind} under {}: mean {mean}, se {se}",
                    dist.label()
                );
            }
        }
    }

    #[test]
    fn text_report_lines_up_and_names_verdicts() {
        let model = nifty_model(1.5);
        let x = DVector::from_vec(vec![0.0979, 0.4493, 0.4528]);
        let report = validate(&x, &model, &default_suite(&model), 1000, 42).unwrap();
        let text = report_to_text(&report);
        assert!(text.contains("distribution"));
        assert!(text.contains("pass"));
        let json = report_to_json(&report);
        let back: ValidationReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
    }
}
