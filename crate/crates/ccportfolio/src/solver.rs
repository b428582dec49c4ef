//! Deterministic interior-point solver for simplex-constrained QP/QCQP.
//!
//! The programs built by the approximation module share one shape: minimize
//! `½xᵀQx` over the simplex plus a handful of convex inequalities. This
//! module solves them with a primal log-barrier method: the budget equality
//! `Σx = 1` is eliminated through an orthonormal null-space basis, Newton
//! steps with an exact (bisection) line search follow the central path, and
//! a final active-set polish sharpens the barrier point to machine-precision
//! KKT residuals. A feasibility phase with an auxiliary infeasibility
//! variable certifies infeasible programs instead of timing out, and a
//! brute-force grid oracle over the simplex is included for cross-checking
//! the solver on small instances.
//!
//! Everything is deterministic: fixed iteration schedules, no randomized
//! pivoting, no warm starts.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::approximation::ConvexProgram;

/// Tolerances and budgets for [`solve`]. The defaults are tuned for the
/// bundled three-asset problems but are deliberately conservative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Acceptable KKT residual for an `Optimal` verdict.
    pub tol_kkt: f64,
    /// Acceptable primal feasibility residual.
    pub tol_feas: f64,
    /// Total Newton-step budget across both phases.
    pub max_iterations: usize,
    /// Multiplicative barrier-parameter reduction per outer iteration,
    /// in (0, 1).
    pub barrier_mu_reduction: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol_kkt: 1e-8,
            tol_feas: 1e-9,
            max_iterations: 200,
            barrier_mu_reduction: 0.2,
        }
    }
}

impl SolveOptions {
    /// Clamps every field into its valid range so that `solve` never has to
    /// fail on malformed options.
    fn sanitized(self) -> Self {
        Self {
            tol_kkt: if self.tol_kkt > 0.0 { self.tol_kkt } else { 1e-8 },
            tol_feas: if self.tol_feas > 0.0 {
                self.tol_feas
            } else {
                1e-9
            },
            max_iterations: self.max_iterations.max(1),
            barrier_mu_reduction: if self.barrier_mu_reduction > 0.0
                && self.barrier_mu_reduction < 1.0
            {
                self.barrier_mu_reduction
            } else {
                0.2
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Optimal,
    Infeasible,
    MaxIter,
    NonconvexRejected,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Status::Optimal => "optimal",
            Status::Infeasible => "infeasible",
            Status::MaxIter => "max_iter",
            Status::NonconvexRejected => "nonconvex_rejected",
        })
    }
}

/// Solver verdict. For `Optimal` the certificates hold: the simplex within
/// `tol_feas`, every inequality within `tol_feas`, and `kkt_residual ≤
/// tol_kkt`. For `Infeasible` the `violation` field carries the minimized
/// maximal constraint violation (the separating evidence) and `x` the point
/// attaining it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub status: Status,
    pub x: Option<Vec<f64>>,
    pub objective: Option<f64>,
    pub kkt_residual: Option<f64>,
    pub active_constraints: Vec<String>,
    pub violation: Option<f64>,
}

impl Solution {
    pub fn x_vector(&self) -> Option<DVector<f64>> {
        self.x.as_ref().map(|x| DVector::from_vec(x.clone()))
    }

    fn rejected(violation: f64, x: DVector<f64>) -> Self {
        Self {
            status: Status::Infeasible,
            x: Some(x.iter().copied().collect()),
            objective: None,
            kkt_residual: None,
            active_constraints: Vec::new(),
            violation: Some(violation),
        }
    }

    /// Verdict for programs whose surrogate failed the convexity gate; no
    /// point or certificate accompanies it.
    pub fn nonconvex_rejected() -> Self {
        Self {
            status: Status::NonconvexRejected,
            x: None,
            objective: None,
            kkt_residual: None,
            active_constraints: Vec::new(),
            violation: None,
        }
    }
}

/// Lagrange multipliers in the canonical x-space ordering: one per stored
/// linear inequality, one per quadratic inequality, one per non-negativity
/// bound, and the free equality multiplier.
#[derive(Debug, Clone, PartialEq)]
pub struct Multipliers {
    pub linear: Vec<f64>,
    pub quadratic: Vec<f64>,
    pub bounds: Vec<f64>,
    pub equality: f64,
}

/// Outcome of the stand-alone feasibility phase.
#[derive(Debug, Clone, PartialEq)]
pub enum FeasibilityOutcome {
    /// A strictly interior point (simplex exact, every inequality slack by
    /// `margin`).
    Feasible { x0: DVector<f64>, margin: f64 },
    /// The minimized maximal violation, still positive, and the point
    /// attaining it.
    Infeasible { violation: f64, x: DVector<f64> },
}

/// Orthonormal basis of the zero-sum subspace (Helmert columns), so that
/// `x = x̂ + Zy` ranges over the affine set `Σx = 1` as `y` ranges over
/// `R^{n−1}`.
struct NullSpace {
    z: DMatrix<f64>,
    x_hat: DVector<f64>,
}

impl NullSpace {
    fn new(n: usize) -> Self {
        let mut z = DMatrix::zeros(n, n - 1);
        for k in 1..n {
            let denom = (k as f64 * (k as f64 + 1.0)).sqrt();
            for i in 0..k {
                z[(i, k - 1)] = 1.0 / denom;
            }
            z[(k, k - 1)] = -(k as f64) / denom;
        }
        Self {
            z,
            x_hat: DVector::from_element(n, 1.0 / n as f64),
        }
    }

    fn to_x(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.x_hat + &self.z * y
    }
}

/// A smooth convex inequality `c(v) ≤ 0` over the solver's working
/// variables.
#[derive(Debug, Clone)]
enum Smooth {
    /// `aᵀv − b ≤ 0`
    Linear { a: DVector<f64>, b: f64 },
    /// `½vᵀHv + gᵀv + c ≤ 0`
    Quadratic {
        h: DMatrix<f64>,
        g: DVector<f64>,
        c: f64,
    },
}

impl Smooth {
    fn value(&self, v: &DVector<f64>) -> f64 {
        match self {
            Smooth::Linear { a, b } => a.dot(v) - b,
            Smooth::Quadratic { h, g, c } => 0.5 * (h * v).dot(v) + g.dot(v) + c,
        }
    }

    fn gradient(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Smooth::Linear { a, .. } => a.clone(),
            Smooth::Quadratic { h, g, .. } => h * v + g,
        }
    }

    fn add_hessian(&self, into: &mut DMatrix<f64>, weight: f64) {
        if let Smooth::Quadratic { h, .. } = self {
            *into += h * weight;
        }
    }

    /// Largest step along `dir` that keeps the constraint strictly
    /// satisfied, assuming `value(v) < 0`. Infinite when the direction never
    /// crosses the boundary.
    fn max_step(&self, v: &DVector<f64>, dir: &DVector<f64>) -> f64 {
        match self {
            Smooth::Linear { a, .. } => {
                let slope = a.dot(dir);
                if slope <= 0.0 {
                    f64::INFINITY
                } else {
                    -self.value(v) / slope
                }
            }
            Smooth::Quadratic { h, g, .. } => {
                let quad = 0.5 * (h * dir).dot(dir);
                let slope = (h * v + g).dot(dir);
                let val = self.value(v);
                if quad <= 1e-300 {
                    if slope <= 0.0 {
                        f64::INFINITY
                    } else {
                        -val / slope
                    }
                } else {
                    // positive root of quad·α² + slope·α + val = 0 (val < 0)
                    let disc = (slope * slope - 4.0 * quad * val).sqrt();
                    (-slope + disc) / (2.0 * quad)
                }
            }
        }
    }

    /// Embeds the constraint into a space with one extra trailing variable,
    /// with coefficient `t_coeff` on it (used by the feasibility phase).
    fn extended(&self, t_coeff: f64) -> Smooth {
        match self {
            Smooth::Linear { a, b } => {
                let mut a2 = DVector::zeros(a.len() + 1);
                a2.rows_mut(0, a.len()).copy_from(a);
                a2[a.len()] = t_coeff;
                Smooth::Linear { a: a2, b: *b }
            }
            Smooth::Quadratic { h, g, c } => {
                let d = g.len();
                let mut h2 = DMatrix::zeros(d + 1, d + 1);
                h2.view_mut((0, 0), (d, d)).copy_from(h);
                let mut g2 = DVector::zeros(d + 1);
                g2.rows_mut(0, d).copy_from(g);
                g2[d] = t_coeff;
                Smooth::Quadratic {
                    h: h2,
                    g: g2,
                    c: *c,
                }
            }
        }
    }
}

/// `minimize ½vᵀPv + qᵀv − μ Σ log(−cᵢ(v))` data bundle.
struct Barrier<'a> {
    p: &'a DMatrix<f64>,
    q: &'a DVector<f64>,
    cons: &'a [Smooth],
}

enum BarrierStop {
    Converged,
    EarlyExit,
    Budget,
}

struct BarrierResult {
    v: DVector<f64>,
    mu: f64,
    stop: BarrierStop,
}

impl Barrier<'_> {
    fn in_domain(&self, v: &DVector<f64>) -> bool {
        self.cons.iter().all(|c| c.value(v) < 0.0)
    }

    /// Directional derivative of the barrier merit at `v` along `dir`, or
    /// `None` outside the domain.
    fn directional_derivative(&self, v: &DVector<f64>, dir: &DVector<f64>, mu: f64) -> Option<f64> {
        let mut total = (self.p * v + self.q).dot(dir);
        for con in self.cons {
            let val = con.value(v);
            if val >= 0.0 {
                return None;
            }
            total += mu / (-val) * con.gradient(v).dot(dir);
        }
        Some(total)
    }

    fn newton_system(&self, v: &DVector<f64>, mu: f64) -> (DMatrix<f64>, DVector<f64>) {
        let mut hess = self.p.clone();
        let mut grad = self.p * v + self.q;
        for con in self.cons {
            let val = con.value(v);
            let cg = con.gradient(v);
            let w = mu / (-val);
            grad.axpy(w, &cg, 1.0);
            hess.syger(w / (-val), &cg, &cg, 1.0);
            con.add_hessian(&mut hess, w);
        }
        hess.fill_upper_triangle_with_lower_triangle();
        // syger touched only the lower triangle of the rank-one terms; P and
        // the constraint Hessians are symmetric, so mirroring restores the
        // full matrix
        (hess, grad)
    }

    fn max_feasible_step(&self, v: &DVector<f64>, dir: &DVector<f64>) -> f64 {
        self.cons
            .iter()
            .map(|c| c.max_step(v, dir))
            .fold(f64::INFINITY, f64::min)
    }

    /// Exact line search on the convex barrier merit: bisection on the sign
    /// of the directional derivative over `(0, α_max]`.
    fn line_search(&self, v: &DVector<f64>, dir: &DVector<f64>, mu: f64, alpha_max: f64) -> f64 {
        let deriv_at = |alpha: f64| -> f64 {
            let trial = v + dir * alpha;
            self.directional_derivative(&trial, dir, mu)
                .unwrap_or(f64::MAX)
        };
        if deriv_at(alpha_max) <= 0.0 {
            return alpha_max;
        }
        let (mut lo, mut hi) = (0.0f64, alpha_max);
        for _ in 0..64 {
            let mid = 0.5 * (lo + hi);
            if deriv_at(mid) <= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Predicate that lets a phase terminate as soon as the iterate is good
/// enough (phase 1 stops once strictly feasible).
type EarlyExit<'a> = &'a dyn Fn(&DVector<f64>) -> bool;

/// Path-following loop: Newton steps per barrier parameter, geometric μ
/// reduction down to `mu_floor`, optional early exit predicate, shared
/// iteration budget.
fn minimize_barrier(
    barrier: &Barrier,
    v0: DVector<f64>,
    options: &SolveOptions,
    budget: &mut usize,
    mu_floor: f64,
    early_exit: Option<EarlyExit>,
) -> BarrierResult {
    let mut v = v0;
    let mut mu = 1.0f64;
    if !barrier.in_domain(&v) {
        // defensive: callers always hand over a strictly interior point
        return BarrierResult {
            v,
            mu,
            stop: BarrierStop::Budget,
        };
    }
    loop {
        for _ in 0..40 {
            if *budget == 0 {
                return BarrierResult {
                    v,
                    mu,
                    stop: BarrierStop::Budget,
                };
            }
            let (hess, grad) = barrier.newton_system(&v, mu);
            let Some(delta) = solve_spd(&hess, &(-&grad)) else {
                break;
            };
            let decrement_sq = -grad.dot(&delta);
            if decrement_sq <= 2e-13 {
                break;
            }
            *budget -= 1;
            let alpha_max = (0.99 * barrier.max_feasible_step(&v, &delta)).min(1e8);
            let alpha = barrier.line_search(&v, &delta, mu, alpha_max);
            if alpha.is_nan() || alpha <= 0.0 || alpha * delta.amax() < 1e-16 {
                break;
            }
            v += delta * alpha;
            if let Some(exit) = early_exit {
                if exit(&v) {
                    return BarrierResult {
                        v,
                        mu,
                        stop: BarrierStop::EarlyExit,
                    };
                }
            }
        }
        if mu <= mu_floor {
            return BarrierResult {
                v,
                mu,
                stop: BarrierStop::Converged,
            };
        }
        mu = (mu * options.barrier_mu_reduction).max(mu_floor);
    }
}

/// Cholesky solve with an escalating ridge fallback for nearly singular
/// Newton systems.
fn solve_spd(h: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let d = h.nrows();
    let mut ridge = 0.0f64;
    for _ in 0..8 {
        let mut trial = h.clone();
        if ridge > 0.0 {
            for i in 0..d {
                trial[(i, i)] += ridge;
            }
        }
        if let Some(chol) = trial.cholesky() {
            let sol = chol.solve(rhs);
            if sol.iter().all(|v| v.is_finite()) {
                return Some(sol);
            }
        }
        ridge = if ridge == 0.0 {
            1e-12 * (1.0 + h.trace().abs() / d as f64)
        } else {
            ridge * 100.0
        };
    }
    None
}

/// Program inequalities mapped into the reduced y-space, bounds last.
fn reduced_constraints(program: &ConvexProgram, ns: &NullSpace) -> (Vec<Smooth>, Vec<Smooth>) {
    let zt = ns.z.transpose();
    let mut soft = Vec::new();
    for lin in program.linear_ineqs() {
        soft.push(Smooth::Linear {
            a: &zt * &lin.a,
            b: lin.b - lin.a.dot(&ns.x_hat),
        });
    }
    for quad in program.quad_ineqs() {
        let hz = &quad.h * &ns.z;
        soft.push(Smooth::Quadratic {
            h: &zt * &hz,
            g: &zt * &(&quad.h * &ns.x_hat + &quad.g),
            c: 0.5 * (&quad.h * &ns.x_hat).dot(&ns.x_hat) + quad.g.dot(&ns.x_hat) + quad.c,
        });
    }
    let bounds = (0..program.n())
        .map(|i| Smooth::Linear {
            a: -ns.z.row(i).transpose(),
            b: ns.x_hat[i],
        })
        .collect();
    (soft, bounds)
}

/// Maximal program-inequality violation at `x`, evaluated from the stored
/// canonical data (bounds and the simplex are not included).
fn worst_inequality(program: &ConvexProgram, x: &DVector<f64>) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for lin in program.linear_ineqs() {
        worst = worst.max(lin.a.dot(x) - lin.b);
    }
    for quad in program.quad_ineqs() {
        worst = worst.max(quad.value(x));
    }
    worst
}

enum Phase1 {
    AlreadyInterior,
    Feasible(DVector<f64>),
    Infeasible(DVector<f64>),
    Budget(DVector<f64>),
}

/// Feasibility phase: minimize the epigraph variable `t` over
/// `cᵢ(y) ≤ t` with the simplex bounds kept hard, so the reported violation
/// is the genuine minimax violation over the simplex.
fn phase1(
    soft: &[Smooth],
    bounds: &[Smooth],
    d: usize,
    options: &SolveOptions,
    budget: &mut usize,
) -> Phase1 {
    let y0 = DVector::zeros(d);
    let worst0 = soft
        .iter()
        .map(|c| c.value(&y0))
        .fold(f64::NEG_INFINITY, f64::max);
    if worst0 <= -1e-8 {
        return Phase1::AlreadyInterior;
    }

    let mut cons: Vec<Smooth> = soft.iter().map(|c| c.extended(-1.0)).collect();
    cons.extend(bounds.iter().map(|c| c.extended(0.0)));
    let p = DMatrix::zeros(d + 1, d + 1);
    let mut q = DVector::zeros(d + 1);
    q[d] = 1.0;
    let mut v0 = DVector::zeros(d + 1);
    v0[d] = worst0 + 1.0;

    let barrier = Barrier {
        p: &p,
        q: &q,
        cons: &cons,
    };
    let mu_floor = 1e-11 / cons.len().max(1) as f64;
    let exit = |v: &DVector<f64>| v[d] <= -1e-6;
    let result = minimize_barrier(&barrier, v0, options, budget, mu_floor, Some(&exit));
    let y = result.v.rows(0, d).into_owned();
    let worst = soft
        .iter()
        .map(|c| c.value(&y))
        .fold(f64::NEG_INFINITY, f64::max);
    match result.stop {
        BarrierStop::Budget => Phase1::Budget(y),
        BarrierStop::EarlyExit => Phase1::Feasible(y),
        BarrierStop::Converged => {
            if worst > options.tol_feas {
                Phase1::Infeasible(y)
            } else {
                Phase1::Feasible(y)
            }
        }
    }
}

/// Barrier multiplier estimates at the final central point.
fn barrier_multipliers(program: &ConvexProgram, x: &DVector<f64>, mu: f64) -> Multipliers {
    let n = program.n();
    let linear = program
        .linear_ineqs()
        .iter()
        .map(|lin| mu / (lin.b - lin.a.dot(x)).max(1e-300))
        .collect();
    let quadratic = program
        .quad_ineqs()
        .iter()
        .map(|quad| mu / (-quad.value(x)).max(1e-300))
        .collect();
    let bounds = (0..n).map(|i| mu / x[i].max(1e-300)).collect();
    let mut m = Multipliers {
        linear,
        quadratic,
        bounds,
        equality: 0.0,
    };
    // pick the free equality multiplier that centers the stationarity
    // residual
    let r = stationarity_residual(program, x, &m);
    m.equality = -r.sum() / n as f64;
    m
}

fn stationarity_residual(program: &ConvexProgram, x: &DVector<f64>, m: &Multipliers) -> DVector<f64> {
    let n = program.n();
    let mut r = program.objective_q() * x;
    for (lin, &lambda) in program.linear_ineqs().iter().zip(&m.linear) {
        r.axpy(lambda, &lin.a, 1.0);
    }
    for (quad, &lambda) in program.quad_ineqs().iter().zip(&m.quadratic) {
        r.axpy(lambda, &(&quad.h * x + &quad.g), 1.0);
    }
    for i in 0..n {
        r[i] -= m.bounds[i];
        r[i] += m.equality;
    }
    r
}

/// Maximal KKT violation at `(x, multipliers)`: stationarity (∞-norm),
/// primal feasibility (simplex, bounds, inequalities), dual feasibility
/// (multiplier signs), and complementary slackness, all evaluated from the
/// canonical constraint data.
pub fn kkt_residual(program: &ConvexProgram, x: &DVector<f64>, multipliers: &Multipliers) -> f64 {
    assert_eq!(x.len(), program.n(), "weight vector length");
    assert_eq!(multipliers.linear.len(), program.linear_ineqs().len());
    assert_eq!(multipliers.quadratic.len(), program.quad_ineqs().len());
    assert_eq!(multipliers.bounds.len(), program.n());

    let mut worst = stationarity_residual(program, x, multipliers).amax();
    worst = worst.max((x.sum() - 1.0).abs());
    for (lin, &lambda) in program.linear_ineqs().iter().zip(&multipliers.linear) {
        let value = lin.a.dot(x) - lin.b;
        worst = worst.max(value).max(-lambda).max((lambda * value).abs());
    }
    for (quad, &lambda) in program.quad_ineqs().iter().zip(&multipliers.quadratic) {
        let value = quad.value(x);
        worst = worst.max(value).max(-lambda).max((lambda * value).abs());
    }
    for (i, &pi) in multipliers.bounds.iter().enumerate() {
        worst = worst.max(-x[i]).max(-pi).max((pi * x[i]).abs());
    }
    worst
}

/// Active-set crossover: Newton on the KKT system of the active constraints
/// (treated as equalities), starting from the barrier point. Drops
/// constraints whose multipliers come out negative and retries. Returns
/// `None` when the polished point fails any certificate, in which case the
/// caller keeps the barrier point.
fn polish(
    program: &ConvexProgram,
    x0: &DVector<f64>,
    m0: &Multipliers,
    options: &SolveOptions,
) -> Option<(DVector<f64>, Multipliers)> {
    let n = program.n();
    let lin = program.linear_ineqs();
    let quad = program.quad_ineqs();
    let mut active_lin: Vec<usize> = (0..lin.len())
        .filter(|&i| lin[i].b - lin[i].a.dot(x0) <= 1e-6)
        .collect();
    let mut active_quad: Vec<usize> = (0..quad.len())
        .filter(|&k| -quad[k].value(x0) <= 1e-6)
        .collect();
    let mut active_bnd: Vec<usize> = (0..n).filter(|&i| x0[i] <= 1e-6).collect();

    for _attempt in 0..3 {
        let k = active_lin.len() + active_quad.len() + active_bnd.len();
        let dim = n + 1 + k;
        let mut x = x0.clone();
        let mut nu = m0.equality;
        let mut lambda: Vec<f64> = active_lin
            .iter()
            .map(|&i| m0.linear[i])
            .chain(active_quad.iter().map(|&i| m0.quadratic[i]))
            .chain(active_bnd.iter().map(|&i| m0.bounds[i]))
            .collect();

        let scale = program.objective_q().amax().max(1.0);
        let mut converged = false;
        for _ in 0..40 {
            // KKT residual of the equality-constrained subproblem
            let mut mults = Multipliers {
                linear: vec![0.0; lin.len()],
                quadratic: vec![0.0; quad.len()],
                bounds: vec![0.0; n],
                equality: nu,
            };
            for (slot, &i) in active_lin.iter().enumerate() {
                mults.linear[i] = lambda[slot];
            }
            for (slot, &i) in active_quad.iter().enumerate() {
                mults.quadratic[i] = lambda[active_lin.len() + slot];
            }
            for (slot, &i) in active_bnd.iter().enumerate() {
                mults.bounds[i] = lambda[active_lin.len() + active_quad.len() + slot];
            }
            let r_stat = stationarity_residual(program, &x, &mults);
            let mut residual = DVector::zeros(dim);
            residual.rows_mut(0, n).copy_from(&r_stat);
            residual[n] = x.sum() - 1.0;
            for (slot, &i) in active_lin.iter().enumerate() {
                residual[n + 1 + slot] = lin[i].a.dot(&x) - lin[i].b;
            }
            for (slot, &i) in active_quad.iter().enumerate() {
                residual[n + 1 + active_lin.len() + slot] = quad[i].value(&x);
            }
            for (slot, &i) in active_bnd.iter().enumerate() {
                residual[n + 1 + active_lin.len() + active_quad.len() + slot] = -x[i];
            }
            if residual.amax() <= 1e-12 * scale {
                converged = true;
                break;
            }

            let mut kkt = DMatrix::zeros(dim, dim);
            let mut head = program.objective_q().clone();
            for (slot, &i) in active_quad.iter().enumerate() {
                head += &quad[i].h * lambda[active_lin.len() + slot];
            }
            kkt.view_mut((0, 0), (n, n)).copy_from(&head);
            for i in 0..n {
                kkt[(i, n)] = 1.0;
                kkt[(n, i)] = 1.0;
            }
            let mut col = n + 1;
            for &i in &active_lin {
                for row in 0..n {
                    kkt[(row, col)] = lin[i].a[row];
                    kkt[(col, row)] = lin[i].a[row];
                }
                col += 1;
            }
            for &i in &active_quad {
                let grad = &quad[i].h * &x + &quad[i].g;
                for row in 0..n {
                    kkt[(row, col)] = grad[row];
                    kkt[(col, row)] = grad[row];
                }
                col += 1;
            }
            for &i in &active_bnd {
                kkt[(i, col)] = -1.0;
                kkt[(col, i)] = -1.0;
                col += 1;
            }

            let delta = kkt.full_piv_lu().solve(&(-residual))?;
            if !delta.iter().all(|v| v.is_finite()) {
                return None;
            }
            // cap the step to stay in Newton's basin from the barrier point
            let step = delta.amax();
            let damp = if step > 0.5 { 0.5 / step } else { 1.0 };
            for i in 0..n {
                x[i] += damp * delta[i];
            }
            nu += damp * delta[n];
            for (slot, l) in lambda.iter_mut().enumerate() {
                *l += damp * delta[n + 1 + slot];
            }
        }
        if !converged {
            return None;
        }

        // dual feasibility: drop constraints with negative multipliers and
        // retry once more from the barrier point
        let negative: Vec<usize> = lambda
            .iter()
            .enumerate()
            .filter(|(_, &l)| l < -1e-9)
            .map(|(slot, _)| slot)
            .collect();
        if negative.is_empty() {
            let mut mults = Multipliers {
                linear: vec![0.0; lin.len()],
                quadratic: vec![0.0; quad.len()],
                bounds: vec![0.0; n],
                equality: nu,
            };
            for (slot, &i) in active_lin.iter().enumerate() {
                mults.linear[i] = lambda[slot].max(0.0);
            }
            for (slot, &i) in active_quad.iter().enumerate() {
                mults.quadratic[i] = lambda[active_lin.len() + slot].max(0.0);
            }
            for (slot, &i) in active_bnd.iter().enumerate() {
                mults.bounds[i] = lambda[active_lin.len() + active_quad.len() + slot].max(0.0);
            }
            let feasible = program.max_violation(&x) <= options.tol_feas;
            let certified = kkt_residual(program, &x, &mults) <= options.tol_kkt;
            if feasible && certified {
                return Some((x, mults));
            }
            return None;
        }
        let keep = |slot: usize| !negative.contains(&slot);
        let offset_quad = active_lin.len();
        let offset_bnd = active_lin.len() + active_quad.len();
        active_lin = active_lin
            .iter()
            .enumerate()
            .filter(|(slot, _)| keep(*slot))
            .map(|(_, &i)| i)
            .collect();
        active_quad = active_quad
            .iter()
            .enumerate()
            .filter(|(slot, _)| keep(slot + offset_quad))
            .map(|(_, &i)| i)
            .collect();
        active_bnd = active_bnd
            .iter()
            .enumerate()
            .filter(|(slot, _)| keep(slot + offset_bnd))
            .map(|(_, &i)| i)
            .collect();
    }
    None
}

fn active_labels(program: &ConvexProgram, x: &DVector<f64>) -> Vec<String> {
    let mut labels = Vec::new();
    for lin in program.linear_ineqs() {
        if lin.b - lin.a.dot(x) <= 1e-6 {
            labels.push(lin.label.clone());
        }
    }
    for quad in program.quad_ineqs() {
        if -quad.value(x) <= 1e-6 {
            labels.push(quad.label.clone());
        }
    }
    for i in 0..x.len() {
        if x[i] <= 1e-6 {
            labels.push(format!("x{}-nonnegative", i + 1));
        }
    }
    labels
}

/// Solves the program. Infeasibility is certified by the feasibility phase;
/// `MaxIter` is returned with the best available iterate when the Newton
/// budget runs out.
pub fn solve(program: &ConvexProgram, options: &SolveOptions) -> Solution {
    let options = options.sanitized();
    let n = program.n();
    if n == 1 {
        return solve_single_variable(program, &options);
    }

    let ns = NullSpace::new(n);
    let d = n - 1;
    let qz = program.objective_q() * &ns.z;
    let p = ns.z.transpose() * &qz;
    let q = qz.transpose() * &ns.x_hat;
    let (soft, bounds) = reduced_constraints(program, &ns);
    let mut budget = options.max_iterations;

    let y_start = match phase1(&soft, &bounds, d, &options, &mut budget) {
        Phase1::AlreadyInterior => DVector::zeros(d),
        Phase1::Feasible(y) => y,
        Phase1::Infeasible(y) => {
            let x = ns.to_x(&y);
            // report the violation from the canonical x-space data
            return Solution::rejected(worst_inequality(program, &x), x);
        }
        Phase1::Budget(y) => {
            let x = ns.to_x(&y);
            return Solution {
                status: Status::MaxIter,
                objective: Some(program.objective_value(&x)),
                kkt_residual: None,
                active_constraints: Vec::new(),
                violation: Some(worst_inequality(program, &x).max(0.0)),
                x: Some(x.iter().copied().collect()),
            };
        }
    };

    let mut cons = soft;
    cons.extend(bounds);
    let barrier = Barrier {
        p: &p,
        q: &q,
        cons: &cons,
    };
    let mu_floor = 1e-11 / cons.len().max(1) as f64;
    let result = minimize_barrier(&barrier, y_start, &options, &mut budget, mu_floor, None);
    let x_barrier = ns.to_x(&result.v);
    let m_barrier = barrier_multipliers(program, &x_barrier, result.mu);

    if matches!(result.stop, BarrierStop::Budget) {
        return Solution {
            status: Status::MaxIter,
            objective: Some(program.objective_value(&x_barrier)),
            kkt_residual: Some(kkt_residual(program, &x_barrier, &m_barrier)),
            active_constraints: active_labels(program, &x_barrier),
            violation: None,
            x: Some(x_barrier.iter().copied().collect()),
        };
    }

    let (x, multipliers) = polish(program, &x_barrier, &m_barrier, &options)
        .unwrap_or((x_barrier, m_barrier));
    Solution {
        status: Status::Optimal,
        objective: Some(program.objective_value(&x)),
        kkt_residual: Some(kkt_residual(program, &x, &multipliers)),
        active_constraints: active_labels(program, &x),
        violation: None,
        x: Some(x.iter().copied().collect()),
    }
}

fn solve_single_variable(program: &ConvexProgram, options: &SolveOptions) -> Solution {
    let x = DVector::from_element(1, 1.0);
    let violation = worst_inequality(program, &x);
    if violation > options.tol_feas {
        return Solution::rejected(violation, x);
    }
    let multipliers = Multipliers {
        linear: vec![0.0; program.linear_ineqs().len()],
        quadratic: vec![0.0; program.quad_ineqs().len()],
        bounds: vec![0.0; 1],
        equality: -(program.objective_q() * &x)[0],
    };
    Solution {
        status: Status::Optimal,
        objective: Some(program.objective_value(&x)),
        kkt_residual: Some(kkt_residual(program, &x, &multipliers)),
        active_constraints: active_labels(program, &x),
        violation: None,
        x: Some(vec![1.0]),
    }
}

/// Stand-alone feasibility phase (the same machinery `solve` uses),
/// returning either a strictly interior point or the minimized maximal
/// violation as infeasibility evidence.
pub fn feasibility_phase(program: &ConvexProgram, options: &SolveOptions) -> FeasibilityOutcome {
    let options = options.sanitized();
    let n = program.n();
    if n == 1 {
        let x = DVector::from_element(1, 1.0);
        let violation = worst_inequality(program, &x);
        return if violation > options.tol_feas {
            FeasibilityOutcome::Infeasible { violation, x }
        } else {
            FeasibilityOutcome::Feasible {
                x0: x,
                margin: -violation,
            }
        };
    }
    let ns = NullSpace::new(n);
    let (soft, bounds) = reduced_constraints(program, &ns);
    let mut budget = options.max_iterations;
    match phase1(&soft, &bounds, n - 1, &options, &mut budget) {
        Phase1::AlreadyInterior => {
            let x0 = ns.x_hat.clone();
            let margin = -worst_inequality(program, &x0);
            FeasibilityOutcome::Feasible { x0, margin }
        }
        Phase1::Feasible(y) | Phase1::Budget(y) => {
            let x0 = ns.to_x(&y);
            let margin = -worst_inequality(program, &x0);
            if margin > 0.0 {
                FeasibilityOutcome::Feasible { x0, margin }
            } else {
                FeasibilityOutcome::Infeasible {
                    violation: -margin,
                    x: x0,
                }
            }
        }
        Phase1::Infeasible(y) => {
            let x = ns.to_x(&y);
            FeasibilityOutcome::Infeasible {
                violation: worst_inequality(program, &x),
                x,
            }
        }
    }
}

/// Brute-force oracle: exhaustive enumeration of the simplex lattice with
/// the given step (e.g. 1e-3 for n = 3), keeping the best point that
/// satisfies every inequality. Exponential in n; intended for cross-checking
/// tiny instances only. Returns `None` when no lattice point is feasible.
pub fn grid_search(program: &ConvexProgram, step: f64) -> Option<(DVector<f64>, f64)> {
    let n = program.n();
    let units = (1.0 / step).round().max(1.0) as usize;
    let mut best: Option<(DVector<f64>, f64)> = None;
    let mut x = DVector::zeros(n);
    enumerate_lattice(&mut x, 0, units, units, &mut |x| {
        if feasible_point(program, x) {
            let objective = program.objective_value(x);
            if best.as_ref().is_none_or(|(_, b)| objective < *b) {
                best = Some((x.clone(), objective));
            }
        }
    });
    best
}

/// Grid oracle with local refinement: after the full lattice sweep, two
/// rounds re-grid a ±60-cell box around the incumbent, first at `step/10`
/// (the box then spans ±6 coarse cells, wide enough to recover from a
/// coarse incumbent pushed away from the optimum by the feasibility cut)
/// and then at `step/500`. Still visits feasible points only, so the result
/// remains an upper bound on the true optimum while resolving optima that
/// sit between coarse lattice points.
pub fn refined_grid_search(program: &ConvexProgram, step: f64) -> Option<(DVector<f64>, f64)> {
    let (mut x_best, mut obj_best) = grid_search(program, step)?;
    let n = program.n();
    for divisor in [10.0, 500.0] {
        let h = step / divisor;
        let center = x_best.clone();
        let mut offsets = vec![0i64; n - 1];
        refine_box(
            program,
            &center,
            h,
            60,
            &mut offsets,
            0,
            &mut x_best,
            &mut obj_best,
        );
    }
    Some((x_best, obj_best))
}

fn feasible_point(program: &ConvexProgram, x: &DVector<f64>) -> bool {
    worst_inequality(program, x) <= 1e-12
}

fn enumerate_lattice(
    x: &mut DVector<f64>,
    dim: usize,
    remaining: usize,
    units: usize,
    visit: &mut impl FnMut(&DVector<f64>),
) {
    let n = x.len();
    if dim == n - 1 {
        x[dim] = remaining as f64 / units as f64;
        visit(x);
        return;
    }
    for k in 0..=remaining {
        x[dim] = k as f64 / units as f64;
        enumerate_lattice(x, dim + 1, remaining - k, units, visit);
    }
}

#[allow(clippy::too_many_arguments)]
fn refine_box(
    program: &ConvexProgram,
    center: &DVector<f64>,
    h: f64,
    radius: i64,
    offsets: &mut Vec<i64>,
    dim: usize,
    x_best: &mut DVector<f64>,
    obj_best: &mut f64,
) {
    let n = center.len();
    if dim == n - 1 {
        let mut x = DVector::zeros(n);
        let mut head = 0.0;
        for i in 0..n - 1 {
            x[i] = center[i] + offsets[i] as f64 * h;
            if x[i] < 0.0 {
                return;
            }
            head += x[i];
        }
        x[n - 1] = 1.0 - head;
        if x[n - 1] < 0.0 {
            return;
        }
        if feasible_point(program, &x) {
            let objective = program.objective_value(&x);
            if objective < *obj_best {
                *obj_best = objective;
                *x_best = x;
            }
        }
        return;
    }
    for k in -radius..=radius {
        offsets[dim] = k;
        refine_box(program, center, h, radius, offsets, dim + 1, x_best, obj_best);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approximation::{
        build_bernstein, build_nominal, build_piecewise_linear, build_piecewise_quadratic,
    };
    use crate::market_data::MomentEstimates;
    use crate::uncertainty::{BasicShifts, PerturbationFamily, UncertainReturnModel};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

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

    fn taus() -> Vec<f64> {
        (0..11).map(|k| 1.5 + 0.2 * k as f64).collect()
    }

    // cross-validated optima for the bundled data (two independent convex
    // solvers agreed to 1e-9)
    const NOMINAL_RISKS: [f64; 11] = [
        2.778776138717,
        2.858507564069,
        2.953502840656,
        3.063761968481,
        3.189284947542,
        3.330071777839,
        3.486122459374,
        3.657436992145,
        3.844015376152,
        4.045857611397,
        4.262963697878,
    ];
    const PWL_RISKS: [f64; 11] = [
        3.314179305829,
        3.468549395988,
        3.638176356164,
        3.823060186358,
        4.023200886570,
        4.238598456800,
        4.469252897047,
        4.715164207312,
        4.976332387594,
        5.252757437894,
        5.544439358212,
    ];
    const BERNSTEIN_RISKS: [f64; 10] = [
        5.613278933962,
        5.923711947252,
        6.250345556822,
        6.593865271994,
        6.954271092768,
        7.331563019146,
        7.725741051125,
        8.136805188707,
        8.564755431892,
        9.009591780680,
    ];
    const QUADRATIC_RISKS: [f64; 11] = [
        3.192834429620,
        3.334029232491,
        3.490491578392,
        3.662222402612,
        3.849222641609,
        4.051493233097,
        4.269035116135,
        4.501849231215,
        4.749936520350,
        5.013297927166,
        5.291934396990,
    ];

    fn assert_certified(solution: &Solution, options: &SolveOptions) {
        assert_eq!(solution.status, Status::Optimal);
        assert!(solution.kkt_residual.unwrap() <= options.tol_kkt);
    }

    #[test]
    fn nominal_matches_the_cross_validated_optimum() {
        let options = SolveOptions::default();
        let program = build_nominal(&nifty_moments(), 1.5).unwrap();
        let solution = solve(&program, &options);
        assert_certified(&solution, &options);
        assert_abs_diff_eq!(solution.objective.unwrap(), 2.778776138717, epsilon = 1e-6);
        let x = solution.x_vector().unwrap();
        for (got, want) in x.iter().zip([0.141487777146, 0.554538660783, 0.303973562071]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-6);
        }
        assert_eq!(solution.active_constraints, vec!["target-return"]);
    }

    #[test]
    fn nominal_risks_across_the_sweep() {
        let options = SolveOptions::default();
        for (tau, want) in taus().into_iter().zip(NOMINAL_RISKS) {
            let program = build_nominal(&nifty_moments(), tau).unwrap();
            let solution = solve(&program, &options);
            assert_certified(&solution, &options);
            assert_abs_diff_eq!(solution.objective.unwrap(), want, epsilon = 1e-6);
        }
    }

    #[test]
    fn piecewise_linear_risks_across_the_sweep() {
        let options = SolveOptions::default();
        let moments = nifty_moments();
        for (tau, want) in taus().into_iter().zip(PWL_RISKS) {
            let program = build_piecewise_linear(&nifty_model(tau), &moments).unwrap();
            let solution = solve(&program, &options);
            assert_certified(&solution, &options);
            assert_abs_diff_eq!(solution.objective.unwrap(), want, epsilon = 1e-6);
        }
    }

    #[test]
    fn piecewise_linear_weights_at_the_endpoints() {
        let options = SolveOptions::default();
        let moments = nifty_moments();
        let first = solve(
            &build_piecewise_linear(&nifty_model(1.5), &moments).unwrap(),
            &options,
        );
        let x = first.x_vector().unwrap();
        for (got, want) in x.iter().zip([0.097907869790, 0.449328363439, 0.452763766771]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-6);
        }
        assert_eq!(first.active_constraints, vec!["piecewise-linear-surrogate"]);

        let last = solve(
            &build_piecewise_linear(&nifty_model(3.5), &moments).unwrap(),
            &options,
        );
        let x = last.x_vector().unwrap();
        for (got, want) in x.iter().zip([0.010066609428, 0.233739865098, 0.756193525474]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-6);
        }
    }

    #[test]
    fn bernstein_risks_across_the_feasible_sweep() {
        let options = SolveOptions::default();
        let moments = nifty_moments();
        for (tau, want) in taus().into_iter().zip(BERNSTEIN_RISKS) {
            let program = build_bernstein(&nifty_model(tau), &moments).unwrap();
            let solution = solve(&program, &options);
            assert_certified(&solution, &options);
            assert_abs_diff_eq!(solution.objective.unwrap(), want, epsilon = 1e-6);
        }
    }

    #[test]
    fn bernstein_pins_the_first_asset_at_zero_for_high_targets() {
        let options = SolveOptions::default();
        let program = build_bernstein(&nifty_model(3.3), &nifty_moments()).unwrap();
        let solution = solve(&program, &options);
        assert_certified(&solution, &options);
        let x = solution.x_vector().unwrap();
        assert!(x[0].abs() <= 1e-7, "x1 = {}", x[0]);
        assert!(solution
            .active_constraints
            .iter()
            .any(|l| l == "x1-nonnegative"));
    }

    #[test]
    fn bernstein_at_tau_3_5_is_certified_infeasible() {
        let options = SolveOptions::default();
        let program = build_bernstein(&nifty_model(3.5), &nifty_moments()).unwrap();
        let solution = solve(&program, &options);
        assert_eq!(solution.status, Status::Infeasible);
        assert_abs_diff_eq!(
            solution.violation.unwrap(),
            0.19673227355399,
            epsilon = 1e-6
        );
        assert!(solution.objective.is_none());
    }

    #[test]
    fn unreachable_nominal_target_reports_the_exact_gap() {
        let options = SolveOptions::default();
        let moments = nifty_moments();
        let tau = 6.329 + 1.0;
        let program = build_nominal(&moments, tau).unwrap();
        let solution = solve(&program, &options);
        assert_eq!(solution.status, Status::Infeasible);
        assert_abs_diff_eq!(solution.violation.unwrap(), 1.0, epsilon = 1e-6);
    }

    #[test]
    fn quadratic_risks_across_the_sweep() {
        let options = SolveOptions::default();
        let moments = nifty_moments();
        for (tau, want) in taus().into_iter().zip(QUADRATIC_RISKS) {
            let program = build_piecewise_quadratic(&nifty_model(tau), &moments).unwrap();
            let solution = solve(&program, &options);
            assert_certified(&solution, &options);
            assert_abs_diff_eq!(solution.objective.unwrap(), want, epsilon = 1e-6);
        }
    }

    #[test]
    fn quadratic_weights_at_the_first_target() {
        let options = SolveOptions::default();
        let program =
            build_piecewise_quadratic(&nifty_model(1.5), &nifty_moments()).unwrap();
        let solution = solve(&program, &options);
        let x = solution.x_vector().unwrap();
        for (got, want) in x.iter().zip([0.105539404668, 0.467984083133, 0.426476512200]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-6);
        }
        assert_eq!(
            solution.active_constraints,
            vec!["piecewise-quadratic-surrogate"]
        );
    }

    #[test]
    fn unconstrained_interior_optimum_has_tiny_residual() {
        let moments = MomentEstimates::new(
            vec!["a".into(), "b".into(), "c".into()],
            DVector::zeros(3),
            DMatrix::identity(3, 3),
        )
        .unwrap();
        let program = build_nominal(&moments, -1.0).unwrap();
        let solution = solve(&program, &SolveOptions::default());
        assert_certified(&solution, &SolveOptions::default());
        let x = solution.x_vector().unwrap();
        for v in x.iter() {
            assert_abs_diff_eq!(*v, 1.0 / 3.0, epsilon = 1e-9);
        }
        assert!(solution.kkt_residual.unwrap() <= 1e-10);
    }

    #[test]
    fn suboptimal_feasible_points_have_large_residuals() {
        let program = build_piecewise_linear(&nifty_model(1.5), &nifty_moments()).unwrap();
        let x = DVector::from_vec(vec![0.2, 0.2, 0.6]);
        assert!(program.max_violation(&x) <= 0.0, "test point must be feasible");
        let zero = Multipliers {
            linear: vec![0.0],
            quadratic: vec![],
            bounds: vec![0.0; 3],
            equality: 0.0,
        };
        // best equality multiplier for a fair comparison
        let mut m = zero;
        let r = stationarity_residual(&program, &x, &m);
        m.equality = -r.sum() / 3.0;
        assert!(kkt_residual(&program, &x, &m) > 1e-3);
    }

    #[test]
    fn feasibility_phase_finds_an_interior_point() {
        let program = build_nominal(&nifty_moments(), -2.0).unwrap();
        match feasibility_phase(&program, &SolveOptions::default()) {
            FeasibilityOutcome::Feasible { x0, margin } => {
                assert!(margin > 0.0);
                assert_abs_diff_eq!(x0.sum(), 1.0, epsilon = 1e-12);
            }
            other => panic!("expected feasible, got {other:?}"),
        }
    }

    #[test]
    fn feasibility_phase_certifies_the_bernstein_gap() {
        let program = build_bernstein(&nifty_model(3.5), &nifty_moments()).unwrap();
        match feasibility_phase(&program, &SolveOptions::default()) {
            FeasibilityOutcome::Infeasible { violation, .. } => {
                assert_abs_diff_eq!(violation, 0.19673227355399, epsilon = 1e-6);
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn exhausted_budget_reports_max_iter() {
        let options = SolveOptions {
            max_iterations: 1,
            ..SolveOptions::default()
        };
        let program = build_piecewise_linear(&nifty_model(1.5), &nifty_moments()).unwrap();
        let solution = solve(&program, &options);
        assert_eq!(solution.status, Status::MaxIter);
        assert!(solution.x.is_some());
    }

    #[test]
    fn identical_runs_are_bitwise_identical() {
        let options = SolveOptions::default();
        let program =
            build_piecewise_quadratic(&nifty_model(2.3), &nifty_moments()).unwrap();
        let a = solve(&program, &options);
        let b = solve(&program, &options);
        assert_eq!(a.status, b.status);
        let xa = a.x.unwrap();
        let xb = b.x.unwrap();
        for (va, vb) in xa.iter().zip(&xb) {
            assert_eq!(va.to_bits(), vb.to_bits());
        }
    }

    #[test]
    fn grid_oracle_brackets_the_solver_on_a_fat_program() {
        let options = SolveOptions::default();
        let program = build_piecewise_linear(&nifty_model(2.3), &nifty_moments()).unwrap();
        let solution = solve(&program, &options);
        let (_, oracle) = grid_search(&program, 1e-3).unwrap();
        let solver = solution.objective.unwrap();
        assert!(solver <= oracle + 1e-6, "solver {solver} oracle {oracle}");
        assert!((solver - oracle).abs() <= 1e-3);
    }

    #[test]
    fn refined_oracle_closes_the_lattice_gap_near_a_vertex() {
        let options = SolveOptions::default();
        let program = build_bernstein(&nifty_model(3.3), &nifty_moments()).unwrap();
        let solution = solve(&program, &options);
        let solver = solution.objective.unwrap();
        // the plain 1e-3 lattice only reaches the (0,0,1) vertex here
        let (_, coarse) = grid_search(&program, 1e-3).unwrap();
        assert!(coarse - solver > 1e-3);
        let (_, refined) = refined_grid_search(&program, 1e-3).unwrap();
        assert!(refined - solver <= 1e-4, "refined {refined} solver {solver}");
        assert!(solver <= refined + 1e-6);
    }

    #[test]
    fn single_asset_program_is_immediate() {
        let moments = MomentEstimates::new(
            vec!["only".into()],
            DVector::from_vec(vec![2.0]),
            DMatrix::from_row_slice(1, 1, &[5.0]),
        )
        .unwrap();
        let program = build_nominal(&moments, 1.0).unwrap();
        let solution = solve(&program, &SolveOptions::default());
        assert_eq!(solution.status, Status::Optimal);
        assert_eq!(solution.x.unwrap(), vec![1.0]);
        assert_abs_diff_eq!(solution.objective.unwrap(), 2.5, epsilon = 1e-14);

        let impossible = build_nominal(&moments, 3.0).unwrap();
        let solution = solve(&impossible, &SolveOptions::default());
        assert_eq!(solution.status, Status::Infeasible);
        assert_abs_diff_eq!(solution.violation.unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn solution_json_round_trips() {
        let program = build_piecewise_linear(&nifty_model(1.5), &nifty_moments()).unwrap();
        let solution = solve(&program, &SolveOptions::default());
        let text = serde_json::to_string(&solution).unwrap();
        assert!(text.contains("\"status\":\"optimal\""));
        let back: Solution = serde_json::from_str(&text).unwrap();
        assert_eq!(back, solution);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        /// Random PSD objectives with a centroid-feasible linear constraint:
        /// the solver must certify optimality and beat the centroid.
        #[test]
        fn random_programs_are_certified_and_beat_the_centroid(
            entries in proptest::collection::vec(-1.0f64..1.0, 9),
            a in proptest::collection::vec(-2.0f64..2.0, 3),
            slack in 0.01f64..1.0,
        ) {
            let basis = DMatrix::from_vec(3, 3, entries);
            let q = &basis * basis.transpose() + DMatrix::identity(3, 3) * 0.1;
            let moments = MomentEstimates::new(
                vec!["a".into(), "b".into(), "c".into()],
                DVector::zeros(3),
                q,
            ).unwrap();
            let mut program = crate::approximation::ConvexProgram::new(
                moments.sigma.clone(),
            ).unwrap();
            let a = DVector::from_vec(a);
            let centroid = DVector::from_element(3, 1.0 / 3.0);
            program.add_linear(a.clone(), a.dot(&centroid) + slack, "test").unwrap();
            let options = SolveOptions::default();
            let solution = solve(&program, &options);
            prop_assert_eq!(solution.status, Status::Optimal);
            prop_assert!(solution.kkt_residual.unwrap() <= options.tol_kkt);
            let obj = solution.objective.unwrap();
            prop_assert!(obj <= program.objective_value(&centroid) + 1e-9);
            let x = solution.x_vector().unwrap();
            prop_assert!(program.max_violation(&x) <= options.tol_feas);
        }
    }
}
