//! Efficient-frontier sweeps: solve a chosen approximation across a grid of
//! target returns and emit the results as CSV, JSON, or a static SVG chart
//! (stacked allocations plus the risk frontier).
//!
//! Infeasible grid points are recorded with their status rather than
//! truncating the sweep, so a frontier that dies at high targets is visible
//! in the output. All emitters are byte-deterministic for identical tables.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::approximation::{
    build_bernstein, build_nominal, build_piecewise_linear, build_piecewise_quadratic,
    ApproxError, ConvexProgram,
};
use crate::market_data::MomentEstimates;
use crate::solver::{solve, SolveOptions, Status};
use crate::uncertainty::UncertainReturnModel;

#[derive(Debug, Error)]
pub enum FrontierError {
    #[error("tau step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("cannot render an empty table")]
    EmptyTable,
    #[error(transparent)]
    Builder(#[from] ApproxError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Which deterministic program the sweep solves at each target return.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrontierKind {
    Nominal,
    PiecewiseLinear,
    Bernstein,
    PiecewiseQuadratic,
}

impl FrontierKind {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "nominal" => Some(Self::Nominal),
            "piecewise_linear" => Some(Self::PiecewiseLinear),
            "bernstein" => Some(Self::Bernstein),
            "piecewise_quadratic" => Some(Self::PiecewiseQuadratic),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Nominal => "nominal",
            Self::PiecewiseLinear => "piecewise_linear",
            Self::Bernstein => "bernstein",
            Self::PiecewiseQuadratic => "piecewise_quadratic",
        }
    }
}

/// Dispatches to the matching builder. The model's `tau` is used as-is;
/// sweeps rebind it per grid point.
pub fn build_program(
    kind: FrontierKind,
    model: &UncertainReturnModel,
    moments: &MomentEstimates,
) -> Result<ConvexProgram, ApproxError> {
    match kind {
        FrontierKind::Nominal => build_nominal(moments, model.tau),
        FrontierKind::PiecewiseLinear => build_piecewise_linear(model, moments),
        FrontierKind::Bernstein => build_bernstein(model, moments),
        FrontierKind::PiecewiseQuadratic => build_piecewise_quadratic(model, moments),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierRow {
    pub tau: f64,
    /// Present for rows the solver certified (or at least returned a point
    /// for); absent for infeasible grid points.
    pub x: Option<Vec<f64>>,
    pub risk: Option<f64>,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierTable {
    pub kind: FrontierKind,
    pub beta: f64,
    pub n_assets: usize,
    pub rows: Vec<FrontierRow>,
}

impl FrontierTable {
    /// Structural invariants: strictly increasing targets and, among optimal
    /// rows, non-decreasing risk (nested feasible sets).
    pub fn check_invariants(&self) -> Result<(), String> {
        for pair in self.rows.windows(2) {
            if pair[1].tau <= pair[0].tau {
                return Err(format!(
                    "tau not strictly increasing: {} then {}",
                    pair[0].tau, pair[1].tau
                ));
            }
        }
        let mut last: Option<f64> = None;
        for row in &self.rows {
            if row.status != Status::Optimal {
                continue;
            }
            let risk = row.risk.ok_or("optimal row without a risk value")?;
            if let Some(prev) = last {
                if risk < prev - 1e-9 {
                    return Err(format!(
                        "risk decreased along the sweep: {prev} then {risk} at tau {}",
                        row.tau
                    ));
                }
            }
            last = Some(risk);
        }
        Ok(())
    }
}

/// Keeps grid targets on exact representable values: `1.5 + 2·0.2`
/// accumulates to `1.9000000000000001` otherwise. Rounding through a
/// 9-decimal string is exact where binary arithmetic on 1e-9 is not.
fn snap_tau(tau: f64) -> f64 {
    format!("{tau:.9}").parse().expect("formatted float")
}

/// Solves `kind` at every target in `[tau_start, tau_end]` with the given
/// step. Builder errors abort the sweep; solver verdicts (including
/// infeasibility) become rows.
pub fn sweep(
    model: &UncertainReturnModel,
    moments: &MomentEstimates,
    kind: FrontierKind,
    tau_start: f64,
    tau_end: f64,
    tau_step: f64,
    options: &SolveOptions,
) -> Result<FrontierTable, FrontierError> {
    if tau_step.is_nan() || tau_step <= 0.0 {
        return Err(FrontierError::InvalidStep(tau_step));
    }
    let mut rows = Vec::new();
    for k in 0.. {
        let tau = snap_tau(tau_start + k as f64 * tau_step);
        if tau > tau_end + 1e-12 {
            break;
        }
        let grid_model = model.with_tau(tau);
        let program = build_program(kind, &grid_model, moments)?;
        let solution = solve(&program, options);
        let (x, risk) = match solution.status {
            Status::Optimal | Status::MaxIter => (solution.x, solution.objective),
            _ => (None, None),
        };
        rows.push(FrontierRow {
            tau,
            x,
            risk,
            status: solution.status,
        });
    }
    Ok(FrontierTable {
        kind,
        beta: model.beta,
        n_assets: moments.n_assets(),
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmitFormat {
    Csv,
    Json,
    Svg,
}

/// Writes the table to `path` in the requested format.
pub fn emit(table: &FrontierTable, format: EmitFormat, path: &Path) -> Result<(), FrontierError> {
    let payload = match format {
        EmitFormat::Csv => csv_string(table),
        EmitFormat::Json => json_string(table),
        EmitFormat::Svg => svg_string(table)?,
    };
    std::fs::write(path, payload)?;
    Ok(())
}

/// Columns `tau,x_1..x_n,risk,status`; infeasible rows keep their cells
/// empty. Numbers use shortest round-trip formatting, so re-parsing the CSV
/// reproduces the solved values exactly.
pub fn csv_string(table: &FrontierTable) -> String {
    let mut out = String::from("tau");
    for i in 1..=table.n_assets {
        let _ = write!(out, ",x_{i}");
    }
    out.push_str(",risk,status\n");
    for row in &table.rows {
        let _ = write!(out, "{}", row.tau);
        match &row.x {
            Some(x) => {
                for v in x {
                    let _ = write!(out, ",{v}");
                }
            }
            None => out.push_str(&",".repeat(table.n_assets)),
        }
        match row.risk {
            Some(risk) => {
                let _ = write!(out, ",{risk}");
            }
            None => out.push(','),
        }
        let _ = writeln!(out, ",{}", row.status);
    }
    out
}

pub fn json_string(table: &FrontierTable) -> String {
    let mut text =
        serde_json::to_string_pretty(table).expect("frontier tables are always serializable");
    text.push('\n');
    text
}

const PALETTE: [&str; 6] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948",
];

/// 960×540 chart: stacked allocation bands on the left, the risk frontier on
/// the right. A single solved row degenerates to markers (no path segments);
/// an empty table is an error.
pub fn svg_string(table: &FrontierTable) -> Result<String, FrontierError> {
    if table.rows.is_empty() {
        return Err(FrontierError::EmptyTable);
    }
    let solved: Vec<&FrontierRow> = table.rows.iter().filter(|r| r.x.is_some()).collect();
    let tau_min = table.rows.first().map(|r| r.tau).unwrap_or(0.0);
    let tau_max = table.rows.last().map(|r| r.tau).unwrap_or(1.0);
    let span = (tau_max - tau_min).max(1e-12);
    let (risk_min, risk_max) = solved
        .iter()
        .filter_map(|r| r.risk)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
            (lo.min(r), hi.max(r))
        });
    let risk_span = (risk_max - risk_min).max(1e-12);

    // panel geometry
    let (ax0, ax1, ay0, ay1) = (70.0, 450.0, 60.0, 470.0);
    let (bx0, bx1) = (570.0, 930.0);
    let alloc_x = |tau: f64| ax0 + (tau - tau_min) / span * (ax1 - ax0);
    let alloc_y = |frac: f64| ay1 - frac * (ay1 - ay0);
    let risk_x = |tau: f64| bx0 + (tau - tau_min) / span * (bx1 - bx0);
    let risk_y = |risk: f64| ay1 - (risk - risk_min) / risk_span * (ay1 - ay0);
    let fmt = |v: f64| format!("{v:.2}");

    let mut svg = String::new();
    svg.push_str("<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 960 540\" width=\"960\" height=\"540\" font-family=\"sans-serif\" font-size=\"14\">\n");
    svg.push_str("<rect width=\"960\" height=\"540\" fill=\"white\"/>\n");

    // allocation bands between cumulative weight curves
    if solved.len() >= 2 {
        let cumulative: Vec<Vec<f64>> = solved
            .iter()
            .map(|row| {
                let x = row.x.as_ref().expect("solved rows carry weights");
                let mut acc = 0.0;
                let mut levels = vec![0.0];
                for &w in x {
                    acc += w;
                    levels.push(acc);
                }
                levels
            })
            .collect();
        for asset in 0..table.n_assets {
            let mut points = String::new();
            for (row, levels) in solved.iter().zip(&cumulative) {
                let _ = write!(
                    points,
                    "{},{} ",
                    fmt(alloc_x(row.tau)),
                    fmt(alloc_y(levels[asset]))
                );
            }
            for (row, levels) in solved.iter().zip(&cumulative).rev() {
                let _ = write!(
                    points,
                    "{},{} ",
                    fmt(alloc_x(row.tau)),
                    fmt(alloc_y(levels[asset + 1]))
                );
            }
            let _ = writeln!(
                svg,
                "<polygon points=\"{}\" fill=\"{}\" fill-opacity=\"0.8\" stroke=\"none\"/>",
                points.trim_end(),
                PALETTE[asset % PALETTE.len()]
            );
        }
    } else if solved.len() == 1 {
        let row = solved[0];
        let mut acc = 0.0;
        for (asset, &w) in row.x.as_ref().expect("solved row").iter().enumerate() {
            acc += w;
            let _ = writeln!(
                svg,
                "<circle cx=\"{}\" cy=\"{}\" r=\"4\" fill=\"{}\"/>",
                fmt(alloc_x(row.tau)),
                fmt(alloc_y(acc)),
                PALETTE[asset % PALETTE.len()]
            );
        }
    } else {
        svg.push_str("<text x=\"150\" y=\"260\" fill=\"#666\">no feasible points</text>\n");
    }

    // risk frontier
    let curve: Vec<(f64, f64)> = solved
        .iter()
        .filter_map(|r| r.risk.map(|risk| (risk_x(r.tau), risk_y(risk))))
        .collect();
    if curve.len() >= 2 {
        let mut d = String::new();
        for (i, (px, py)) in curve.iter().enumerate() {
            let _ = write!(d, "{}{},{} ", if i == 0 { "M" } else { "L" }, fmt(*px), fmt(*py));
        }
        let _ = writeln!(
            svg,
            "<path d=\"{}\" fill=\"none\" stroke=\"#1f2f4f\" stroke-width=\"2\"/>",
            d.trim_end()
        );
    }
    for (px, py) in &curve {
        let _ = writeln!(
            svg,
            "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"#1f2f4f\"/>",
            fmt(*px),
            fmt(*py)
        );
    }

    // axes and labels
    for (x0, x1) in [(ax0, ax1), (bx0, bx1)] {
        let _ = writeln!(
            svg,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
            fmt(x0),
            fmt(ay1),
            fmt(x1),
            fmt(ay1)
        );
        let _ = writeln!(
            svg,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
            fmt(x0),
            fmt(ay0),
            fmt(x0),
            fmt(ay1)
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"505\" text-anchor=\"middle\">target return τ</text>",
            fmt((x0 + x1) / 2.0)
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"490\" text-anchor=\"middle\" font-size=\"12\">{}</text>",
            fmt(x0),
            tau_min
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"490\" text-anchor=\"middle\" font-size=\"12\">{}</text>",
            fmt(x1),
            tau_max
        );
    }
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"40\" text-anchor=\"middle\" font-weight=\"bold\">allocation ({})</text>",
        fmt((ax0 + ax1) / 2.0),
        table.kind.as_str()
    );
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"40\" text-anchor=\"middle\" font-weight=\"bold\">efficient frontier</text>",
        fmt((bx0 + bx1) / 2.0)
    );
    svg.push_str("<text x=\"24\" y=\"265\" transform=\"rotate(-90 24 265)\" text-anchor=\"middle\">allocation</text>\n");
    svg.push_str("<text x=\"524\" y=\"265\" transform=\"rotate(-90 524 265)\" text-anchor=\"middle\">portfolio risk</text>\n");
    if !curve.is_empty() {
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"12\">{}</text>",
            fmt(bx0 - 6.0),
            fmt(risk_y(risk_min) + 4.0),
            risk_min
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"12\">{}</text>",
            fmt(bx0 - 6.0),
            fmt(risk_y(risk_max) + 4.0),
            risk_max
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
