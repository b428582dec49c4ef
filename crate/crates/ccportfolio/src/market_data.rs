//! Price ingestion, return derivation, and nominal moment estimation.
//!
//! The pipeline is `CSV → PriceSeries → ReturnMatrix → MomentEstimates`.
//! Returns are simple (arithmetic) percent returns and the covariance uses the
//! population convention (divide by T, not T−1), matching the estimators the
//! downstream surrogates are calibrated against.

use std::collections::HashMap;
use std::io::Read;

use chrono::{Datelike, NaiveDate};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MarketDataError {
    #[error("csv error at line {line}: {msg}")]
    Csv { line: u64, msg: String },
    #[error("price series `{asset}` has {found} observation(s), need at least 2")]
    TooShort { asset: String, found: usize },
    #[error("dates of `{asset}` are not strictly increasing at {date}")]
    NonIncreasingDates { asset: String, date: NaiveDate },
    #[error("non-positive price {price} for `{asset}` at {date}")]
    NonPositivePrice {
        asset: String,
        date: NaiveDate,
        price: f64,
    },
    #[error("series cannot be aligned to a common period grid: {0}")]
    MisalignedSeries(String),
    #[error("sampling step must be at least 1")]
    InvalidSamplingStep,
    #[error("moment estimation needs at least 2 return periods, got {0}")]
    DegenerateSample(usize),
    #[error("invalid moments: {0}")]
    InvalidMoments(String),
}

/// Ordered price history of one asset. Construction enforces the invariants
/// (at least two observations, strictly increasing dates, positive prices),
/// so downstream code can rely on them.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    asset_id: String,
    observations: Vec<(NaiveDate, f64)>,
}

impl PriceSeries {
    pub fn new(
        asset_id: impl Into<String>,
        observations: Vec<(NaiveDate, f64)>,
    ) -> Result<Self, MarketDataError> {
        let asset_id = asset_id.into();
        if observations.len() < 2 {
            return Err(MarketDataError::TooShort {
                asset: asset_id,
                found: observations.len(),
            });
        }
        for pair in observations.windows(2) {
            if pair[1].0 <= pair[0].0 {
                return Err(MarketDataError::NonIncreasingDates {
                    asset: asset_id,
                    date: pair[1].0,
                });
            }
        }
        if let Some(&(date, price)) = observations.iter().find(|(_, p)| *p <= 0.0 || !p.is_finite())
        {
            return Err(MarketDataError::NonPositivePrice {
                asset: asset_id,
                date,
                price,
            });
        }
        Ok(Self {
            asset_id,
            observations,
        })
    }

    pub fn asset_id(&self) -> &str {
        &self.asset_id
    }

    pub fn observations(&self) -> &[(NaiveDate, f64)] {
        &self.observations
    }
}

/// Per-period simple returns in percent, one row per asset, aligned so that
/// column t is the same calendar period for every asset.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnMatrix {
    pub asset_ids: Vec<String>,
    /// n×T, entry (i, t) is the percent return of asset i over period t.
    pub returns: DMatrix<f64>,
}

/// Nominal first and second moments of the percent returns: μ⁰ and Σ.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimates {
    pub assets: Vec<String>,
    pub mu0: DVector<f64>,
    pub sigma: DMatrix<f64>,
}

impl MomentEstimates {
    /// Builds the estimates and checks the type invariants: Σ symmetric,
    /// positive semidefinite within eigenvalue tolerance, non-negative
    /// diagonal.
    pub fn new(
        assets: Vec<String>,
        mu0: DVector<f64>,
        sigma: DMatrix<f64>,
    ) -> Result<Self, MarketDataError> {
        let n = mu0.len();
        if assets.len() != n || sigma.nrows() != n || sigma.ncols() != n {
            return Err(MarketDataError::InvalidMoments(format!(
                "dimension mismatch: {} assets, mu0 length {}, sigma {}x{}",
                assets.len(),
                n,
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        let scale = sigma.amax().max(1.0);
        for i in 0..n {
            if sigma[(i, i)] < 0.0 {
                return Err(MarketDataError::InvalidMoments(format!(
                    "negative variance {} for asset {}",
                    sigma[(i, i)],
                    assets[i]
                )));
            }
            for j in (i + 1)..n {
                if (sigma[(i, j)] - sigma[(j, i)]).abs() > 1e-12 * scale {
                    return Err(MarketDataError::InvalidMoments(format!(
                        "sigma is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let eig_min = sigma
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if eig_min < -1e-9 * scale {
            return Err(MarketDataError::InvalidMoments(format!(
                "sigma is not positive semidefinite (min eigenvalue {eig_min:.3e})"
            )));
        }
        Ok(Self { assets, mu0, sigma })
    }

    pub fn n_assets(&self) -> usize {
        self.mu0.len()
    }
}

/// How raw observations are thinned into return periods.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingRule {
    /// Keep every k-th observation starting from the first (k ≥ 1).
    EveryKth(usize),
    /// Keep the last observation of each calendar quarter.
    Quarterly,
}

/// Reads a long-format price CSV (`date,asset,price`) into one series per
/// asset, ordered by first appearance. Dates must be ISO-8601 (`YYYY-MM-DD`).
pub fn parse_prices_csv<R: Read>(reader: R) -> Result<Vec<PriceSeries>, MarketDataError> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);

    let headers = csv_reader
        .headers()
        .map_err(|e| csv_error(1, e))?
        .clone();
    let expected = ["date", "asset", "price"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(MarketDataError::Csv {
            line: 1,
            msg: format!(
                "expected header `date,asset,price`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }

    let mut order: Vec<String> = Vec::new();
    let mut by_asset: HashMap<String, Vec<(NaiveDate, f64)>> = HashMap::new();
    for record in csv_reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            csv_error(line, e)
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 3 {
            return Err(MarketDataError::Csv {
                line,
                msg: format!("expected 3 fields, found {}", record.len()),
            });
        }
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d").map_err(|e| {
            MarketDataError::Csv {
                line,
                msg: format!("bad date `{}`: {e}", &record[0]),
            }
        })?;
        let asset = record[1].to_string();
        if asset.is_empty() {
            return Err(MarketDataError::Csv {
                line,
                msg: "empty asset label".into(),
            });
        }
        let price: f64 = record[2].parse().map_err(|e| MarketDataError::Csv {
            line,
            msg: format!("bad price `{}`: {e}", &record[2]),
        })?;
        if !by_asset.contains_key(&asset) {
            order.push(asset.clone());
        }
        by_asset.entry(asset).or_default().push((date, price));
    }

    order
        .into_iter()
        .map(|asset| {
            let obs = by_asset.remove(&asset).expect("asset recorded in order");
            PriceSeries::new(asset, obs)
        })
        .collect()
}

fn csv_error(line: u64, e: impl std::fmt::Display) -> MarketDataError {
    MarketDataError::Csv {
        line,
        msg: e.to_string(),
    }
}

/// Derives aligned percent returns `r_it = 100·(p_t − p_{t−1})/p_{t−1}` after
/// resampling each series by `rule`. All series must resample onto the exact
/// same date grid.
pub fn compute_returns(
    prices: &[PriceSeries],
    rule: SamplingRule,
) -> Result<ReturnMatrix, MarketDataError> {
    if prices.is_empty() {
        return Err(MarketDataError::DegenerateSample(0));
    }
    let resampled: Vec<Vec<(NaiveDate, f64)>> = prices
        .iter()
        .map(|series| resample(series.observations(), rule))
        .collect::<Result<_, _>>()?;

    let grid: Vec<NaiveDate> = resampled[0].iter().map(|&(d, _)| d).collect();
    for (series, sampled) in prices.iter().zip(&resampled) {
        let dates: Vec<NaiveDate> = sampled.iter().map(|&(d, _)| d).collect();
        if dates != grid {
            return Err(MarketDataError::MisalignedSeries(format!(
                "`{}` resamples to {} period(s) not matching `{}`",
                series.asset_id(),
                dates.len(),
                prices[0].asset_id()
            )));
        }
    }
    if grid.len() < 2 {
        return Err(MarketDataError::DegenerateSample(grid.len().saturating_sub(1)));
    }

    let n = prices.len();
    let t_count = grid.len() - 1;
    let mut returns = DMatrix::zeros(n, t_count);
    for (i, (series, sampled)) in prices.iter().zip(&resampled).enumerate() {
        for (t, pair) in sampled.windows(2).enumerate() {
            let (date, prev) = pair[0];
            if prev <= 0.0 {
                return Err(MarketDataError::NonPositivePrice {
                    asset: series.asset_id().to_string(),
                    date,
                    price: prev,
                });
            }
            returns[(i, t)] = 100.0 * (pair[1].1 - prev) / prev;
        }
    }
    Ok(ReturnMatrix {
        asset_ids: prices.iter().map(|s| s.asset_id().to_string()).collect(),
        returns,
    })
}

fn resample(
    obs: &[(NaiveDate, f64)],
    rule: SamplingRule,
) -> Result<Vec<(NaiveDate, f64)>, MarketDataError> {
    match rule {
        SamplingRule::EveryKth(0) => Err(MarketDataError::InvalidSamplingStep),
        SamplingRule::EveryKth(k) => Ok(obs.iter().copied().step_by(k).collect()),
        SamplingRule::Quarterly => {
            let mut out: Vec<(NaiveDate, f64)> = Vec::new();
            for &(date, price) in obs {
                let key = (date.year(), (date.month0() / 3) as i32);
                match out.last() {
                    Some(&(last, _)) if (last.year(), (last.month0() / 3) as i32) == key => {
                        *out.last_mut().expect("non-empty") = (date, price);
                    }
                    _ => out.push((date, price)),
                }
            }
            Ok(out)
        }
    }
}

/// Population moment estimates: `mu0[i] = (1/T)Σ_t r_it` and
/// `sigma[i][j] = (1/T)Σ_t (r_it−μ_i)(r_jt−μ_j)`.
pub fn estimate_moments(returns: &ReturnMatrix) -> Result<MomentEstimates, MarketDataError> {
    let n = returns.returns.nrows();
    let t_count = returns.returns.ncols();
    if t_count < 2 {
        return Err(MarketDataError::DegenerateSample(t_count));
    }
    let mut mu0 = DVector::zeros(n);
    for i in 0..n {
        mu0[i] = returns.returns.row(i).sum() / t_count as f64;
    }
    let mut sigma = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mut acc = 0.0;
            for t in 0..t_count {
                acc += (returns.returns[(i, t)] - mu0[i]) * (returns.returns[(j, t)] - mu0[j]);
            }
            let cov = acc / t_count as f64;
            sigma[(i, j)] = cov;
            sigma[(j, i)] = cov;
        }
    }
    MomentEstimates::new(returns.asset_ids.clone(), mu0, sigma)
}

#[derive(Serialize, Deserialize)]
struct MomentsJson {
    assets: Vec<String>,
    mu0: Vec<f64>,
    sigma: Vec<Vec<f64>>,
}

/// Serializes moments as `{ "assets": [...], "mu0": [...], "sigma": [[...]] }`
/// with full double precision.
pub fn moments_to_json(moments: &MomentEstimates) -> String {
    let doc = MomentsJson {
        assets: moments.assets.clone(),
        mu0: moments.mu0.iter().copied().collect(),
        sigma: moments
            .sigma
            .row_iter()
            .map(|row| row.iter().copied().collect())
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("moments serialize")
}

/// Parses the JSON produced by [`moments_to_json`], re-validating invariants.
pub fn moments_from_json(text: &str) -> Result<MomentEstimates, MarketDataError> {
    let doc: MomentsJson = serde_json::from_str(text)
        .map_err(|e| MarketDataError::InvalidMoments(e.to_string()))?;
    let n = doc.mu0.len();
    if doc.sigma.len() != n || doc.sigma.iter().any(|row| row.len() != n) {
        return Err(MarketDataError::InvalidMoments(
            "sigma is not n×n".to_string(),
        ));
    }
    let sigma = DMatrix::from_fn(n, n, |i, j| doc.sigma[i][j]);
    MomentEstimates::new(doc.assets, DVector::from_vec(doc.mu0), sigma)
}
