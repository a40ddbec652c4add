//! Implied volatility of range positions and cross-sectional IV series.
//!
//! The model IV of a position is the volatility at which its present value
//! equals a target, by default 1 (the position's cost at inception). The
//! loss-versus-rebalancing benchmark balances instantaneous fees against LVR,
//! `C = sigma^2 / 4`, giving `sigma = 2 sqrt(C)`.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, DurationRound, TimeDelta, Utc};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{ensure_nonnegative, Error, Result};
use crate::greeks::fmt_value;
use crate::laplace::FeeMode;
use crate::model::{normalize_position, MarketParams, NormalizedPosition, PositionSpec};
use crate::pricer::{price_american, price_european, PricingStyle};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IvConfig {
    /// Volatility search interval.
    pub bracket: (f64, f64),
    pub target_pv: f64,
    /// Number of log-spaced points scanned for sign changes.
    pub scan_points: usize,
    /// Bisection stops once the bracket is narrower than this and the
    /// pricing residual is below it.
    pub tol: f64,
}

impl Default for IvConfig {
    fn default() -> Self {
        Self {
            bracket: (1e-3, 10.0),
            target_pv: 1.0,
            scan_points: 64,
            tol: 1e-8,
        }
    }
}

/// Drift, rate and fee: the market without its volatility.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketSansSigma {
    pub mu: f64,
    pub r: f64,
    pub fee_annual: f64,
}

impl MarketSansSigma {
    pub fn with_sigma(&self, sigma: f64) -> Result<MarketParams> {
        MarketParams::new(self.mu, sigma, self.r, self.fee_annual)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IvSolution {
    pub sigma: f64,
    /// More than one sign change was seen on the scan; `sigma` is the smallest root.
    pub multiple_roots: bool,
    /// `V(sigma) - target_pv`.
    pub residual: f64,
}

fn model_pv(
    pos: &NormalizedPosition,
    market: &MarketSansSigma,
    p: f64,
    style: &PricingStyle,
    mode: FeeMode,
    sigma: f64,
) -> Result<f64> {
    let m = market.with_sigma(sigma)?;
    Ok(match style {
        PricingStyle::European => price_european(pos, &m, p, mode)?.pv,
        PricingStyle::American(cfg) => price_american(pos, &m, p, mode, cfg)?.pv,
    })
}

/// Volatility at which the model value equals `cfg.target_pv`.
pub fn break_even_iv(
    pos: &NormalizedPosition,
    market: &MarketSansSigma,
    p: f64,
    style: &PricingStyle,
    mode: FeeMode,
    cfg: &IvConfig,
) -> Result<IvSolution> {
    let (lo, hi) = cfg.bracket;
    if !(lo > 0.0 && lo < hi && hi.is_finite()) {
        return Err(Error::Config(format!(
            "volatility bracket must satisfy 0 < lo < hi (got {lo}, {hi})"
        )));
    }
    if cfg.scan_points < 2 {
        return Err(Error::Config("scan_points must be >= 2".into()));
    }
    let excess = |s: f64| model_pv(pos, market, p, style, mode, s).map(|v| v - cfg.target_pv);

    let n = cfg.scan_points;
    let ratio = (hi / lo).ln() / (n - 1) as f64;
    let grid: Vec<f64> = (0..n)
        .map(|i| if i == n - 1 { hi } else { lo * (ratio * i as f64).exp() })
        .collect();
    let values = grid.iter().map(|&s| excess(s)).collect::<Result<Vec<_>>>()?;

    let mut crossings = Vec::new();
    for i in 0..n - 1 {
        if values[i] == 0.0 {
            crossings.push((i, i));
        } else if values[i].signum() != values[i + 1].signum() && values[i + 1] != 0.0 {
            crossings.push((i, i + 1));
        }
    }
    if values[n - 1] == 0.0 {
        crossings.push((n - 1, n - 1));
    }
    let Some(&(i, j)) = crossings.first() else {
        return Err(Error::NoRoot {
            sigma_lo: lo,
            sigma_hi: hi,
            excess_lo: values[0],
            excess_hi: values[n - 1],
        });
    };
    let multiple_roots = crossings.len() > 1;
    if i == j {
        return Ok(IvSolution {
            sigma: grid[i],
            multiple_roots,
            residual: 0.0,
        });
    }

    let (mut a, mut b) = (grid[i], grid[j]);
    let mut fa = values[i];
    let mut mid = 0.5 * (a + b);
    let mut fm = excess(mid)?;
    for _ in 0..200 {
        if (b - a) < cfg.tol && fm.abs() < cfg.tol {
            break;
        }
        if fm == 0.0 {
            break;
        }
        if fa.signum() == fm.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
        let next = 0.5 * (a + b);
        if next == mid {
            break;
        }
        mid = next;
        fm = excess(mid)?;
    }
    Ok(IvSolution {
        sigma: mid,
        multiple_roots,
        residual: fm,
    })
}

/// Volatility implied by balancing fees against loss-versus-rebalancing: `2 sqrt(C)`.
pub fn lvr_iv(fee_rate: f64) -> Result<f64> {
    ensure_nonnegative("fee rate", fee_rate)?;
    Ok(2.0 * fee_rate.sqrt())
}

/// One row of `positions.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositionRecord {
    pub timestamp: DateTime<Utc>,
    pub pool_id: String,
    pub lower_price: f64,
    pub upper_price: f64,
    pub spot_price: f64,
    /// Annualized fee income on position value.
    pub fee_apr: f64,
    /// Position value in quote units.
    pub weight: f64,
}

impl PositionRecord {
    pub fn normalized(&self) -> Result<NormalizedPosition> {
        normalize_position(&PositionSpec::new(self.spot_price, self.lower_price, self.upper_price))
    }
}

pub const POSITION_COLUMNS: [&str; 7] = [
    "timestamp",
    "pool_id",
    "lower_price",
    "upper_price",
    "spot_price",
    "fee_apr",
    "weight",
];

/// A rejected input row, by 1-based line number in the file.
#[derive(Debug, Clone, PartialEq)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

impl std::fmt::Display for RowError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub records: Vec<PositionRecord>,
    pub rejected: Vec<RowError>,
}

pub fn ingest_positions(path: impl AsRef<Path>) -> Result<Ingested> {
    read_positions(std::fs::File::open(path)?)
}

/// Parses positions CSV; invalid rows are reported and skipped.
pub fn read_positions<R: Read>(reader: R) -> Result<Ingested> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut index = [0usize; 7];
    for (slot, name) in index.iter_mut().zip(POSITION_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))?;
    }

    let mut records = Vec::new();
    let mut rejected = Vec::new();
    for row in rdr.records() {
        let row = match row {
            Ok(row) => row,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                rejected.push(RowError {
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let line = row.position().map_or(0, |p| p.line());
        match parse_row(&row, &index) {
            Ok(rec) => records.push(rec),
            Err(message) => rejected.push(RowError { line, message }),
        }
    }
    if records.is_empty() {
        return Err(Error::NoValidRows {
            rejected: rejected.len(),
        });
    }
    Ok(Ingested { records, rejected })
}

fn parse_row(row: &csv::StringRecord, index: &[usize; 7]) -> std::result::Result<PositionRecord, String> {
    let field = |k: usize| {
        row.get(index[k])
            .map(str::trim)
            .ok_or_else(|| format!("missing field `{}`", POSITION_COLUMNS[k]))
    };
    let number = |k: usize| -> std::result::Result<f64, String> {
        let raw = field(k)?;
        let v: f64 = raw
            .parse()
            .map_err(|_| format!("non-numeric {} `{raw}`", POSITION_COLUMNS[k]))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("non-finite {} `{raw}`", POSITION_COLUMNS[k]))
        }
    };
    let raw_ts = field(0)?;
    let timestamp = DateTime::parse_from_rfc3339(raw_ts)
        .map_err(|e| format!("bad timestamp `{raw_ts}`: {e}"))?
        .with_timezone(&Utc);
    let rec = PositionRecord {
        timestamp,
        pool_id: field(1)?.to_string(),
        lower_price: number(2)?,
        upper_price: number(3)?,
        spot_price: number(4)?,
        fee_apr: number(5)?,
        weight: number(6)?,
    };
    if !(rec.lower_price > 0.0) {
        return Err(format!("lower_price must be > 0 (got {})", rec.lower_price));
    }
    if rec.lower_price >= rec.spot_price {
        return Err(format!(
            "lower_price must be < spot_price ({} >= {})",
            rec.lower_price, rec.spot_price
        ));
    }
    if rec.spot_price >= rec.upper_price {
        return Err(format!(
            "spot_price must be < upper_price ({} >= {})",
            rec.spot_price, rec.upper_price
        ));
    }
    if rec.fee_apr < 0.0 {
        return Err(format!("fee_apr must be >= 0 (got {})", rec.fee_apr));
    }
    if !(rec.weight > 0.0) {
        return Err(format!("weight must be > 0 (got {})", rec.weight));
    }
    Ok(rec)
}

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

/// Writes records back in the `positions.csv` layout.
pub fn write_positions<W: Write>(writer: W, records: &[PositionRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(POSITION_COLUMNS)?;
    for r in records {
        w.write_record([
            format_timestamp(&r.timestamp),
            r.pool_id.clone(),
            fmt_value(r.lower_price),
            fmt_value(r.upper_price),
            fmt_value(r.spot_price),
            fmt_value(r.fee_apr),
            fmt_value(r.weight),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bucket {
    Daily,
    Hourly,
}

impl Bucket {
    pub fn start_of(&self, t: &DateTime<Utc>) -> DateTime<Utc> {
        let width = match self {
            Bucket::Daily => TimeDelta::days(1),
            Bucket::Hourly => TimeDelta::hours(1),
        };
        t.duration_trunc(width).expect("bucket width fits any UTC timestamp")
    }
}

impl std::str::FromStr for Bucket {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "daily" => Ok(Bucket::Daily),
            "hourly" => Ok(Bucket::Hourly),
            other => Err(format!("unknown bucket `{other}` (expected daily|hourly)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesConfig {
    pub r: f64,
    pub mu: f64,
    pub mode: FeeMode,
    pub style: PricingStyle,
    pub iv: IvConfig,
}

impl SeriesConfig {
    /// European, at-close fees, zero drift, break-even target 1.
    pub fn with_rate(r: f64) -> Self {
        Self {
            r,
            mu: 0.0,
            mode: FeeMode::AtClose,
            style: PricingStyle::European,
            iv: IvConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IvPoint {
    pub bucket_start: DateTime<Utc>,
    /// Records in the bucket that produced a model IV.
    pub n_positions: usize,
    /// Records in the bucket without a root on the bracket.
    pub n_unsolved: usize,
    pub weighted_iv: Option<f64>,
    pub lvr_iv: Option<f64>,
    /// Weighted mean fee rate over every record in the bucket.
    pub mean_fee_apr: f64,
}

/// Per-record break-even IV of one position (unit spot, inception value 1).
pub fn record_iv(record: &PositionRecord, cfg: &SeriesConfig) -> Result<IvSolution> {
    let pos = record.normalized()?;
    let market = MarketSansSigma {
        mu: cfg.mu,
        r: cfg.r,
        fee_annual: record.fee_apr,
    };
    break_even_iv(&pos, &market, 1.0, &cfg.style, cfg.mode, &cfg.iv)
}

/// Weighted model IV and weighted LVR IV per time bucket.
///
/// Both IV columns average over the same records: those whose model IV
/// exists. The LVR column is the weighted mean of per-record `2 sqrt(C)`.
pub fn weighted_iv_series(records: &[PositionRecord], bucket: Bucket, cfg: &SeriesConfig) -> Result<Vec<IvPoint>> {
    if records.is_empty() {
        return Err(Error::NoValidRows { rejected: 0 });
    }
    let solved: Vec<Option<f64>> = records
        .par_iter()
        .map(|r| record_iv(r, cfg).ok().map(|s| s.sigma))
        .collect();

    let mut buckets: BTreeMap<DateTime<Utc>, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        buckets.entry(bucket.start_of(&r.timestamp)).or_default().push(i);
    }

    buckets
        .into_iter()
        .map(|(start, members)| {
            let total_w: f64 = members.iter().map(|&i| records[i].weight).sum();
            let mean_fee_apr = members
                .iter()
                .map(|&i| records[i].weight * records[i].fee_apr)
                .sum::<f64>()
                / total_w;
            let (mut w, mut wiv, mut wlvr, mut n) = (0.0, 0.0, 0.0, 0usize);
            for &i in &members {
                if let Some(sigma) = solved[i] {
                    let rec = &records[i];
                    w += rec.weight;
                    wiv += rec.weight * sigma;
                    wlvr += rec.weight * lvr_iv(rec.fee_apr)?;
                    n += 1;
                }
            }
            let (weighted_iv, lvr) = if n > 0 {
                (Some(wiv / w), Some(wlvr / w))
            } else {
                (None, None)
            };
            Ok(IvPoint {
                bucket_start: start,
                n_positions: n,
                n_unsolved: members.len() - n,
                weighted_iv,
                lvr_iv: lvr,
                mean_fee_apr,
            })
        })
        .collect()
}

/// CSV with header `bucket_start,n_positions,weighted_iv,lvr_iv,mean_fee_apr`;
/// buckets without a solvable record leave the IV cells empty.
pub fn write_iv_series<W: Write>(writer: W, points: &[IvPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["bucket_start", "n_positions", "weighted_iv", "lvr_iv", "mean_fee_apr"])?;
    let opt = |x: Option<f64>| x.map(fmt_value).unwrap_or_default();
    for p in points {
        w.write_record([
            format_timestamp(&p.bucket_start),
            p.n_positions.to_string(),
            opt(p.weighted_iv),
            opt(p.lvr_iv),
            fmt_value(p.mean_fee_apr),
        ])?;
    }
    w.flush()?;
    Ok(())
}
