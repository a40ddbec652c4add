//! Bump-and-reprice Greeks and the PV/Delta/Gamma/Vega/Rho report table.

use std::fmt::Write as _;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::laplace::FeeMode;
use crate::model::{payoff_greeks, MarketParams, NormalizedPosition};
use crate::pricer::{price_american, price_european, OptimizerConfig};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct GreekFlags {
    /// Spot sits exactly on a payoff kink.
    pub at_kink: bool,
    /// Vega and rho do not exist for this model.
    pub undefined_vega_rho: bool,
    /// A bumped point left the live region; one-sided differences were used.
    pub boundary_clipped: bool,
}

/// Sensitivities per unit of the bumped variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GreeksReport {
    pub pv: f64,
    pub delta: f64,
    pub gamma: f64,
    pub vega: f64,
    pub rho: f64,
    pub flags: GreekFlags,
}

impl GreeksReport {
    /// Delta with respect to the spot-quoted price, `delta / s0`.
    pub fn spot_delta(&self, s0: f64) -> f64 {
        self.delta / s0
    }

    /// Gamma with respect to the spot-quoted price, `gamma / s0^2`.
    pub fn spot_gamma(&self, s0: f64) -> f64 {
        self.gamma / (s0 * s0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BumpConfig {
    /// Spot bump relative to the unit price.
    pub h_spot_rel: f64,
    /// Absolute volatility bump.
    pub h_sigma: f64,
    /// Absolute rate bump.
    pub h_r: f64,
}

impl Default for BumpConfig {
    fn default() -> Self {
        Self {
            h_spot_rel: 1e-4,
            h_sigma: 1e-4,
            h_r: 1e-5,
        }
    }
}

impl BumpConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, h) in [
            ("h_spot_rel", self.h_spot_rel),
            ("h_sigma", self.h_sigma),
            ("h_r", self.h_r),
        ] {
            if !(h > 0.0 && h < 1e-2) {
                return Err(Error::Config(format!("{name} must be in (0, 1e-2) (got {h})")));
            }
        }
        Ok(())
    }
}

enum Stencil {
    Central,
    Forward,
    Backward,
}

/// First and second derivative of `f` at `x` with step `h`.
fn differentiate<F>(f: &F, x: f64, f0: f64, h: f64, stencil: Stencil, name: &'static str) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Result<f64>,
{
    let eval = |x: f64| {
        f(x).map_err(|e| Error::Bump {
            variable: name,
            value: x,
            source: Box::new(e),
        })
    };
    Ok(match stencil {
        Stencil::Central => {
            let (up, dn) = (eval(x + h)?, eval(x - h)?);
            ((up - dn) / (2.0 * h), (up - 2.0 * f0 + dn) / (h * h))
        }
        Stencil::Forward => {
            let (f1, f2) = (eval(x + h)?, eval(x + 2.0 * h)?);
            ((-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * h), (f0 - 2.0 * f1 + f2) / (h * h))
        }
        Stencil::Backward => {
            let (f1, f2) = (eval(x - h)?, eval(x - 2.0 * h)?);
            ((3.0 * f0 - 4.0 * f1 + f2) / (2.0 * h), (f0 - 2.0 * f1 + f2) / (h * h))
        }
    })
}

/// Central-difference Greeks of `model(p, sigma, r)`.
///
/// `live` is the open price interval on which the model is smooth; when a spot
/// bump would leave it, one-sided stencils are used and the report is flagged.
pub fn fd_greeks<F>(
    model: F,
    p: f64,
    sigma: f64,
    r: f64,
    live: Option<(f64, f64)>,
    cfg: &BumpConfig,
) -> Result<GreeksReport>
where
    F: Fn(f64, f64, f64) -> Result<f64>,
{
    cfg.validate()?;
    let pv = model(p, sigma, r)?;
    let mut flags = GreekFlags::default();

    let h = cfg.h_spot_rel * p;
    let spot_stencil = match live {
        Some((lo, _)) if p - h <= lo => {
            flags.boundary_clipped = true;
            Stencil::Forward
        }
        Some((_, hi)) if p + h >= hi => {
            flags.boundary_clipped = true;
            Stencil::Backward
        }
        _ => Stencil::Central,
    };
    let (delta, gamma) = differentiate(&|x| model(x, sigma, r), p, pv, h, spot_stencil, "spot")?;

    let sigma_stencil = if sigma - cfg.h_sigma <= 0.0 {
        Stencil::Forward
    } else {
        Stencil::Central
    };
    let (vega, _) = differentiate(&|s| model(p, s, r), sigma, pv, cfg.h_sigma, sigma_stencil, "sigma")?;

    let rate_stencil = if r - cfg.h_r < 0.0 {
        Stencil::Forward
    } else {
        Stencil::Central
    };
    let (rho, _) = differentiate(&|x| model(p, sigma, x), r, pv, cfg.h_r, rate_stencil, "r")?;

    Ok(GreeksReport {
        pv,
        delta,
        gamma,
        vega,
        rho,
        flags,
    })
}

/// European value as a function of `(p, sigma, r)`.
pub fn european_model(
    pos: NormalizedPosition,
    market: MarketParams,
    mode: FeeMode,
) -> impl Fn(f64, f64, f64) -> Result<f64> {
    move |p, sigma, r| {
        let m = MarketParams::new(market.mu(), sigma, r, market.fee_annual())?;
        Ok(price_european(&pos, &m, p, mode)?.pv)
    }
}

/// American value as a function of `(p, sigma, r)`; boundaries are re-optimized
/// at every bumped point.
pub fn american_model(
    pos: NormalizedPosition,
    market: MarketParams,
    mode: FeeMode,
    cfg: OptimizerConfig,
) -> impl Fn(f64, f64, f64) -> Result<f64> {
    move |p, sigma, r| {
        let m = MarketParams::new(market.mu(), sigma, r, market.fee_annual())?;
        Ok(price_american(&pos, &m, p, mode, &cfg)?.pv)
    }
}

/// Stencil limits for a live position; a stopped position is a constant in
/// sigma and r and piecewise linear in spot, so no clipping is needed.
fn live_interval(pos: &NormalizedPosition, p: f64) -> Option<(f64, f64)> {
    pos.contains(p).then(|| (pos.lower(), pos.upper()))
}

pub fn european_greeks(
    pos: &NormalizedPosition,
    market: &MarketParams,
    p: f64,
    mode: FeeMode,
    cfg: &BumpConfig,
) -> Result<GreeksReport> {
    fd_greeks(
        european_model(*pos, *market, mode),
        p,
        market.sigma(),
        market.r(),
        live_interval(pos, p),
        cfg,
    )
}

pub fn american_greeks(
    pos: &NormalizedPosition,
    market: &MarketParams,
    p: f64,
    mode: FeeMode,
    cfg: &BumpConfig,
    opt: &OptimizerConfig,
) -> Result<GreeksReport> {
    fd_greeks(
        american_model(*pos, *market, mode, *opt),
        p,
        market.sigma(),
        market.r(),
        live_interval(pos, p),
        cfg,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GreekModel {
    Payoff,
    European,
    American,
}

impl GreekModel {
    pub fn name(&self) -> &'static str {
        match self {
            GreekModel::Payoff => "Payoff",
            GreekModel::European => "European",
            GreekModel::American => "American",
        }
    }
}

#[derive(Debug, Clone)]
pub struct NamedMarket {
    pub name: String,
    pub market: MarketParams,
}

#[derive(Debug, Clone, Serialize)]
pub struct GreeksTable {
    pub title: String,
    pub rows: Vec<(GreekModel, GreeksReport)>,
}

/// Payoff, European and American rows for each market at unit price `p`.
pub fn greeks_table(
    markets: &[NamedMarket],
    pos: &NormalizedPosition,
    p: f64,
    mode: FeeMode,
    bump: &BumpConfig,
    opt: &OptimizerConfig,
) -> Result<Vec<GreeksTable>> {
    markets
        .iter()
        .map(|named| {
            let m = &named.market;
            Ok(GreeksTable {
                title: named.name.clone(),
                rows: vec![
                    (GreekModel::Payoff, payoff_greeks(p, pos)?),
                    (GreekModel::European, european_greeks(pos, m, p, mode, bump)?),
                    (GreekModel::American, american_greeks(pos, m, p, mode, bump, opt)?),
                ],
            })
        })
        .collect()
}

/// Formats a number for CSV/text output; NaN is written as `nan`.
pub fn fmt_value(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else {
        format!("{x}")
    }
}

fn fmt_cell(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else {
        format!("{x:.3}")
    }
}

/// Aligned text rendering, three decimals per cell.
pub fn render_text(tables: &[GreeksTable]) -> String {
    let mut out = String::new();
    for table in tables {
        let _ = writeln!(out, "{}", table.title);
        let _ = writeln!(
            out,
            "{:<10} {:>10} {:>10} {:>10} {:>10} {:>10}",
            "Model", "PV", "Delta", "Gamma", "Vega", "Rho"
        );
        for (model, g) in &table.rows {
            let _ = writeln!(
                out,
                "{:<10} {:>10} {:>10} {:>10} {:>10} {:>10}",
                model.name(),
                fmt_cell(g.pv),
                fmt_cell(g.delta),
                fmt_cell(g.gamma),
                fmt_cell(g.vega),
                fmt_cell(g.rho)
            );
        }
        out.push('\n');
    }
    out
}

/// CSV with header `model,pv,delta,gamma,vega,rho`. With more than one table
/// the model cell is prefixed by the table title (`title/Model`).
pub fn write_csv<W: Write>(writer: W, tables: &[GreeksTable]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["model", "pv", "delta", "gamma", "vega", "rho"])?;
    let prefixed = tables.len() > 1;
    for table in tables {
        for (model, g) in &table.rows {
            let name = if prefixed {
                format!("{}/{}", table.title, model.name())
            } else {
                model.name().to_string()
            };
            w.write_record([
                name,
                fmt_value(g.pv),
                fmt_value(g.delta),
                fmt_value(g.gamma),
                fmt_value(g.vega),
                fmt_value(g.rho),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
