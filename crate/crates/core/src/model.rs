//! Market and position parameters, unit-price normalization and the LP payoff.
//!
//! Every price handled past this module is a unit price `p = S / S0`, so a
//! freshly opened position is worth exactly 1.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_nonnegative, ensure_positive, Error, Result};
use crate::greeks::{GreekFlags, GreeksReport};

/// Drift, volatility, discount rate and annual fee rate of the pool.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    mu: f64,
    sigma: f64,
    r: f64,
    fee_annual: f64,
}

impl MarketParams {
    pub fn new(mu: f64, sigma: f64, r: f64, fee_annual: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::Domain { what: "mu", value: mu });
        }
        ensure_positive("sigma", sigma)?;
        ensure_nonnegative("r", r)?;
        ensure_nonnegative("fee_annual", fee_annual)?;
        Ok(Self {
            mu,
            sigma,
            r,
            fee_annual,
        })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    /// Annual rebate rate `C_a`.
    pub fn fee_annual(&self) -> f64 {
        self.fee_annual
    }

    /// Daily rebate rate, `C_a / 365`.
    pub fn fee_daily(&self) -> f64 {
        self.fee_annual / 365.0
    }

    /// Risk-adjusted drift of the normalized log price, `mu / sigma - sigma / 2`.
    pub fn log_drift(&self) -> f64 {
        self.mu / self.sigma - self.sigma / 2.0
    }

    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        Self::new(self.mu, sigma, self.r, self.fee_annual)
    }

    pub fn with_rate(&self, r: f64) -> Result<Self> {
        Self::new(self.mu, self.sigma, r, self.fee_annual)
    }

    pub fn with_fee(&self, fee_annual: f64) -> Result<Self> {
        Self::new(self.mu, self.sigma, self.r, fee_annual)
    }
}

/// A range position quoted in spot units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionSpec {
    /// Price at inception.
    pub s0: f64,
    pub s_low: f64,
    pub s_high: f64,
}

impl PositionSpec {
    pub fn new(s0: f64, s_low: f64, s_high: f64) -> Self {
        Self { s0, s_low, s_high }
    }

    /// Converts a spot-denominated price to a unit price.
    pub fn unit_price(&self, spot: f64) -> f64 {
        spot / self.s0
    }
}

/// Unit bounds `L = S_L / S0`, `H = S_H / S0` and the liquidity parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormalizedPosition {
    l: f64,
    h: f64,
    lq: f64,
}

impl NormalizedPosition {
    /// Builds a position directly from unit bounds.
    pub fn from_unit_bounds(l: f64, h: f64) -> Result<Self> {
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::InvalidPosition(format!("lower must be > 0 (got {l})")));
        }
        if !h.is_finite() {
            return Err(Error::InvalidPosition(format!("upper must be finite (got {h})")));
        }
        if l >= 1.0 {
            return Err(Error::InvalidPosition(format!(
                "lower must be < spot (unit lower bound {l} >= 1)"
            )));
        }
        if h <= 1.0 {
            return Err(Error::InvalidPosition(format!(
                "upper must be > spot (unit upper bound {h} <= 1)"
            )));
        }
        let lq = 1.0 / (2.0 - l.sqrt() - 1.0 / h.sqrt());
        Ok(Self { l, h, lq })
    }

    pub fn lower(&self) -> f64 {
        self.l
    }

    pub fn upper(&self) -> f64 {
        self.h
    }

    /// Liquidity parameter `L_q = 1 / (2 - sqrt(L) - 1/sqrt(H))`.
    pub fn liquidity(&self) -> f64 {
        self.lq
    }

    /// Maximum attainable payoff, reached for every `p >= H`.
    pub fn payoff_cap(&self) -> f64 {
        self.lq * (self.h.sqrt() - self.l.sqrt())
    }

    pub fn contains(&self, p: f64) -> bool {
        self.l < p && p < self.h
    }
}

/// Normalizes a spot-quoted position to unit bounds.
pub fn normalize_position(spec: &PositionSpec) -> Result<NormalizedPosition> {
    let PositionSpec { s0, s_low, s_high } = *spec;
    if !(s0 > 0.0 && s0.is_finite()) {
        return Err(Error::InvalidPosition(format!("spot must be > 0 (got {s0})")));
    }
    if !(s_low > 0.0) {
        return Err(Error::InvalidPosition(format!("lower must be > 0 (got {s_low})")));
    }
    if s_low >= s0 {
        return Err(Error::InvalidPosition(format!(
            "lower must be < spot ({s_low} >= {s0})"
        )));
    }
    if s0 >= s_high {
        return Err(Error::InvalidPosition(format!(
            "upper must be > spot ({s_high} <= {s0})"
        )));
    }
    NormalizedPosition::from_unit_bounds(s_low / s0, s_high / s0)
}

/// Normalized log-price coordinates used by every closed form.
///
/// `x`, `a`, `b` are log prices divided by sigma; `a_prime = x - a` and
/// `b_prime = b - x` are the distances to the lower and upper barrier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogCoords {
    pub x: f64,
    pub a: f64,
    pub b: f64,
    pub a_prime: f64,
    pub b_prime: f64,
    pub mu_prime: f64,
}

impl LogCoords {
    /// Coordinates of unit price `p` against an arbitrary pair of barriers.
    pub fn between(p: f64, lower: f64, upper: f64, market: &MarketParams) -> Result<Self> {
        ensure_positive("price", p)?;
        ensure_positive("lower barrier", lower)?;
        ensure_positive("upper barrier", upper)?;
        let sigma = market.sigma();
        let x = p.ln() / sigma;
        let a = lower.ln() / sigma;
        let b = upper.ln() / sigma;
        Ok(Self {
            x,
            a,
            b,
            a_prime: x - a,
            b_prime: b - x,
            mu_prime: market.log_drift(),
        })
    }

    /// Width of the corridor, `b - a`.
    pub fn width(&self) -> f64 {
        self.b - self.a
    }

    pub fn is_live(&self) -> bool {
        self.a < self.x && self.x < self.b
    }
}

/// Coordinates of unit price `p` inside the position's range.
pub fn log_coords(p: f64, pos: &NormalizedPosition, market: &MarketParams) -> Result<LogCoords> {
    LogCoords::between(p, pos.lower(), pos.upper(), market)
}

/// Value of the concentrated position at unit price `p`; equals 1 at `p = 1`.
pub fn lp_payoff_v3(p: f64, pos: &NormalizedPosition) -> Result<f64> {
    ensure_positive("price", p)?;
    Ok(payoff_v3_unchecked(p, pos))
}

pub(crate) fn payoff_v3_unchecked(p: f64, pos: &NormalizedPosition) -> f64 {
    let (l, h, lq) = (pos.l, pos.h, pos.lq);
    if p <= l {
        lq * p * (1.0 / l.sqrt() - 1.0 / h.sqrt())
    } else if p < h {
        lq * (2.0 * p.sqrt() - l.sqrt() - p / h.sqrt())
    } else {
        lq * (h.sqrt() - l.sqrt())
    }
}

/// Value of a full-range constant-product position at unit price `p`: `sqrt(p)`.
pub fn lp_payoff_v2(p: f64) -> Result<f64> {
    ensure_positive("price", p)?;
    Ok(p.sqrt())
}

/// Analytic delta and gamma of the payoff. Vega and rho are undefined (NaN).
///
/// Exactly at `L` or `H` the interior formula is used and the report is
/// flagged `at_kink`.
pub fn payoff_greeks(p: f64, pos: &NormalizedPosition) -> Result<GreeksReport> {
    let pv = lp_payoff_v3(p, pos)?;
    let (l, h, lq) = (pos.l, pos.h, pos.lq);
    let at_kink = p == l || p == h;
    let (delta, gamma) = if p < l {
        (lq * (1.0 / l.sqrt() - 1.0 / h.sqrt()), 0.0)
    } else if p <= h {
        (lq * (1.0 / p.sqrt() - 1.0 / h.sqrt()), -lq / (2.0 * p * p.sqrt()))
    } else {
        (0.0, 0.0)
    };
    Ok(GreeksReport {
        pv,
        delta,
        gamma,
        vega: f64::NAN,
        rho: f64::NAN,
        flags: GreekFlags {
            at_kink,
            undefined_vega_rho: true,
            boundary_clipped: false,
        },
    })
}
