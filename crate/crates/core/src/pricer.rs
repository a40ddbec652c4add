//! Present values of a range position: European (held until the price leaves
//! the range), American (optimal exit boundaries inside the range), the
//! full-range constant-product variant and volatility-dependent fee rates.
//!
//! Fees accrue at the constant rate `C_a * L_q` per unit time until exit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laplace::{self, FeeMode, TransformInputs};
use crate::model::{payoff_v3_unchecked, LogCoords, MarketParams, NormalizedPosition};

/// Exit rule of the position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "style", rename_all = "lowercase")]
pub enum ExerciseStyle {
    /// Held until the price leaves `(L, H)`.
    European,
    /// Closed the first time the unit price reaches `l1` or `l2`.
    American { l1: f64, l2: f64 },
}

/// What the dynamic-fee entry point should price.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PricingStyle {
    European,
    American(OptimizerConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PricingResult {
    pub pv: f64,
    pub lp_leg: f64,
    pub fee_leg: f64,
    pub style: ExerciseStyle,
    pub fee_mode: FeeMode,
    /// Spot already outside the live region; the payoff is paid immediately.
    pub stopped: bool,
}

impl PricingResult {
    fn stopped(value: f64, style: ExerciseStyle, fee_mode: FeeMode) -> Self {
        Self {
            pv: value,
            lp_leg: value,
            fee_leg: 0.0,
            style,
            fee_mode,
            stopped: true,
        }
    }

    fn live(lp_leg: f64, fee_leg: f64, style: ExerciseStyle, fee_mode: FeeMode) -> Self {
        Self {
            pv: lp_leg + fee_leg,
            lp_leg,
            fee_leg,
            style,
            fee_mode,
            stopped: false,
        }
    }

    /// Exit boundaries for American-style results.
    pub fn boundaries(&self) -> Option<(f64, f64)> {
        match self.style {
            ExerciseStyle::American { l1, l2 } => Some((l1, l2)),
            ExerciseStyle::European => None,
        }
    }
}

/// Settings for the exit-boundary search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// Grid points per axis of the coarse log-price search.
    pub grid_n: usize,
    /// Bracket width (in log price) at which golden-section refinement stops,
    /// and the value improvement below which coordinate sweeps stop.
    pub refine_tol: f64,
    /// Candidates are clamped to `l1 <= p (1 - margin)` and `l2 >= p (1 + margin)`.
    pub boundary_margin: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            grid_n: 64,
            refine_tol: 1e-10,
            boundary_margin: 1e-6,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_n < 8 {
            return Err(Error::Config(format!("grid_n must be >= 8 (got {})", self.grid_n)));
        }
        if !(self.refine_tol > 0.0) {
            return Err(Error::Config(format!(
                "refine_tol must be > 0 (got {})",
                self.refine_tol
            )));
        }
        if !(self.boundary_margin > 0.0 && self.boundary_margin < 1e-2) {
            return Err(Error::Config(format!(
                "boundary_margin must be in (0, 1e-2) (got {})",
                self.boundary_margin
            )));
        }
        Ok(())
    }
}

const MAX_SWEEPS: usize = 500;

/// Value of a claim paying `lo_value` / `hi_value` when the unit price first
/// reaches `lo` / `hi`, plus fees at rate `fee_scale * C_a` until then.
/// Returns `(lp_leg, fee_leg)`.
fn corridor_value(
    market: &MarketParams,
    p: f64,
    (lo, hi): (f64, f64),
    (lo_value, hi_value): (f64, f64),
    fee_scale: f64,
    mode: FeeMode,
) -> Result<(f64, f64)> {
    let coords = LogCoords::between(p, lo, hi, market)?;
    let inp = TransformInputs::new(coords, market.r())?;
    let lp = hi_value * laplace::hit_upper_factor(&inp) + lo_value * laplace::hit_lower_factor(&inp);
    let fee = laplace::fee_leg(&inp, fee_scale, market.fee_annual(), mode);
    Ok((lp, fee))
}

/// European value: the position is held until the price leaves `(L, H)`.
pub fn price_european(pos: &NormalizedPosition, market: &MarketParams, p: f64, mode: FeeMode) -> Result<PricingResult> {
    crate::error::ensure_positive("price", p)?;
    let style = ExerciseStyle::European;
    if !pos.contains(p) {
        return Ok(PricingResult::stopped(payoff_v3_unchecked(p, pos), style, mode));
    }
    let (l, h) = (pos.lower(), pos.upper());
    let (lp, fee) = corridor_value(
        market,
        p,
        (l, h),
        (payoff_v3_unchecked(l, pos), payoff_v3_unchecked(h, pos)),
        pos.liquidity(),
        mode,
    )?;
    Ok(PricingResult::live(lp, fee, style, mode))
}

/// Value of exiting the first time the price reaches `l1` or `l2`, with
/// `L <= l1 <= p <= l2 <= H`. The boundary payoffs use the position's own
/// liquidity parameter and fees accrue only until the chosen exit.
pub fn price_with_boundaries(
    pos: &NormalizedPosition,
    market: &MarketParams,
    p: f64,
    (l1, l2): (f64, f64),
    mode: FeeMode,
) -> Result<PricingResult> {
    crate::error::ensure_positive("price", p)?;
    if !pos.contains(p) {
        return Ok(PricingResult::stopped(
            payoff_v3_unchecked(p, pos),
            ExerciseStyle::American { l1, l2 },
            mode,
        ));
    }
    if !(pos.lower() <= l1 && l1 <= p && p <= l2 && l2 <= pos.upper() && l1 < l2) {
        return Err(Error::InvalidPosition(format!(
            "exit boundaries must satisfy L <= l1 <= p <= l2 <= H (L={}, l1={l1}, p={p}, l2={l2}, H={})",
            pos.lower(),
            pos.upper()
        )));
    }
    let (lp, fee) = corridor_value(
        market,
        p,
        (l1, l2),
        (payoff_v3_unchecked(l1, pos), payoff_v3_unchecked(l2, pos)),
        pos.liquidity(),
        mode,
    )?;
    Ok(PricingResult::live(lp, fee, ExerciseStyle::American { l1, l2 }, mode))
}

/// American value: the best of optimized exit boundaries, immediate exit and
/// the full-range European value.
pub fn price_american(
    pos: &NormalizedPosition,
    market: &MarketParams,
    p: f64,
    mode: FeeMode,
    cfg: &OptimizerConfig,
) -> Result<PricingResult> {
    crate::error::ensure_positive("price", p)?;
    cfg.validate()?;
    if !pos.contains(p) {
        return Ok(PricingResult::stopped(
            payoff_v3_unchecked(p, pos),
            ExerciseStyle::American {
                l1: pos.lower(),
                l2: pos.upper(),
            },
            mode,
        ));
    }
    let objective = |l1: f64, l2: f64| -> f64 {
        price_with_boundaries(pos, market, p, (l1, l2), mode)
            .map(|r| r.pv)
            .unwrap_or(f64::NEG_INFINITY)
    };
    let found = optimize_boundaries(objective, p, (pos.lower(), pos.upper()), cfg)?;

    let mut best = price_with_boundaries(pos, market, p, found, mode)?;
    let european = price_with_boundaries(pos, market, p, (pos.lower(), pos.upper()), mode)?;
    if european.pv > best.pv {
        best = european;
    }
    let immediate = payoff_v3_unchecked(p, pos);
    if immediate > best.pv {
        best = PricingResult::live(immediate, 0.0, ExerciseStyle::American { l1: p, l2: p }, mode);
    }
    Ok(best)
}

/// Exit boundaries for a full-range constant-product position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum V2Boundaries {
    /// User-supplied exit prices `0 < l1 < p < l2`.
    Fixed { l1: f64, l2: f64 },
    /// Optimize `l1` over `[lower, p)` and `l2` over `(p, upper]`.
    Search { lower: f64, upper: f64 },
}

/// Full-range constant-product position closed at `l1` or `l2`.
///
/// The boundary payoffs are `sqrt(l1)`, `sqrt(l2)` and the fee multiplier is 1,
/// i.e. the fee rate is quoted directly on position value.
pub fn price_v2(
    market: &MarketParams,
    p: f64,
    boundaries: V2Boundaries,
    mode: FeeMode,
    cfg: &OptimizerConfig,
) -> Result<PricingResult> {
    crate::error::ensure_positive("price", p)?;
    let value_at = |l1: f64, l2: f64| -> Result<PricingResult> {
        let (lp, fee) = corridor_value(market, p, (l1, l2), (l1.sqrt(), l2.sqrt()), 1.0, mode)?;
        Ok(PricingResult::live(lp, fee, ExerciseStyle::American { l1, l2 }, mode))
    };
    match boundaries {
        V2Boundaries::Fixed { l1, l2 } => {
            crate::error::ensure_positive("l1", l1)?;
            if !(l1 < l2) {
                return Err(Error::InvalidPosition(format!(
                    "exit boundaries must satisfy l1 < l2 (got {l1}, {l2})"
                )));
            }
            if p <= l1 || p >= l2 {
                return Ok(PricingResult::stopped(
                    p.sqrt(),
                    ExerciseStyle::American { l1, l2 },
                    mode,
                ));
            }
            value_at(l1, l2)
        }
        V2Boundaries::Search { lower, upper } => {
            cfg.validate()?;
            crate::error::ensure_positive("search lower", lower)?;
            if !(lower < p && p < upper && upper.is_finite()) {
                return Err(Error::InvalidPosition(format!(
                    "search box must satisfy 0 < lower < p < upper (got {lower}, {p}, {upper})"
                )));
            }
            let objective = |l1: f64, l2: f64| value_at(l1, l2).map(|r| r.pv).unwrap_or(f64::NEG_INFINITY);
            let found = optimize_boundaries(objective, p, (lower, upper), cfg)?;
            let best = value_at(found.0, found.1)?;
            if p.sqrt() > best.pv {
                return Ok(PricingResult::live(
                    p.sqrt(),
                    0.0,
                    ExerciseStyle::American { l1: p, l2: p },
                    mode,
                ));
            }
            Ok(best)
        }
    }
}

/// Prices with the annual fee rate replaced by `fee_fn(sigma)`.
pub fn price_with_dynamic_fee<F>(
    pos: &NormalizedPosition,
    market: &MarketParams,
    p: f64,
    style: PricingStyle,
    mode: FeeMode,
    fee_fn: F,
) -> Result<PricingResult>
where
    F: Fn(f64) -> f64,
{
    let rate = fee_fn(market.sigma());
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(Error::Domain {
            what: "fee_fn(sigma)",
            value: rate,
        });
    }
    let market = market.with_fee(rate)?;
    match style {
        PricingStyle::European => price_european(pos, &market, p, mode),
        PricingStyle::American(cfg) => price_american(pos, &market, p, mode, &cfg),
    }
}

/// Maximizes `objective(l1, l2)` over `lo <= l1 <= p (1 - eps)` and
/// `p (1 + eps) <= l2 <= hi`: a log-spaced grid seeds coordinate-wise
/// golden-section refinement.
fn optimize_boundaries<F>(objective: F, p: f64, (lo, hi): (f64, f64), cfg: &OptimizerConfig) -> Result<(f64, f64)>
where
    F: Fn(f64, f64) -> f64,
{
    let eps = cfg.boundary_margin;
    let u1_range = (lo.ln(), (p * (1.0 - eps)).ln().max(lo.ln()));
    let u2_range = ((p * (1.0 + eps)).ln().min(hi.ln()), hi.ln());
    let f = |u1: f64, u2: f64| {
        let v = objective(u1.exp(), u2.exp());
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };

    let n = cfg.grid_n;
    let step1 = (u1_range.1 - u1_range.0) / (n - 1) as f64;
    let step2 = (u2_range.1 - u2_range.0) / (n - 1) as f64;
    let node = |range: (f64, f64), step: f64, i: usize| {
        if i == n - 1 {
            range.1
        } else {
            range.0 + step * i as f64
        }
    };

    let (mut u1, mut u2, mut best) = (u1_range.0, u2_range.1, f64::NEG_INFINITY);
    for i in 0..n {
        let c1 = node(u1_range, step1, i);
        for j in 0..n {
            let c2 = node(u2_range, step2, j);
            let v = f(c1, c2);
            if v > best {
                (u1, u2, best) = (c1, c2, v);
            }
        }
    }
    if !best.is_finite() {
        return Err(Error::Optimizer {
            message: "objective not finite anywhere on the search grid".into(),
            best,
        });
    }

    let clamp = |x: f64, r: (f64, f64)| x.max(r.0).min(r.1);
    for _ in 0..MAX_SWEEPS {
        let start = best;
        if step1 > 0.0 {
            let bracket = (clamp(u1 - step1, u1_range), clamp(u1 + step1, u1_range));
            let (c, v) = golden_max(|x| f(x, u2), bracket, cfg.refine_tol);
            if v > best {
                (u1, best) = (c, v);
            }
        }
        if step2 > 0.0 {
            let bracket = (clamp(u2 - step2, u2_range), clamp(u2 + step2, u2_range));
            let (c, v) = golden_max(|x| f(u1, x), bracket, cfg.refine_tol);
            if v > best {
                (u2, best) = (c, v);
            }
        }
        if best - start <= cfg.refine_tol {
            return Ok((u1.exp(), u2.exp()));
        }
    }
    Err(Error::Optimizer {
        message: format!("coordinate refinement exceeded {MAX_SWEEPS} sweeps"),
        best,
    })
}

/// Golden-section search for a maximum on `[a, b]`; also checks both ends.
fn golden_max<F: Fn(f64) -> f64>(f: F, (mut a, mut b): (f64, f64), tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (ends_a, ends_b) = (a, b);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let mut best = if fc >= fd { (c, fc) } else { (d, fd) };
    for x in [ends_a, ends_b] {
        let v = f(x);
        if v > best.1 {
            best = (x, v);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::lp_payoff_v3;

    fn pos() -> NormalizedPosition {
        NormalizedPosition::from_unit_bounds(0.8, 1.2).unwrap()
    }

    fn mc_market(fee: f64) -> MarketParams {
        MarketParams::new(0.0, 0.6, 0.04, fee).unwrap()
    }

    #[test]
    fn spot_above_range_is_stopped() {
        let p = pos();
        let r = price_european(&p, &mc_market(0.2), 1.2 * 1.01, FeeMode::Continuous).unwrap();
        assert!(r.stopped);
        assert_eq!(r.fee_leg, 0.0);
        assert_eq!(r.pv, p.payoff_cap());
    }

    #[test]
    fn undiscounted_driftless_mixture() {
        let p = pos();
        let sigma: f64 = 0.6;
        let m = MarketParams::new(sigma * sigma / 2.0, sigma, 0.0, 0.0).unwrap();
        let r = price_european(&p, &m, 1.0, FeeMode::AtClose).unwrap();
        let (ap, bp) = (-(0.8f64.ln()), 1.2f64.ln());
        let expected = (p.payoff_cap() * ap + lp_payoff_v3(0.8, &p).unwrap() * bp) / (ap + bp);
        assert!((r.pv - expected).abs() < 1e-12, "{} {}", r.pv, expected);
    }

    #[test]
    fn full_range_boundaries_recover_european() {
        let p = pos();
        let m = MarketParams::new(0.0, 0.7, 0.05, 0.2).unwrap();
        for mode in [FeeMode::AtClose, FeeMode::Continuous] {
            let e = price_european(&p, &m, 1.0, mode).unwrap();
            let b = price_with_boundaries(&p, &m, 1.0, (0.8, 1.2), mode).unwrap();
            assert!((e.pv - b.pv).abs() < 1e-9);
        }
    }

    #[test]
    fn collapsing_boundary_gives_immediate_exit() {
        let p = pos();
        let m = MarketParams::new(0.0, 0.7, 0.05, 0.2).unwrap();
        let spot = 1.05;
        let payoff = lp_payoff_v3(spot, &p).unwrap();
        for mode in [FeeMode::AtClose, FeeMode::Continuous] {
            let v = price_with_boundaries(&p, &m, spot, (spot * (1.0 - 1e-9), 1.2), mode).unwrap();
            assert!((v.pv - payoff).abs() < 1e-6, "{} {}", v.pv, payoff);
            let v = price_with_boundaries(&p, &m, spot, (0.8, spot * (1.0 + 1e-9)), mode).unwrap();
            assert!((v.pv - payoff).abs() < 1e-6);
        }
    }

    #[test]
    fn american_dominates() {
        let p = pos();
        let cfg = OptimizerConfig::default();
        for (fee, sigma) in [(0.2, 0.7), (0.04, 0.4)] {
            let m = MarketParams::new(0.0, sigma, 0.05, fee).unwrap();
            for mode in [FeeMode::AtClose, FeeMode::Continuous] {
                let a = price_american(&p, &m, 1.0, mode, &cfg).unwrap();
                let e = price_european(&p, &m, 1.0, mode).unwrap();
                assert!(a.pv >= e.pv - 1e-12);
                assert!(a.pv >= 1.0 - 1e-12);
                assert!((a.pv - a.lp_leg - a.fee_leg).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn v2_examples() {
        let cfg = OptimizerConfig::default();
        let sigma: f64 = 0.5;
        let m = MarketParams::new(sigma * sigma / 2.0, sigma, 0.0, 0.0).unwrap();
        let (l1, l2) = (0.5, 2.0);
        let r = price_v2(&m, 1.0, V2Boundaries::Fixed { l1, l2 }, FeeMode::AtClose, &cfg).unwrap();
        assert!((r.pv - (l1.sqrt() + l2.sqrt()) / 2.0).abs() < 1e-12);

        let m = MarketParams::new(0.0, 0.5, 0.05, 0.0).unwrap();
        let r = price_v2(&m, 1.0, V2Boundaries::Fixed { l1, l2 }, FeeMode::AtClose, &cfg).unwrap();
        assert!(r.pv < l2.sqrt());

        let r = price_v2(
            &m,
            1.0,
            V2Boundaries::Fixed { l1: 1.0 - 1e-10, l2 },
            FeeMode::AtClose,
            &cfg,
        )
        .unwrap();
        assert!((r.pv - 1.0).abs() < 1e-6);

        let r = price_v2(
            &m,
            1.0,
            V2Boundaries::Search {
                lower: 0.25,
                upper: 4.0,
            },
            FeeMode::Continuous,
            &cfg,
        )
        .unwrap();
        assert!(r.pv >= 1.0 - 1e-12);
        assert!(price_v2(
            &m,
            1.0,
            V2Boundaries::Fixed { l1: 2.0, l2: 1.5 },
            FeeMode::AtClose,
            &cfg
        )
        .is_err());
    }

    #[test]
    fn dynamic_fee_matches_static_path() {
        let p = pos();
        let m = MarketParams::new(0.0, 0.4, 0.05, 0.0).unwrap();
        let dynamic = price_with_dynamic_fee(&p, &m, 1.0, PricingStyle::European, FeeMode::AtClose, |_| 0.2).unwrap();
        let fixed = price_european(&p, &m.with_fee(0.2).unwrap(), 1.0, FeeMode::AtClose).unwrap();
        assert_eq!(dynamic, fixed);

        let dynamic = price_with_dynamic_fee(&p, &m, 1.0, PricingStyle::European, FeeMode::Continuous, |s| {
            s * s / 4.0
        })
        .unwrap();
        let fixed = price_european(&p, &m.with_fee(0.04).unwrap(), 1.0, FeeMode::Continuous).unwrap();
        assert!((dynamic.pv - fixed.pv).abs() < 1e-15);

        let err = price_with_dynamic_fee(&p, &m, 1.0, PricingStyle::European, FeeMode::AtClose, |_| -1.0);
        assert!(matches!(err, Err(Error::Domain { .. })));
    }

    #[test]
    fn optimizer_config_validation() {
        assert!(OptimizerConfig {
            grid_n: 4,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(OptimizerConfig {
            refine_tol: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(OptimizerConfig {
            boundary_margin: 0.5,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn golden_section_finds_interior_maximum() {
        let (x, v) = golden_max(|x| -(x - 0.3) * (x - 0.3), (0.0, 1.0), 1e-10);
        assert!((x - 0.3).abs() < 1e-8);
        assert!(v.abs() < 1e-15);
    }
}
