//! Fee rate as a function of volatility, here the LVR balance C = sigma^2/4.
//!
//! cargo run --example dynamic_fee

use rnp::{normalize_position, price_with_dynamic_fee, FeeMode, MarketParams, PositionSpec, PricingStyle};

fn main() -> rnp::Result<()> {
    let pos = normalize_position(&PositionSpec::new(1.0, 0.8, 1.2))?;
    for sigma in [0.2, 0.4, 0.7, 1.0] {
        let market = MarketParams::new(0.0, sigma, 0.05, 0.0)?;
        let res = price_with_dynamic_fee(&pos, &market, 1.0, PricingStyle::European, FeeMode::AtClose, |s| {
            s * s / 4.0
        })?;
        println!(
            "sigma {sigma:<4} fee {:.4}  pv {:.6}  fee leg {:.6}",
            sigma * sigma / 4.0,
            res.pv,
            res.fee_leg
        );
    }
    Ok(())
}
