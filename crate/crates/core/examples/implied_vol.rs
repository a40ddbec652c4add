//! Break-even implied volatility, a forward/inverse round trip, and the LVR
//! benchmark 2 sqrt(C).
//!
//! cargo run --release --example implied_vol

use rnp::iv::{break_even_iv, lvr_iv, IvConfig, MarketSansSigma};
use rnp::{normalize_position, price_european, FeeMode, MarketParams, PositionSpec, PricingStyle};

fn main() -> rnp::Result<()> {
    let pos = normalize_position(&PositionSpec::new(1.0, 0.8, 1.2))?;
    let market = MarketSansSigma {
        mu: 0.0,
        r: 0.05,
        fee_annual: 0.2,
    };

    for mode in [FeeMode::AtClose, FeeMode::Continuous] {
        let sol = break_even_iv(&pos, &market, 1.0, &PricingStyle::European, mode, &IvConfig::default())?;
        println!(
            "break-even {mode:<10} sigma {:.6}  multiple roots {}",
            sol.sigma, sol.multiple_roots
        );
    }

    let planted = 0.5;
    let target = price_european(
        &pos,
        &MarketParams::new(0.0, planted, 0.05, 0.2)?,
        1.0,
        FeeMode::AtClose,
    )?
    .pv;
    let cfg = IvConfig {
        target_pv: target,
        bracket: (0.3, 3.0),
        ..IvConfig::default()
    };
    let sol = break_even_iv(&pos, &market, 1.0, &PricingStyle::European, FeeMode::AtClose, &cfg)?;
    println!("round trip: planted {planted}, recovered {:.9}", sol.sigma);

    for c in [0.0, 0.04, 0.2] {
        println!("lvr iv at C={c}: {:.6}", lvr_iv(c)?);
    }
    Ok(())
}
