//! European value of a (0.8, 1.2) range position under both fee modes.
//!
//! cargo run --example price

use rnp::{normalize_position, price_european, FeeMode, MarketParams, PositionSpec};

fn main() -> rnp::Result<()> {
    let spec = PositionSpec::new(1.0, 0.8, 1.2);
    let pos = normalize_position(&spec)?;
    let market = MarketParams::new(0.0, 0.7, 0.05, 0.2)?;

    println!("liquidity Lq = {:.6}", pos.liquidity());
    for mode in [FeeMode::AtClose, FeeMode::Continuous] {
        for spot in [0.85, 1.0, 1.15, 1.3] {
            let res = price_european(&pos, &market, spec.unit_price(spot), mode)?;
            println!(
                "{mode:<10} spot {spot:<5} pv {:.6}  lp {:.6}  fee {:.6}{}",
                res.pv,
                res.lp_leg,
                res.fee_leg,
                if res.stopped { "  (stopped)" } else { "" }
            );
        }
    }
    Ok(())
}
