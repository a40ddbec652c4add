//! Optimal exit boundaries for a high-fee and a low-fee market.
//!
//! cargo run --release --example american

use rnp::{normalize_position, price_american, price_european, FeeMode, MarketParams, OptimizerConfig, PositionSpec};

fn main() -> rnp::Result<()> {
    let pos = normalize_position(&PositionSpec::new(1.0, 0.8, 1.2))?;
    let cfg = OptimizerConfig::default();
    let sets = [
        ("C=0.2 r=0.05 sigma=0.7", MarketParams::new(0.0, 0.7, 0.05, 0.2)?),
        ("C=0.04 r=0.05 sigma=0.4", MarketParams::new(0.0, 0.4, 0.05, 0.04)?),
    ];
    for (name, market) in sets {
        let euro = price_european(&pos, &market, 1.0, FeeMode::AtClose)?;
        let amer = price_american(&pos, &market, 1.0, FeeMode::AtClose, &cfg)?;
        let (l1, l2) = amer.boundaries().expect("american style");
        println!("{name}");
        println!("  european  {:.6}", euro.pv);
        println!("  american  {:.6}  exit at ({l1:.4}, {l2:.4})", amer.pv);
        if l1 == l2 {
            println!("  immediate exit is optimal");
        }
    }
    Ok(())
}
