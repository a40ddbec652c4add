//! Full-range (V2) position with user-chosen and optimized exit boundaries.
//!
//! cargo run --release --example v2

use rnp::{lp_payoff_v2, price_v2, FeeMode, MarketParams, OptimizerConfig, V2Boundaries};

fn main() -> rnp::Result<()> {
    let market = MarketParams::new(0.0, 0.6, 0.04, 0.05)?;
    let cfg = OptimizerConfig::default();
    println!("hold value sqrt(p) at p=1: {:.6}", lp_payoff_v2(1.0)?);

    let fixed = price_v2(
        &market,
        1.0,
        V2Boundaries::Fixed { l1: 0.5, l2: 2.0 },
        FeeMode::AtClose,
        &cfg,
    )?;
    println!("exit at (0.5, 2.0):  pv {:.6}  fee {:.6}", fixed.pv, fixed.fee_leg);

    let best = price_v2(
        &market,
        1.0,
        V2Boundaries::Search {
            lower: 0.1,
            upper: 10.0,
        },
        FeeMode::AtClose,
        &cfg,
    )?;
    let (l1, l2) = best.boundaries().expect("american style");
    println!("optimized in (0.1, 10): pv {:.6}  exit at ({l1:.4}, {l2:.4})", best.pv);
    Ok(())
}
