//! Payoff / European / American Greeks for two markets, printed as an
//! aligned table and written as `greeks.csv`.
//!
//! cargo run --release --example greeks_tables [greeks.csv]

use rnp::greeks::{greeks_table, render_text, write_csv, NamedMarket};
use rnp::{normalize_position, BumpConfig, FeeMode, MarketParams, OptimizerConfig, PositionSpec};

fn main() -> rnp::Result<()> {
    let pos = normalize_position(&PositionSpec::new(1.0, 0.8, 1.2))?;
    let markets = [
        NamedMarket {
            name: "C=0.2 r=0.05 sigma=0.7".into(),
            market: MarketParams::new(0.0, 0.7, 0.05, 0.2)?,
        },
        NamedMarket {
            name: "C=0.04 r=0.05 sigma=0.4".into(),
            market: MarketParams::new(0.0, 0.4, 0.05, 0.04)?,
        },
    ];
    let tables = greeks_table(
        &markets,
        &pos,
        1.0,
        FeeMode::AtClose,
        &BumpConfig::default(),
        &OptimizerConfig::default(),
    )?;
    print!("{}", render_text(&tables));
    let path = std::env::args().nth(1).unwrap_or_else(|| "greeks.csv".into());
    write_csv(std::fs::File::create(&path)?, &tables)?;
    println!("csv written to {path}");
    Ok(())
}
