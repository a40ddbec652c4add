//! Plot-ready CSV: value and Greeks against spot for three ranges, and value
//! against sigma under both fee modes.
//!
//! cargo run --release --example sweeps [out_dir]

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use rnp::greeks::european_greeks;
use rnp::{normalize_position, payoff_greeks, BumpConfig, FeeMode, MarketParams, PositionSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| ".".into()));
    let bump = BumpConfig::default();

    let mut out = BufWriter::new(File::create(dir.join("spot_sweep.csv"))?);
    writeln!(out, "upper,spot,model,pv,delta,gamma,vega,rho")?;
    let market = MarketParams::new(0.0, 0.7, 0.05, 0.2)?;
    for upper in [1.1, 1.2, 1.3] {
        let pos = normalize_position(&PositionSpec::new(1.0, 0.8, upper))?;
        for i in 0..=100 {
            let spot = 0.6 + 0.9 * i as f64 / 100.0;
            let pay = payoff_greeks(spot, &pos)?;
            let euro = european_greeks(&pos, &market, spot, FeeMode::AtClose, &bump)?;
            for (name, g) in [("payoff", pay), ("euro", euro)] {
                writeln!(
                    out,
                    "{upper},{spot},{name},{},{},{},{},{}",
                    g.pv, g.delta, g.gamma, g.vega, g.rho
                )?;
            }
        }
    }
    out.flush()?;

    let mut out = BufWriter::new(File::create(dir.join("sigma_sweep.csv"))?);
    writeln!(out, "sigma,fee_mode,pv")?;
    let pos = normalize_position(&PositionSpec::new(1.0, 0.8, 1.2))?;
    for i in 1..=150 {
        let sigma = 0.01 * i as f64;
        let market = MarketParams::new(0.0, sigma, 0.05, 0.2)?;
        for mode in [FeeMode::Continuous, FeeMode::AtClose] {
            let pv = rnp::price_european(&pos, &market, 1.0, mode)?.pv;
            writeln!(out, "{sigma},{mode},{pv}")?;
        }
    }
    out.flush()?;
    println!("wrote spot_sweep.csv and sigma_sweep.csv to {}", dir.display());
    Ok(())
}
