//! Monte Carlo check of the closed form for the S0=1, sigma=0.6, r=0.04,
//! (0.8, 1.2) market, plus a convergence ladder and the exit histogram.
//!
//! cargo run --release --example mc_validation [histogram.csv]

use rnp::mc::convergence_report;
use rnp::{mc_price, normalize_position, price_european, ExerciseStyle, FeeMode, MarketParams, McConfig, PositionSpec};

fn main() -> rnp::Result<()> {
    let pos = normalize_position(&PositionSpec::new(1.0, 0.8, 1.2))?;
    let cfg = McConfig::default();

    for (fee, mode) in [
        (0.0, FeeMode::AtClose),
        (0.2, FeeMode::AtClose),
        (0.2, FeeMode::Continuous),
    ] {
        let market = MarketParams::new(0.0, 0.6, 0.04, fee)?;
        let closed = price_european(&pos, &market, 1.0, mode)?;
        let est = mc_price(&pos, &market, 1.0, ExerciseStyle::European, mode, &cfg)?;
        println!(
            "C={fee} {mode:<10} closed {:.6}  mc {:.6} +/- {:.6}  z {:+.2}  upper {:.3} lower {:.3}  bimodal {}",
            closed.pv,
            est.mean,
            est.std_error,
            (est.mean - closed.pv) / est.std_error,
            est.upper_exit_fraction,
            est.lower_exit_fraction,
            est.is_bimodal()
        );
        if fee == 0.0 {
            if let Some(path) = std::env::args().nth(1) {
                est.exit_histogram.write_csv(std::fs::File::create(&path)?)?;
                println!("histogram written to {path}");
            }
        }
    }

    let market = MarketParams::new(0.0, 0.6, 0.04, 0.0)?;
    let ladder = [1_000, 4_000, 16_000];
    let rows = convergence_report(
        &pos,
        &market,
        1.0,
        ExerciseStyle::European,
        FeeMode::AtClose,
        &cfg,
        &ladder,
    )?;
    println!("{:>8} {:>10} {:>10} {:>10}", "paths", "mean", "std_err", "gap");
    for row in rows {
        println!(
            "{:>8} {:>10.6} {:>10.6} {:>10.6}",
            row.paths,
            row.mean,
            row.std_error,
            row.gap.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
