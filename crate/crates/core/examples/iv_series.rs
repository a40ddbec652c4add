//! Weighted break-even IV against the LVR benchmark per day, from the
//! shipped sample positions file.
//!
//! cargo run --release --example iv_series [positions.csv]

use rnp::iv::{ingest_positions, weighted_iv_series, write_iv_series, Bucket, SeriesConfig};

fn main() -> rnp::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/data/positions.csv").into());
    let ingested = ingest_positions(&path)?;
    for row in &ingested.rejected {
        eprintln!("rejected {row}");
    }
    let series = weighted_iv_series(&ingested.records, Bucket::Daily, &SeriesConfig::with_rate(0.05))?;
    write_iv_series(std::io::stdout(), &series)?;
    Ok(())
}
