//! Acceptance suite: one test per criterion, each printing a single
//! `criterion N: PASS|FAIL` line with its measured runtime.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rnp::greeks::{american_greeks, european_greeks, fd_greeks};
use rnp::iv::{break_even_iv, lvr_iv, IvConfig, MarketSansSigma};
use rnp::laplace::{expected_discounted_tau, hit_lower_factor, hit_upper_factor, survival_transform};
use rnp::{
    lp_payoff_v3, mc_price, normalize_position, payoff_greeks, price_american, price_european, BumpConfig,
    ExerciseStyle, FeeMode, LogCoords, MarketParams, McConfig, NormalizedPosition, OptimizerConfig, PositionSpec,
    PricingStyle, TransformInputs,
};

fn range(l: f64, h: f64) -> NormalizedPosition {
    normalize_position(&PositionSpec::new(1.0, l, h)).unwrap()
}

fn high_fee() -> MarketParams {
    MarketParams::new(0.0, 0.7, 0.05, 0.2).unwrap()
}

fn low_fee() -> MarketParams {
    MarketParams::new(0.0, 0.4, 0.05, 0.04).unwrap()
}

fn coords(a_prime: f64, b_prime: f64, mu_prime: f64) -> LogCoords {
    LogCoords {
        x: 0.0,
        a: -a_prime,
        b: b_prime,
        a_prime,
        b_prime,
        mu_prime,
    }
}

/// Prints the verdict line and fails the test with the collected reasons.
fn report(n: u32, started: Instant, limit: Duration, mut failures: Vec<String>) {
    let elapsed = started.elapsed();
    if elapsed > limit {
        failures.push(format!("runtime {elapsed:.2?} exceeds {limit:?}"));
    }
    if failures.is_empty() {
        println!("criterion {n}: PASS ({elapsed:.2?})");
    } else {
        println!("criterion {n}: FAIL ({elapsed:.2?}): {}", failures.join("; "));
        panic!("criterion {n} failed: {}", failures.join("; "));
    }
}

fn grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
}

#[test]
fn criterion_1_laplace_identities() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut failures = Vec::new();
    for _ in 0..1000 {
        let c = coords(
            rng.gen_range(1e-3..3.0),
            rng.gen_range(1e-3..3.0),
            rng.gen_range(-2.0..2.0),
        );
        let r = rng.gen_range(0.0..2.0);
        let at_zero = TransformInputs::new(c, 0.0).unwrap();
        let f0 = survival_transform(&at_zero);
        if (f0 - 1.0).abs() > 1e-12 {
            failures.push(format!("F(0) = {f0} for {c:?}"));
        }
        let inp = TransformInputs::new(c, r).unwrap();
        let sum = hit_upper_factor(&inp) + hit_lower_factor(&inp);
        let f = survival_transform(&inp);
        if (sum - f).abs() > 1e-12 {
            failures.push(format!("upper + lower - F = {:e} for {c:?}, r = {r}", sum - f));
        }
    }
    failures.truncate(5);
    report(1, t, Duration::from_secs(1), failures);
}

#[test]
fn criterion_2_classical_limits() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut failures = Vec::new();
    for _ in 0..1000 {
        let (ap, bp) = (rng.gen_range(1e-3..3.0), rng.gen_range(1e-3..3.0));
        let inp = TransformInputs::new(coords(ap, bp, 0.0), 0.0).unwrap();
        let up = hit_upper_factor(&inp);
        let down = hit_lower_factor(&inp);
        if (up - ap / (ap + bp)).abs() > 1e-10 || (down - bp / (ap + bp)).abs() > 1e-10 {
            failures.push(format!("hit probabilities ({up}, {down}) for a'={ap}, b'={bp}"));
        }
        let tau = expected_discounted_tau(&inp);
        if ((tau - ap * bp) / (ap * bp)).abs() > 1e-6 {
            failures.push(format!("E[tau] = {tau} vs a'b' = {}", ap * bp));
        }
    }
    failures.truncate(5);
    report(2, t, Duration::from_secs(1), failures);
}

#[test]
fn criterion_3_monte_carlo_agreement() {
    let t = Instant::now();
    let pos = range(0.8, 1.2);
    let cfg = McConfig {
        paths: 100_000,
        dt: 1e-4,
        bridge_correction: true,
        ..McConfig::default()
    };
    let mut failures = Vec::new();
    for fee in [0.0, 0.2] {
        let market = MarketParams::new(0.0, 0.6, 0.04, fee).unwrap();
        for mode in [FeeMode::AtClose, FeeMode::Continuous] {
            let closed = price_european(&pos, &market, 1.0, mode).unwrap().pv;
            let est = mc_price(&pos, &market, 1.0, ExerciseStyle::European, mode, &cfg).unwrap();
            let z = (est.mean - closed) / est.std_error;
            println!(
                "  C={fee} {mode}: closed {closed:.6}, mc {:.6} +/- {:.6}, z {z:+.2}",
                est.mean, est.std_error
            );
            if z.abs() >= 3.0 {
                failures.push(format!("C={fee} {mode}: |gap| = {:.2} std errors", z.abs()));
            }
            if fee == 0.0 && !est.is_bimodal() {
                failures.push(format!("C=0 {mode}: exit histogram not bimodal"));
            }
        }
    }
    report(3, t, Duration::from_secs(60), failures);
}

#[test]
fn criterion_4_fee_bound_ordering() {
    let t = Instant::now();
    let pos = range(0.8, 1.2);
    let mut violations = 0;
    for sigma in grid(0.1, 1.5, 21) {
        let m = high_fee().with_sigma(sigma).unwrap();
        for spot in grid(0.8, 1.2, 23).skip(1).take(21) {
            let cont = price_european(&pos, &m, spot, FeeMode::Continuous).unwrap().pv;
            let close = price_european(&pos, &m, spot, FeeMode::AtClose).unwrap().pv;
            if cont < close {
                violations += 1;
            }
        }
    }
    let failures = if violations == 0 {
        vec![]
    } else {
        vec![format!("{violations} violations")]
    };
    report(4, t, Duration::from_secs(5), failures);
}

#[test]
fn criterion_5_american_dominance() {
    let t = Instant::now();
    let pos = range(0.8, 1.2);
    let cfg = OptimizerConfig::default();
    let mut failures = Vec::new();
    for (name, m) in [("high fee", high_fee()), ("low fee", low_fee())] {
        for spot in grid(0.8, 1.2, 103).skip(1).take(101) {
            let amer = price_american(&pos, &m, spot, FeeMode::AtClose, &cfg).unwrap().pv;
            let euro = price_european(&pos, &m, spot, FeeMode::AtClose).unwrap().pv;
            let pay = lp_payoff_v3(spot, &pos).unwrap();
            if amer < euro.max(pay) - 1e-9 {
                failures.push(format!("{name} spot {spot}: american {amer} < max({euro}, {pay})"));
            }
        }
        let pay = lp_payoff_v3(1.0, &pos).unwrap();
        if (pay - 1.0).abs() > 5e-4 {
            failures.push(format!("{name}: payoff pv at p=1 is {pay}, not 1.000"));
        }
        for mode in [FeeMode::AtClose, FeeMode::Continuous] {
            let amer = price_american(&pos, &m, 1.0, mode, &cfg).unwrap();
            let euro = price_european(&pos, &m, 1.0, mode).unwrap();
            println!(
                "  {name} {mode}: american {:.6} at {:?}, european {:.6}",
                amer.pv,
                amer.boundaries().unwrap(),
                euro.pv
            );
            if amer.pv <= euro.pv {
                failures.push(format!(
                    "{name} {mode}: american {:.6} not > european {:.6}",
                    amer.pv, euro.pv
                ));
            }
        }
    }
    report(5, t, Duration::from_secs(30), failures);
}

#[test]
fn criterion_6_greeks_consistency() {
    let t = Instant::now();
    let pos = range(0.8, 1.2);
    let bump = BumpConfig::default();
    let mut failures = Vec::new();

    for p in [0.85, 0.9, 1.0, 1.1, 1.15] {
        let exact = payoff_greeks(p, &pos).unwrap();
        let payoff = |x: f64, _: f64, _: f64| lp_payoff_v3(x, &pos);
        let fd = fd_greeks(payoff, p, 0.5, 0.05, Some((pos.lower(), pos.upper())), &bump).unwrap();
        if (fd.delta - exact.delta).abs() > 1e-5 || (fd.gamma - exact.gamma).abs() > 1e-5 {
            failures.push(format!(
                "payoff p={p}: fd ({}, {}) vs exact ({}, {})",
                fd.delta, fd.gamma, exact.delta, exact.gamma
            ));
        }
    }

    for m in [high_fee(), low_fee()] {
        for p in [0.9, 1.0, 1.1] {
            let k = 1e-3 * p;
            let g = european_greeks(&pos, &m, p, FeeMode::AtClose, &bump).unwrap();
            let up = european_greeks(&pos, &m, p + k, FeeMode::AtClose, &bump).unwrap();
            let down = european_greeks(&pos, &m, p - k, FeeMode::AtClose, &bump).unwrap();
            let from_delta = (up.delta - down.delta) / (2.0 * k);
            if ((g.gamma - from_delta) / g.gamma).abs() > 1e-4 {
                failures.push(format!("european p={p}: gamma {} vs d(delta) {}", g.gamma, from_delta));
            }
        }
    }

    let opt = OptimizerConfig::default();
    for m in [high_fee(), low_fee()] {
        for p in [0.9, 1.0] {
            let first = american_greeks(&pos, &m, p, FeeMode::AtClose, &bump, &opt).unwrap();
            let second = american_greeks(&pos, &m, p, FeeMode::AtClose, &bump, &opt).unwrap();
            for (a, b) in [
                (first.delta, second.delta),
                (first.gamma, second.gamma),
                (first.vega, second.vega),
            ] {
                if (a - b).abs() > 1e-6 {
                    failures.push(format!("american p={p}: rerun differs ({a} vs {b})"));
                }
            }
        }
    }
    report(6, t, Duration::from_secs(10), failures);
}

/// Interval around `s0` on which `value` is monotone, located by a fine
/// log-spaced scan over `[s0 / 2, 2 s0]`. Where V(sigma) is non-monotone the
/// same target is hit more than once; the round trip is posed on the branch
/// that contains the planted volatility.
fn monotone_branch(value: &dyn Fn(f64) -> f64, s0: f64) -> (f64, f64) {
    let n = 400;
    let at = |i: i64| s0 * 2f64.powf(i as f64 / n as f64);
    let slope = |i: i64| (value(at(i + 1)) - value(at(i))).signum();
    let rising = (value(at(1)) - value(at(-1))).signum();
    let mut hi = 0;
    while hi < n && slope(hi) == rising {
        hi += 1;
    }
    let mut lo = 0;
    while lo > -n && slope(lo - 1) == rising {
        lo -= 1;
    }
    (at(lo), at(hi))
}

#[test]
fn criterion_7_iv_round_trip() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut failures = Vec::new();
    for _ in 0..100 {
        let l = rng.gen_range(0.5..0.95);
        let h = rng.gen_range(1.05..2.0);
        let pos = range(l, h);
        let p = rng.gen_range(l + 0.2 * (1.0 - l)..1.0 + 0.8 * (h - 1.0));
        let market = MarketSansSigma {
            mu: 0.0,
            r: rng.gen_range(0.01..0.1),
            fee_annual: rng.gen_range(0.0..0.3),
        };
        let mode = if rng.gen_bool(0.5) {
            FeeMode::AtClose
        } else {
            FeeMode::Continuous
        };
        let sigma0 = rng.gen_range(0.1..2.0);
        let value = |s: f64| {
            price_european(&pos, &market.with_sigma(s).unwrap(), p, mode)
                .unwrap()
                .pv
        };
        let target = value(sigma0);
        let cfg = IvConfig {
            target_pv: target,
            bracket: monotone_branch(&value, sigma0),
            ..IvConfig::default()
        };
        match break_even_iv(&pos, &market, p, &PricingStyle::European, mode, &cfg) {
            Ok(sol) if (sol.sigma - sigma0).abs() <= 1e-6 => {}
            Ok(sol) => failures.push(format!("planted {sigma0}, recovered {}", sol.sigma)),
            Err(e) => failures.push(format!("planted {sigma0}: {e}")),
        }
    }
    let lvr = lvr_iv(0.04).unwrap();
    if lvr != 0.4 {
        failures.push(format!("lvr_iv(0.04) = {lvr}"));
    }
    failures.truncate(5);
    report(7, t, Duration::from_secs(30), failures);
}

#[test]
fn criterion_8_sweep_shapes() {
    let t = Instant::now();
    let pos = range(0.8, 1.2);
    let mut failures = Vec::new();

    let cont: Vec<f64> = [0.01, 0.02, 0.05, 0.1, 0.2]
        .iter()
        .map(|&s| {
            price_european(&pos, &high_fee().with_sigma(s).unwrap(), 1.0, FeeMode::Continuous)
                .unwrap()
                .pv
        })
        .collect();
    let rising_to_zero = cont.windows(2).all(|w| w[0] > w[1]);
    let high = price_european(&pos, &high_fee().with_sigma(1.5).unwrap(), 1.0, FeeMode::Continuous)
        .unwrap()
        .pv;
    if !rising_to_zero {
        failures.push(format!("(a) continuous pv does not rise as sigma -> 0: {cont:?}"));
    }
    let low_close = price_european(&pos, &high_fee().with_sigma(0.01).unwrap(), 1.0, FeeMode::AtClose)
        .unwrap()
        .pv;
    let mid_close = price_european(&pos, &high_fee().with_sigma(0.1).unwrap(), 1.0, FeeMode::AtClose)
        .unwrap()
        .pv;
    println!("  (a) continuous pv at sigma 0.01..0.2: {cont:?}, at 1.5: {high:.4}");
    println!("      at-close pv at sigma 0.01 / 0.1: {low_close:.4} / {mid_close:.4}");

    let m = high_fee().with_sigma(0.02).unwrap();
    for spot in grid(0.8, 1.2, 23).skip(1).take(21) {
        let c = price_european(&pos, &m, spot, FeeMode::Continuous).unwrap().pv;
        let a = price_european(&pos, &m, spot, FeeMode::AtClose).unwrap().pv;
        if c <= a {
            failures.push(format!("(b) spot {spot}: continuous {c} <= at-close {a}"));
        }
    }

    let widths: Vec<f64> = [1.1, 1.2, 1.3]
        .iter()
        .map(|&h| {
            price_european(&range(0.8, h), &high_fee(), 1.0, FeeMode::AtClose)
                .unwrap()
                .pv
        })
        .collect();
    println!("  (c) european pv for upper 1.1 / 1.2 / 1.3: {widths:?}");
    if !widths.windows(2).all(|w| w[1] > w[0]) {
        failures.push(format!("(c) european pv not increasing with width: {widths:?}"));
    }
    report(8, t, Duration::from_secs(10), failures);
}

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn rnp(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_rnp"))
        .args(args)
        .env_remove("RNP_SEED")
        .output()
        .expect("spawn rnp");
    assert!(
        out.status.success(),
        "rnp {args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf-8 output")
}

/// Compares against `tests/golden/<name>`; `RNP_UPDATE_GOLDEN=1` rewrites it.
fn check_golden(name: &str, actual: &str, failures: &mut Vec<String>) {
    let path = golden_dir().join(name);
    if std::env::var_os("RNP_UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    match std::fs::read_to_string(&path) {
        Ok(expected) if expected == actual => {}
        Ok(_) => failures.push(format!("{name} differs from golden file")),
        Err(e) => failures.push(format!("{name}: {e}")),
    }
}

#[test]
fn criterion_9_cli_contract() {
    let t = Instant::now();
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let high_fee = data.join("high_fee.json");
    let mc_check = data.join("mc_check.json");
    let positions = data.join("positions.csv");
    let mut failures = Vec::new();

    let price = ["price", "--config", high_fee.to_str().unwrap(), "--json"];
    let sweep = [
        "sweep",
        "--config",
        high_fee.to_str().unwrap(),
        "--param",
        "spot",
        "--from",
        "0.7",
        "--to",
        "1.3",
        "--steps",
        "13",
        "--models",
        "payoff,euro,amer",
        "--fee-modes",
        "continuous,at-close",
    ];
    let runs: [(&str, Vec<&str>); 3] = [
        ("price.json", price.to_vec()),
        ("sweep.csv", sweep.to_vec()),
        (
            "ingest.csv",
            vec!["ingest", "--positions", positions.to_str().unwrap(), "--r", "0.05"],
        ),
    ];
    for (name, args) in &runs {
        let first = rnp(args);
        if rnp(args) != first {
            failures.push(format!("{name}: two runs differ"));
        }
        check_golden(name, &first, &mut failures);
    }

    let mc = |threads: &str| {
        rnp(&[
            "mc",
            "--config",
            mc_check.to_str().unwrap(),
            "--seed",
            "7",
            "--json",
            "--threads",
            threads,
        ])
    };
    let mc1 = mc("1");
    if mc("1") != mc1 {
        failures.push("mc: two runs differ".into());
    }
    if mc("4") != mc1 {
        failures.push("mc: output depends on worker count".into());
    }
    let v: serde_json::Value = serde_json::from_str(&mc1).unwrap();
    if v["gap_in_std_errors"].as_f64().unwrap().abs() >= 3.0 {
        failures.push(format!("mc: gap {} std errors", v["gap_in_std_errors"]));
    }
    check_golden("mc.json", &mc1, &mut failures);

    let ingest = |threads: &str| {
        rnp(&[
            "ingest",
            "--positions",
            positions.to_str().unwrap(),
            "--r",
            "0.05",
            "--threads",
            threads,
        ])
    };
    if ingest("1") != ingest("4") {
        failures.push("ingest: output depends on worker count".into());
    }
    report(9, t, Duration::from_secs(60), failures);
}
