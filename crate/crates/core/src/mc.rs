//! Monte Carlo first-passage oracle for the closed-form prices.
//!
//! Paths of the log unit price are simulated with exact GBM increments on a
//! fixed step. Between steps a Brownian-bridge test catches barrier crossings
//! that the discrete path misses. Each path draws from its own ChaCha8 stream
//! (seeded with `seed`, stream id = path index), and path results are reduced
//! in index order, so an estimate depends only on the configuration and not on
//! how many worker threads ran it.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laplace::FeeMode;
use crate::model::{payoff_v3_unchecked, MarketParams, NormalizedPosition};
use crate::pricer::{price_european, price_with_boundaries, ExerciseStyle};

/// Bridge crossing probabilities below `exp(-BRIDGE_CUTOFF)` are treated as zero.
const BRIDGE_CUTOFF: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub paths: usize,
    /// Step size in years.
    pub dt: f64,
    /// Paths still alive at this horizon are settled at the current price.
    pub t_max: f64,
    pub seed: u64,
    pub bridge_correction: bool,
    pub histogram_bins: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            paths: 100_000,
            dt: 1e-4,
            t_max: 100.0,
            seed: 7,
            bridge_correction: true,
            histogram_bins: 64,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.paths < 1 {
            return Err(Error::Config("paths must be >= 1".into()));
        }
        if !(self.dt > 0.0 && self.dt <= 1e-2) {
            return Err(Error::Config(format!("dt must be in (0, 1e-2] (got {})", self.dt)));
        }
        if !(self.t_max >= 1.0 && self.t_max.is_finite()) {
            return Err(Error::Config(format!("t_max must be >= 1 (got {})", self.t_max)));
        }
        if self.histogram_bins < 1 {
            return Err(Error::Config("histogram_bins must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Exit {
    Upper,
    Lower,
    Truncated,
}

#[derive(Debug, Clone, Copy)]
struct PathOutcome {
    lp: f64,
    fee: f64,
    exit: Exit,
}

/// Equal-width histogram of discounted path payoffs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    fn build(values: impl Iterator<Item = f64> + Clone, bins: usize) -> Self {
        let (lo, hi) = values
            .clone()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins)
            .map(|i| if i == bins { hi } else { lo + width * i as f64 })
            .collect();
        let mut counts = vec![0u64; bins];
        for v in values {
            let i = (((v - lo) / width) as usize).min(bins - 1);
            counts[i] += 1;
        }
        Self { edges, counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Number of samples in bins lying entirely inside the open interval `(lo, hi)`,
    /// together with the number of such bins.
    pub fn mass_strictly_between(&self, lo: f64, hi: f64) -> (u64, usize) {
        let mut mass = 0;
        let mut bins = 0;
        for (i, c) in self.counts.iter().enumerate() {
            if self.edges[i] > lo && self.edges[i + 1] < hi {
                mass += c;
                bins += 1;
            }
        }
        (mass, bins)
    }

    /// CSV with header `bin_left,bin_right,count`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["bin_left", "bin_right", "count"])?;
        for (i, c) in self.counts.iter().enumerate() {
            w.write_record([
                format!("{}", self.edges[i]),
                format!("{}", self.edges[i + 1]),
                c.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    /// Mean of the discounted boundary payoff alone.
    pub lp_mean: f64,
    /// Mean of the discounted fee income alone.
    pub fee_mean: f64,
    pub exit_histogram: Histogram,
    pub upper_exit_fraction: f64,
    pub lower_exit_fraction: f64,
    pub truncated_fraction: f64,
    /// `(min, max)` of the discounted payoff over upper exits.
    pub upper_payoff_range: Option<(f64, f64)>,
    /// `(min, max)` of the discounted payoff over lower exits.
    pub lower_payoff_range: Option<(f64, f64)>,
}

impl McEstimate {
    /// Both exits occur, their payoff supports are disjoint and the histogram
    /// holds no mass strictly between them.
    pub fn is_bimodal(&self) -> bool {
        let (Some(up), Some(lo)) = (self.upper_payoff_range, self.lower_payoff_range) else {
            return false;
        };
        let (first, second) = if lo.1 < up.0 {
            (lo, up)
        } else if up.1 < lo.0 {
            (up, lo)
        } else {
            return false;
        };
        let (mass, bins) = self.exit_histogram.mass_strictly_between(first.1, second.0);
        mass == 0 && bins > 0
    }
}

struct PathSpec {
    log_lo: f64,
    log_hi: f64,
    value_lo: f64,
    value_hi: f64,
    log_p0: f64,
    drift: f64,
    vol: f64,
    var_step: f64,
    step_discount: f64,
    fee_rate: f64,
    mode: FeeMode,
    n_steps: u64,
}

fn simulate_path(spec: &PathSpec, pos: &NormalizedPosition, cfg: &McConfig, index: u64) -> PathOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index);
    let dt = cfg.dt;
    let mut y = spec.log_p0;
    let mut discount = 1.0;
    let mut integral = 0.0;
    for k in 0..spec.n_steps {
        let z: f64 = rng.sample(StandardNormal);
        let y_next = y + spec.drift + spec.vol * z;
        let discount_next = discount * spec.step_discount;
        integral += 0.5 * (discount + discount_next) * dt;

        let mut exit = if y_next >= spec.log_hi {
            Some(Exit::Upper)
        } else if y_next <= spec.log_lo {
            Some(Exit::Lower)
        } else {
            None
        };
        if exit.is_none() && cfg.bridge_correction {
            let up_arg = 2.0 * (spec.log_hi - y) * (spec.log_hi - y_next) / spec.var_step;
            let lo_arg = 2.0 * (y - spec.log_lo) * (y_next - spec.log_lo) / spec.var_step;
            if up_arg < BRIDGE_CUTOFF || lo_arg < BRIDGE_CUTOFF {
                let p_up = if up_arg < BRIDGE_CUTOFF { (-up_arg).exp() } else { 0.0 };
                let p_lo = if lo_arg < BRIDGE_CUTOFF { (-lo_arg).exp() } else { 0.0 };
                let u: f64 = rng.gen();
                if u < p_up {
                    exit = Some(Exit::Upper);
                } else if u < p_up + p_lo {
                    exit = Some(Exit::Lower);
                }
            }
        }

        if let Some(exit) = exit {
            let t = (k + 1) as f64 * dt;
            let value = if exit == Exit::Upper {
                spec.value_hi
            } else {
                spec.value_lo
            };
            return PathOutcome {
                lp: value * discount_next,
                fee: fee_income(spec, t, discount_next, integral),
                exit,
            };
        }
        y = y_next;
        discount = discount_next;
    }
    let t = spec.n_steps as f64 * dt;
    PathOutcome {
        lp: payoff_v3_unchecked(y.exp(), pos) * discount,
        fee: fee_income(spec, t, discount, integral),
        exit: Exit::Truncated,
    }
}

fn fee_income(spec: &PathSpec, t: f64, discount: f64, integral: f64) -> f64 {
    match spec.mode {
        FeeMode::Continuous => spec.fee_rate * integral,
        FeeMode::AtClose => spec.fee_rate * t * discount,
    }
}

/// Monte Carlo estimate of the position value for the given exit rule.
pub fn mc_price(
    pos: &NormalizedPosition,
    market: &MarketParams,
    p: f64,
    style: ExerciseStyle,
    mode: FeeMode,
    cfg: &McConfig,
) -> Result<McEstimate> {
    cfg.validate()?;
    let (lo, hi) = match style {
        ExerciseStyle::European => (pos.lower(), pos.upper()),
        ExerciseStyle::American { l1, l2 } => (l1, l2),
    };
    if !(lo > 0.0 && lo < p && p < hi && hi.is_finite()) {
        return Err(Error::Config(format!(
            "spot {p} must lie strictly inside the exit boundaries ({lo}, {hi})"
        )));
    }
    let sigma = market.sigma();
    let spec = PathSpec {
        log_lo: lo.ln(),
        log_hi: hi.ln(),
        value_lo: payoff_v3_unchecked(lo, pos),
        value_hi: payoff_v3_unchecked(hi, pos),
        log_p0: p.ln(),
        drift: (market.mu() - 0.5 * sigma * sigma) * cfg.dt,
        vol: sigma * cfg.dt.sqrt(),
        var_step: sigma * sigma * cfg.dt,
        step_discount: (-market.r() * cfg.dt).exp(),
        fee_rate: market.fee_annual() * pos.liquidity(),
        mode,
        n_steps: (cfg.t_max / cfg.dt).ceil() as u64,
    };

    let outcomes: Vec<PathOutcome> = (0..cfg.paths as u64)
        .into_par_iter()
        .map(|i| simulate_path(&spec, pos, cfg, i))
        .collect();
    Ok(summarize(&outcomes, cfg.histogram_bins))
}

fn summarize(outcomes: &[PathOutcome], bins: usize) -> McEstimate {
    let n = outcomes.len();
    let nf = n as f64;
    let total = |o: &PathOutcome| o.lp + o.fee;
    let mean = outcomes.iter().map(total).sum::<f64>() / nf;
    let lp_mean = outcomes.iter().map(|o| o.lp).sum::<f64>() / nf;
    let fee_mean = outcomes.iter().map(|o| o.fee).sum::<f64>() / nf;
    let std_error = if n > 1 {
        let ss: f64 = outcomes.iter().map(|o| (total(o) - mean).powi(2)).sum();
        (ss / (nf - 1.0) / nf).sqrt()
    } else {
        0.0
    };
    let count = |e: Exit| outcomes.iter().filter(|o| o.exit == e).count();
    let (n_up, n_lo) = (count(Exit::Upper), count(Exit::Lower));
    let n_tr = n - n_up - n_lo;
    let range = |e: Exit| {
        outcomes
            .iter()
            .filter(|o| o.exit == e)
            .map(total)
            .fold(None, |acc: Option<(f64, f64)>, v| {
                Some(acc.map_or((v, v), |(lo, hi)| (lo.min(v), hi.max(v))))
            })
    };
    McEstimate {
        mean,
        std_error,
        n_paths: n,
        lp_mean,
        fee_mean,
        exit_histogram: Histogram::build(outcomes.iter().map(total), bins),
        upper_exit_fraction: n_up as f64 / nf,
        lower_exit_fraction: n_lo as f64 / nf,
        truncated_fraction: n_tr as f64 / nf,
        upper_payoff_range: range(Exit::Upper),
        lower_payoff_range: range(Exit::Lower),
    }
}

/// One rung of a convergence study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub paths: usize,
    pub mean: f64,
    pub std_error: f64,
    /// `|mean - closed form|`.
    pub gap: Option<f64>,
}

/// Runs the estimator at each path count of `ladder` (same seed) and reports
/// the distance to the closed-form value.
pub fn convergence_report(
    pos: &NormalizedPosition,
    market: &MarketParams,
    p: f64,
    style: ExerciseStyle,
    mode: FeeMode,
    cfg: &McConfig,
    ladder: &[usize],
) -> Result<Vec<ConvergenceRow>> {
    if ladder.is_empty() || ladder.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("ladder must be nonempty and strictly increasing".into()));
    }
    let closed_form = match style {
        ExerciseStyle::European => price_european(pos, market, p, mode).ok(),
        ExerciseStyle::American { l1, l2 } => price_with_boundaries(pos, market, p, (l1, l2), mode).ok(),
    }
    .map(|r| r.pv);
    ladder
        .iter()
        .map(|&paths| {
            let est = mc_price(pos, market, p, style, mode, &McConfig { paths, ..*cfg })?;
            Ok(ConvergenceRow {
                paths,
                mean: est.mean,
                std_error: est.std_error,
                gap: closed_form.map(|cf| (est.mean - cf).abs()),
            })
        })
        .collect()
}
