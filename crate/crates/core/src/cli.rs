//! The `rnp` command-line driver.
//!
//! Subcommands: `price`, `greeks`, `mc`, `sweep`, `iv`, `ingest`. Market and
//! position flags may also come from a JSON config file (`--config`) using the
//! flag names as keys; explicit flags win. Exit codes: 0 success,
//! 2 validation or configuration error, 3 no implied-volatility root,
//! 4 numerical failure.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::json;

use crate::error::Error;
use crate::greeks::{self, fmt_value, BumpConfig, GreeksReport, NamedMarket};
use crate::iv::{self, Bucket, IvConfig, MarketSansSigma, SeriesConfig};
use crate::laplace::FeeMode;
use crate::mc::{mc_price, McConfig};
use crate::model::{normalize_position, payoff_greeks, MarketParams, NormalizedPosition, PositionSpec};
use crate::pricer::{
    price_american, price_european, price_with_boundaries, ExerciseStyle, OptimizerConfig, PricingResult, PricingStyle,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NO_ROOT: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

const DEFAULT_SEED: u64 = 7;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn invalid(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INVALID,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NoRoot { .. } => EXIT_NO_ROOT,
            Error::Optimizer { .. } => EXIT_NUMERICAL,
            Error::Bump { ref source, .. } if matches!(**source, Error::Optimizer { .. }) => EXIT_NUMERICAL,
            _ => EXIT_INVALID,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::invalid(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "rnp",
    version,
    about = "Price concentrated-liquidity positions as perpetual double-barrier claims"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Present value split into LP leg and fee leg.
    Price(PriceArgs),
    /// Payoff / European / American Greeks table.
    Greeks(GreeksArgs),
    /// Monte Carlo estimate and its gap to the closed form.
    Mc(McArgs),
    /// Plot-ready CSV of value and Greeks over a parameter grid.
    Sweep(SweepArgs),
    /// Break-even implied volatility.
    Iv(IvArgs),
    /// Weighted implied-volatility series from a positions CSV.
    Ingest(IngestArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StyleArg {
    Euro,
    Amer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeeModeArg {
    Continuous,
    AtClose,
}

impl From<FeeModeArg> for FeeMode {
    fn from(m: FeeModeArg) -> Self {
        match m {
            FeeModeArg::Continuous => FeeMode::Continuous,
            FeeModeArg::AtClose => FeeMode::AtClose,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
    Csv,
}

/// Market, position and run flags shared by the pricing subcommands.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct MarketArgs {
    /// Current spot price (quote units).
    #[arg(long, allow_negative_numbers = true)]
    pub spot: Option<f64>,
    /// Lower range bound (quote units).
    #[arg(long, allow_negative_numbers = true)]
    pub lower: Option<f64>,
    /// Upper range bound (quote units).
    #[arg(long, allow_negative_numbers = true)]
    pub upper: Option<f64>,
    /// Inception price used to normalize prices [default: 1].
    #[arg(long, allow_negative_numbers = true)]
    pub s0: Option<f64>,
    /// Annualized volatility.
    #[arg(long, allow_negative_numbers = true)]
    pub sigma: Option<f64>,
    /// Risk-free rate.
    #[arg(long, allow_negative_numbers = true)]
    pub r: Option<f64>,
    /// Annual fee rate on position value.
    #[arg(long, allow_negative_numbers = true)]
    pub fee_apr: Option<f64>,
    /// Annualized drift [default: 0].
    #[arg(long, allow_negative_numbers = true)]
    pub mu: Option<f64>,
    /// Exercise style [default: euro].
    #[arg(long, value_enum)]
    pub style: Option<StyleArg>,
    /// Fee withdrawal mode [default: at-close].
    #[arg(long, value_enum)]
    pub fee_mode: Option<FeeModeArg>,
    /// Random seed [default: $RNP_SEED, else 7].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Monte Carlo path count [default: 100000].
    #[arg(long)]
    pub paths: Option<usize>,
    /// Monte Carlo step in years [default: 1e-4].
    #[arg(long)]
    pub dt: Option<f64>,
    /// Monte Carlo horizon cap in years [default: 100].
    #[arg(long)]
    pub t_max: Option<f64>,
    /// JSON file with the same keys as these flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

impl MarketArgs {
    fn merged(&self) -> CliResult<MarketArgs> {
        let Some(path) = &self.config else {
            return Ok(self.clone());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::invalid(format!("--config {}: {e}", path.display())))?;
        let file: MarketArgs =
            serde_json::from_str(&text).map_err(|e| CliError::invalid(format!("--config {}: {e}", path.display())))?;
        Ok(MarketArgs {
            spot: self.spot.or(file.spot),
            lower: self.lower.or(file.lower),
            upper: self.upper.or(file.upper),
            s0: self.s0.or(file.s0),
            sigma: self.sigma.or(file.sigma),
            r: self.r.or(file.r),
            fee_apr: self.fee_apr.or(file.fee_apr),
            mu: self.mu.or(file.mu),
            style: self.style.or(file.style),
            fee_mode: self.fee_mode.or(file.fee_mode),
            seed: self.seed.or(file.seed),
            paths: self.paths.or(file.paths),
            dt: self.dt.or(file.dt),
            t_max: self.t_max.or(file.t_max),
            config: None,
        })
    }
}

fn require(value: Option<f64>, flag: &str) -> CliResult<f64> {
    let v = value.ok_or_else(|| CliError::invalid(format!("missing required flag --{flag}")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::invalid(format!("--{flag} must be finite (got {v})")))
    }
}

fn positive(value: f64, flag: &str) -> CliResult<f64> {
    if value > 0.0 {
        Ok(value)
    } else {
        Err(CliError::invalid(format!("--{flag} must be > 0 (got {value})")))
    }
}

fn nonnegative(value: f64, flag: &str) -> CliResult<f64> {
    if value >= 0.0 {
        Ok(value)
    } else {
        Err(CliError::invalid(format!("--{flag} must be >= 0 (got {value})")))
    }
}

/// Fully validated pricing inputs.
#[derive(Debug, Clone, Copy)]
struct Setup {
    spec: PositionSpec,
    pos: NormalizedPosition,
    /// Unit spot, `spot / s0`.
    p: f64,
    market: MarketParams,
    style: StyleArg,
    mode: FeeMode,
}

struct Resolved {
    args: MarketArgs,
}

impl Resolved {
    fn new(args: &MarketArgs) -> CliResult<Self> {
        Ok(Self { args: args.merged()? })
    }

    fn position(&self) -> CliResult<(PositionSpec, NormalizedPosition)> {
        let a = &self.args;
        let s0 = positive(a.s0.unwrap_or(1.0), "s0")?;
        let lower = positive(require(a.lower, "lower")?, "lower")?;
        let upper = require(a.upper, "upper")?;
        if lower >= s0 {
            return Err(CliError::invalid(format!(
                "--lower: lower must be < spot at inception (lower {lower} >= s0 {s0})"
            )));
        }
        if upper <= s0 {
            return Err(CliError::invalid(format!(
                "--upper: upper must be > spot at inception (upper {upper} <= s0 {s0})"
            )));
        }
        let spec = PositionSpec::new(s0, lower, upper);
        let pos = normalize_position(&spec)?;
        Ok((spec, pos))
    }

    fn market(&self, sigma: f64) -> CliResult<MarketParams> {
        let a = &self.args;
        let r = nonnegative(require(a.r, "r")?, "r")?;
        let fee = nonnegative(require(a.fee_apr, "fee-apr")?, "fee-apr")?;
        let mu = a.mu.unwrap_or(0.0);
        if !mu.is_finite() {
            return Err(CliError::invalid("--mu must be finite"));
        }
        Ok(MarketParams::new(mu, positive(sigma, "sigma")?, r, fee)?)
    }

    fn sigma(&self) -> CliResult<f64> {
        positive(require(self.args.sigma, "sigma")?, "sigma")
    }

    fn spot(&self, spec: &PositionSpec) -> CliResult<f64> {
        let spot = positive(require(self.args.spot, "spot")?, "spot")?;
        Ok(spec.unit_price(spot))
    }

    fn setup(&self) -> CliResult<Setup> {
        let (spec, pos) = self.position()?;
        let p = self.spot(&spec)?;
        let market = self.market(self.sigma()?)?;
        Ok(Setup {
            spec,
            pos,
            p,
            market,
            style: self.args.style.unwrap_or(StyleArg::Euro),
            mode: self.args.fee_mode.unwrap_or(FeeModeArg::AtClose).into(),
        })
    }

    fn seed(&self) -> CliResult<u64> {
        if let Some(seed) = self.args.seed {
            return Ok(seed);
        }
        match std::env::var("RNP_SEED") {
            Ok(raw) => raw
                .trim()
                .parse()
                .map_err(|_| CliError::invalid(format!("RNP_SEED must be an unsigned integer (got `{raw}`)"))),
            Err(_) => Ok(DEFAULT_SEED),
        }
    }
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output format.
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
    /// Shorthand for `--format json`.
    #[arg(long)]
    pub json: bool,
}

impl OutputArgs {
    fn format(&self) -> Format {
        if self.json {
            Format::Json
        } else {
            self.format
        }
    }
}

#[derive(Debug, Args)]
pub struct OptimizerArgs {
    /// Boundary search grid points per axis.
    #[arg(long, default_value_t = 64)]
    pub grid_n: usize,
    /// Boundary refinement tolerance.
    #[arg(long, default_value_t = 1e-10)]
    pub refine_tol: f64,
}

impl OptimizerArgs {
    fn config(&self) -> CliResult<OptimizerConfig> {
        let cfg = OptimizerConfig {
            grid_n: self.grid_n,
            refine_tol: self.refine_tol,
            ..OptimizerConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct PriceArgs {
    #[command(flatten)]
    pub market: MarketArgs,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct GreeksArgs {
    #[command(flatten)]
    pub market: MarketArgs,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
    /// Also write the table as CSV to this path.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct McArgs {
    #[command(flatten)]
    pub market: MarketArgs,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
    /// Write the payoff histogram CSV to this path.
    #[arg(long)]
    pub histogram: Option<PathBuf>,
    /// Histogram bin count.
    #[arg(long, default_value_t = 64)]
    pub bins: usize,
    /// Disable the Brownian-bridge crossing test.
    #[arg(long)]
    pub no_bridge: bool,
    /// Worker threads (results do not depend on this).
    #[arg(long)]
    pub threads: Option<usize>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    Spot,
    Sigma,
    RangeUpper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepModel {
    Payoff,
    Euro,
    Amer,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub market: MarketArgs,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
    /// Parameter varied over the grid.
    #[arg(long, value_enum)]
    pub param: SweepParam,
    #[arg(long, allow_negative_numbers = true)]
    pub from: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub to: f64,
    /// Number of grid points, both ends included.
    #[arg(long)]
    pub steps: usize,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "payoff,euro")]
    pub models: Vec<SweepModel>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "at-close")]
    pub fee_modes: Vec<FeeModeArg>,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IvArgs {
    #[command(flatten)]
    pub market: MarketArgs,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
    /// Value the position should be worth at the implied volatility.
    #[arg(long, default_value_t = 1.0)]
    pub target_pv: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub sigma_lo: f64,
    #[arg(long, default_value_t = 10.0)]
    pub sigma_hi: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Input CSV (`timestamp,pool_id,lower_price,upper_price,spot_price,fee_apr,weight`).
    #[arg(long)]
    pub positions: PathBuf,
    #[arg(long, value_enum, default_value = "daily")]
    pub bucket: BucketArg,
    #[arg(long, allow_negative_numbers = true)]
    pub r: f64,
    #[arg(long, allow_negative_numbers = true, default_value_t = 0.0)]
    pub mu: f64,
    #[arg(long, value_enum, default_value = "at-close")]
    pub fee_mode: FeeModeArg,
    #[arg(long, default_value_t = 1.0)]
    pub target_pv: f64,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (results do not depend on this).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BucketArg {
    Daily,
    Hourly,
}

/// Parses `args` (including the program name) and runs the command, writing
/// results to `out` and diagnostics to `err`. Returns the exit code.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    match dispatch(&cli.command, out, err) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message);
            e.code
        }
    }
}

/// Entry point used by the binary.
pub fn run() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    let mut out = stdout.lock();
    let mut err = stderr.lock();
    run_with(std::env::args_os(), &mut out, &mut err)
}

fn dispatch(command: &Command, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    match command {
        Command::Price(a) => cmd_price(a, out),
        Command::Greeks(a) => cmd_greeks(a, out),
        Command::Mc(a) => {
            let buf = with_threads(a.threads, || {
                let mut buf = Vec::new();
                cmd_mc(a, &mut buf).map(|()| buf)
            })?;
            Ok(out.write_all(&buf)?)
        }
        Command::Sweep(a) => cmd_sweep(a, out),
        Command::Iv(a) => cmd_iv(a, out),
        Command::Ingest(a) => {
            let (buf, warnings) = with_threads(a.threads, || {
                let (mut buf, mut warnings) = (Vec::new(), Vec::new());
                cmd_ingest(a, &mut buf, &mut warnings).map(|()| (buf, warnings))
            })?;
            err.write_all(&warnings)?;
            Ok(out.write_all(&buf)?)
        }
    }
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> CliResult<T> + Send) -> CliResult<T> {
    match threads {
        None => f(),
        Some(0) => Err(CliError::invalid("--threads must be >= 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::invalid(format!("--threads: {e}")))?
            .install(f),
    }
}

fn style_name(style: StyleArg) -> &'static str {
    match style {
        StyleArg::Euro => "euro",
        StyleArg::Amer => "amer",
    }
}

fn price_setup(s: &Setup, opt: &OptimizerConfig) -> CliResult<PricingResult> {
    Ok(match s.style {
        StyleArg::Euro => price_european(&s.pos, &s.market, s.p, s.mode)?,
        StyleArg::Amer => price_american(&s.pos, &s.market, s.p, s.mode, opt)?,
    })
}

pub fn cmd_price(args: &PriceArgs, out: &mut dyn Write) -> CliResult<()> {
    let setup = Resolved::new(&args.market)?.setup()?;
    let res = price_setup(&setup, &args.optimizer.config()?)?;
    let bounds = res
        .boundaries()
        .map(|(l1, l2)| (l1 * setup.spec.s0, l2 * setup.spec.s0));
    match args.output.format() {
        Format::Json => {
            let mut obj = json!({
                "pv": res.pv,
                "lp_leg": res.lp_leg,
                "fee_leg": res.fee_leg,
                "stopped": res.stopped,
                "style": style_name(setup.style),
                "fee_mode": setup.mode.as_str(),
            });
            if let Some((l1, l2)) = bounds {
                obj["l1"] = json!(l1);
                obj["l2"] = json!(l2);
            }
            writeln!(out, "{obj}")?;
        }
        Format::Csv => {
            writeln!(out, "pv,lp_leg,fee_leg,stopped,style,fee_mode,l1,l2")?;
            let (l1, l2) = bounds.map_or((String::new(), String::new()), |(a, b)| (fmt_value(a), fmt_value(b)));
            writeln!(
                out,
                "{},{},{},{},{},{},{l1},{l2}",
                fmt_value(res.pv),
                fmt_value(res.lp_leg),
                fmt_value(res.fee_leg),
                res.stopped,
                style_name(setup.style),
                setup.mode
            )?;
        }
        Format::Text => {
            writeln!(out, "pv        {}", fmt_value(res.pv))?;
            writeln!(out, "lp_leg    {}", fmt_value(res.lp_leg))?;
            writeln!(out, "fee_leg   {}", fmt_value(res.fee_leg))?;
            writeln!(out, "stopped   {}", res.stopped)?;
            writeln!(out, "style     {}", style_name(setup.style))?;
            writeln!(out, "fee_mode  {}", setup.mode)?;
            if let Some((l1, l2)) = bounds {
                writeln!(out, "l1        {}", fmt_value(l1))?;
                writeln!(out, "l2        {}", fmt_value(l2))?;
            }
        }
    }
    Ok(())
}

pub fn cmd_greeks(args: &GreeksArgs, out: &mut dyn Write) -> CliResult<()> {
    let setup = Resolved::new(&args.market)?.setup()?;
    let opt = args.optimizer.config()?;
    let markets = [NamedMarket {
        name: format!(
            "C={} r={} sigma={} ({})",
            setup.market.fee_annual(),
            setup.market.r(),
            setup.market.sigma(),
            setup.mode
        ),
        market: setup.market,
    }];
    let tables = greeks::greeks_table(&markets, &setup.pos, setup.p, setup.mode, &BumpConfig::default(), &opt)?;
    if let Some(path) = &args.csv {
        greeks::write_csv(BufWriter::new(File::create(path)?), &tables)?;
    }
    match args.output.format() {
        Format::Json => {
            let rows: Vec<_> = tables[0].rows.iter().map(|(m, g)| greeks_json(m.name(), g)).collect();
            writeln!(out, "{}", json!({ "title": tables[0].title, "rows": rows }))?;
        }
        Format::Csv => greeks::write_csv(&mut *out, &tables)?,
        Format::Text => write!(out, "{}", greeks::render_text(&tables))?,
    }
    Ok(())
}

fn greeks_json(model: &str, g: &GreeksReport) -> serde_json::Value {
    let num = |x: f64| if x.is_nan() { serde_json::Value::Null } else { json!(x) };
    json!({
        "model": model,
        "pv": num(g.pv),
        "delta": num(g.delta),
        "gamma": num(g.gamma),
        "vega": num(g.vega),
        "rho": num(g.rho),
    })
}

pub fn cmd_mc(args: &McArgs, out: &mut dyn Write) -> CliResult<()> {
    let resolved = Resolved::new(&args.market)?;
    let setup = resolved.setup()?;
    let a = &resolved.args;
    let cfg = McConfig {
        paths: a.paths.unwrap_or(100_000),
        dt: a.dt.unwrap_or(1e-4),
        t_max: a.t_max.unwrap_or(100.0),
        seed: resolved.seed()?,
        bridge_correction: !args.no_bridge,
        histogram_bins: args.bins,
    };
    cfg.validate()?;
    if !setup.pos.contains(setup.p) {
        return Err(CliError::invalid(
            "--spot must lie strictly inside (lower, upper) for a simulation",
        ));
    }
    let (style, closed_form) = match setup.style {
        StyleArg::Euro => (
            ExerciseStyle::European,
            price_european(&setup.pos, &setup.market, setup.p, setup.mode)?,
        ),
        StyleArg::Amer => {
            let best = price_american(
                &setup.pos,
                &setup.market,
                setup.p,
                setup.mode,
                &args.optimizer.config()?,
            )?;
            let (l1, l2) = best.boundaries().expect("american result carries boundaries");
            if !(l1 < setup.p && setup.p < l2) {
                return Err(CliError::invalid(
                    "the optimal American exit is immediate; there is nothing to simulate",
                ));
            }
            let cf = price_with_boundaries(&setup.pos, &setup.market, setup.p, (l1, l2), setup.mode)?;
            (best.style, cf)
        }
    };
    let est = mc_price(&setup.pos, &setup.market, setup.p, style, setup.mode, &cfg)?;
    if let Some(path) = &args.histogram {
        est.exit_histogram.write_csv(BufWriter::new(File::create(path)?))?;
    }
    let gap = est.mean - closed_form.pv;
    let z = if est.std_error > 0.0 { gap / est.std_error } else { 0.0 };
    match args.output.format() {
        Format::Json => {
            writeln!(
                out,
                "{}",
                json!({
                    "mean": est.mean,
                    "std_error": est.std_error,
                    "n_paths": est.n_paths,
                    "lp_mean": est.lp_mean,
                    "fee_mean": est.fee_mean,
                    "upper_exit_fraction": est.upper_exit_fraction,
                    "lower_exit_fraction": est.lower_exit_fraction,
                    "truncated_fraction": est.truncated_fraction,
                    "closed_form": closed_form.pv,
                    "gap": gap,
                    "gap_in_std_errors": z,
                    "bimodal": est.is_bimodal(),
                    "seed": cfg.seed,
                })
            )?;
        }
        Format::Text | Format::Csv => {
            writeln!(out, "mean                 {}", fmt_value(est.mean))?;
            writeln!(out, "std_error            {}", fmt_value(est.std_error))?;
            writeln!(out, "n_paths              {}", est.n_paths)?;
            writeln!(out, "lp_mean              {}", fmt_value(est.lp_mean))?;
            writeln!(out, "fee_mean             {}", fmt_value(est.fee_mean))?;
            writeln!(out, "upper_exit_fraction  {}", fmt_value(est.upper_exit_fraction))?;
            writeln!(out, "lower_exit_fraction  {}", fmt_value(est.lower_exit_fraction))?;
            writeln!(out, "truncated_fraction   {}", fmt_value(est.truncated_fraction))?;
            writeln!(out, "closed_form          {}", fmt_value(closed_form.pv))?;
            writeln!(out, "gap                  {}", fmt_value(gap))?;
            writeln!(out, "gap_in_std_errors    {}", fmt_value(z))?;
            writeln!(out, "bimodal              {}", est.is_bimodal())?;
            writeln!(out, "seed                 {}", cfg.seed)?;
        }
    }
    Ok(())
}

fn grid(from: f64, to: f64, steps: usize) -> CliResult<Vec<f64>> {
    if steps == 0 {
        return Err(CliError::invalid("--steps must be >= 1"));
    }
    if !(from.is_finite() && to.is_finite()) {
        return Err(CliError::invalid("--from and --to must be finite"));
    }
    if steps == 1 {
        return Ok(vec![from]);
    }
    if !(from < to) {
        return Err(CliError::invalid(format!("--from must be < --to (got {from}, {to})")));
    }
    let h = (to - from) / (steps - 1) as f64;
    Ok((0..steps)
        .map(|i| if i == steps - 1 { to } else { from + h * i as f64 })
        .collect())
}

pub fn cmd_sweep(args: &SweepArgs, out: &mut dyn Write) -> CliResult<()> {
    let resolved = Resolved::new(&args.market)?;
    let opt = args.optimizer.config()?;
    let values = grid(args.from, args.to, args.steps)?;
    let bump = BumpConfig::default();
    if args.models.is_empty() || args.fee_modes.is_empty() {
        return Err(CliError::invalid("--models and --fee-modes must be nonempty"));
    }

    let mut sink: Box<dyn Write + '_> = match &args.out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(&mut *out),
    };
    let mut w = csv::Writer::from_writer(&mut sink);
    w.write_record([
        "param_value",
        "model",
        "fee_mode",
        "pv",
        "delta",
        "gamma",
        "vega",
        "rho",
    ])
    .map_err(Error::from)?;

    for &value in &values {
        let (pos, p, market) = match args.param {
            SweepParam::Spot => {
                let (spec, pos) = resolved.position()?;
                let p = spec.unit_price(positive(value, "from")?);
                (pos, p, resolved.market(resolved.sigma()?)?)
            }
            SweepParam::Sigma => {
                let (spec, pos) = resolved.position()?;
                let p = resolved.spot(&spec)?;
                (pos, p, resolved.market(positive(value, "from")?)?)
            }
            SweepParam::RangeUpper => {
                let mut a = resolved.args.clone();
                a.upper = Some(value);
                let r = Resolved { args: a };
                let (spec, pos) = r.position()?;
                let p = r.spot(&spec)?;
                (pos, p, r.market(r.sigma()?)?)
            }
        };
        for model in &args.models {
            let mut emit = |mode: &str, g: &GreeksReport| -> CliResult<()> {
                let name = match model {
                    SweepModel::Payoff => "payoff",
                    SweepModel::Euro => "euro",
                    SweepModel::Amer => "amer",
                };
                w.write_record([
                    fmt_value(value),
                    name.to_string(),
                    mode.to_string(),
                    fmt_value(g.pv),
                    fmt_value(g.delta),
                    fmt_value(g.gamma),
                    fmt_value(g.vega),
                    fmt_value(g.rho),
                ])
                .map_err(Error::from)?;
                Ok(())
            };
            match model {
                SweepModel::Payoff => emit("none", &payoff_greeks(p, &pos)?)?,
                SweepModel::Euro | SweepModel::Amer => {
                    for &mode in &args.fee_modes {
                        let mode = FeeMode::from(mode);
                        let g = if *model == SweepModel::Euro {
                            greeks::european_greeks(&pos, &market, p, mode, &bump)?
                        } else {
                            greeks::american_greeks(&pos, &market, p, mode, &bump, &opt)?
                        };
                        emit(mode.as_str(), &g)?;
                    }
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_iv(args: &IvArgs, out: &mut dyn Write) -> CliResult<()> {
    let resolved = Resolved::new(&args.market)?;
    let (spec, pos) = resolved.position()?;
    let p = resolved.spot(&spec)?;
    // validates r / fee-apr / mu with a placeholder volatility
    let m = resolved.market(1.0)?;
    let market = MarketSansSigma {
        mu: m.mu(),
        r: m.r(),
        fee_annual: m.fee_annual(),
    };
    let style = match resolved.args.style.unwrap_or(StyleArg::Euro) {
        StyleArg::Euro => PricingStyle::European,
        StyleArg::Amer => PricingStyle::American(args.optimizer.config()?),
    };
    let mode: FeeMode = resolved.args.fee_mode.unwrap_or(FeeModeArg::AtClose).into();
    let cfg = IvConfig {
        bracket: (args.sigma_lo, args.sigma_hi),
        target_pv: args.target_pv,
        ..IvConfig::default()
    };
    let sol = iv::break_even_iv(&pos, &market, p, &style, mode, &cfg)?;
    match args.output.format() {
        Format::Json => writeln!(
            out,
            "{}",
            json!({
                "sigma": sol.sigma,
                "multiple_roots": sol.multiple_roots,
                "residual": sol.residual,
                "target_pv": cfg.target_pv,
            })
        )?,
        Format::Text | Format::Csv => {
            writeln!(out, "sigma           {}", fmt_value(sol.sigma))?;
            writeln!(out, "multiple_roots  {}", sol.multiple_roots)?;
            writeln!(out, "residual        {}", fmt_value(sol.residual))?;
        }
    }
    Ok(())
}

pub fn cmd_ingest(args: &IngestArgs, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    nonnegative(args.r, "r")?;
    let ingested = iv::ingest_positions(&args.positions).map_err(|e| match e {
        Error::MissingColumn(c) => CliError::invalid(format!("--positions: missing column `{c}`")),
        other => CliError::invalid(format!("--positions {}: {other}", args.positions.display())),
    })?;
    for row in &ingested.rejected {
        writeln!(err, "warning: rejected {row}")?;
    }
    let bucket = match args.bucket {
        BucketArg::Daily => Bucket::Daily,
        BucketArg::Hourly => Bucket::Hourly,
    };
    let cfg = SeriesConfig {
        mu: args.mu,
        mode: args.fee_mode.into(),
        iv: IvConfig {
            target_pv: args.target_pv,
            ..IvConfig::default()
        },
        ..SeriesConfig::with_rate(args.r)
    };
    let series = iv::weighted_iv_series(&ingested.records, bucket, &cfg)?;
    match &args.out {
        Some(path) => iv::write_iv_series(BufWriter::new(File::create(path)?), &series)?,
        None => iv::write_iv_series(&mut *out, &series)?,
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run_with(std::iter::once("rnp").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn stopped_price_above_range() {
        let (code, out, _) = run(&[
            "price",
            "--spot",
            "1.3",
            "--lower",
            "0.8",
            "--upper",
            "1.2",
            "--sigma",
            "0.6",
            "--r",
            "0.04",
            "--fee-apr",
            "0.2",
            "--json",
        ]);
        assert_eq!(code, 0);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert!((v["pv"].as_f64().unwrap() - 1.043_154_971_779_048).abs() < 1e-12);
        assert_eq!(v["stopped"], true);
        assert_eq!(v["fee_leg"].as_f64().unwrap(), 0.0);
    }

    #[test]
    fn misordered_bounds_exit_2() {
        let (code, _, err) = run(&[
            "price",
            "--spot",
            "1",
            "--lower",
            "1.1",
            "--upper",
            "1.2",
            "--sigma",
            "0.6",
            "--r",
            "0.04",
            "--fee-apr",
            "0.2",
        ]);
        assert_eq!(code, 2);
        assert!(err.contains("lower must be < spot"), "{err}");
    }

    #[test]
    fn missing_flag_is_named() {
        let (code, _, err) = run(&[
            "price",
            "--spot",
            "1",
            "--lower",
            "0.8",
            "--upper",
            "1.2",
            "--r",
            "0.04",
            "--fee-apr",
            "0.2",
        ]);
        assert_eq!(code, 2);
        assert!(err.contains("--sigma"), "{err}");
    }

    #[test]
    fn unknown_flags_rejected() {
        let (code, _, _) = run(&["price", "--bogus", "1"]);
        assert_eq!(code, 2);
    }

    #[test]
    fn zero_paths_exit_2() {
        let (code, _, err) = run(&[
            "mc",
            "--spot",
            "1",
            "--lower",
            "0.8",
            "--upper",
            "1.2",
            "--sigma",
            "0.6",
            "--r",
            "0.04",
            "--fee-apr",
            "0",
            "--paths",
            "0",
        ]);
        assert_eq!(code, 2);
        assert!(err.contains("paths"), "{err}");
    }

    #[test]
    fn no_root_exit_3() {
        let (code, _, err) = run(&[
            "iv",
            "--spot",
            "1",
            "--lower",
            "0.8",
            "--upper",
            "1.2",
            "--r",
            "0.05",
            "--fee-apr",
            "0",
        ]);
        assert_eq!(code, 3);
        assert!(err.contains("no root"), "{err}");
    }

    #[test]
    fn config_file_merges_under_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(
            &path,
            r#"{"spot": 1.0, "lower": 0.8, "upper": 1.2, "sigma": 0.6, "r": 0.04, "fee-apr": 0.2}"#,
        )
        .unwrap();
        let (code, out, _) = run(&["price", "--config", path.to_str().unwrap(), "--spot", "1.3", "--json"]);
        assert_eq!(code, 0);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["stopped"], true);

        std::fs::write(&path, r#"{"spot": 1.0, "bogus": 3}"#).unwrap();
        let (code, _, _) = run(&["price", "--config", path.to_str().unwrap()]);
        assert_eq!(code, 2);
    }

    #[test]
    fn sweep_grid_validation() {
        assert!(grid(1.0, 0.5, 3).is_err());
        assert!(grid(1.0, 2.0, 0).is_err());
        assert_eq!(grid(1.0, 2.0, 3).unwrap(), vec![1.0, 1.5, 2.0]);
    }
}
