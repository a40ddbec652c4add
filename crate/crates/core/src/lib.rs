//! Pricing and risk for concentrated-liquidity AMM positions, modelled as
//! perpetual claims that pay out when the price first leaves a corridor.
//!
//! * [`model`]: parameters, unit-price normalization and the LP payoff.
//! * [`laplace`]: closed-form transforms of the two-sided exit time.
//! * [`pricer`]: European, American, full-range and dynamic-fee values.
//! * [`mc`]: Monte Carlo first-passage oracle.
//! * [`greeks`]: bump-and-reprice sensitivities.
//! * [`iv`]: implied volatility and position-data analytics.
//! * [`cli`]: the `rnp` command-line driver.

// NaN-rejecting range checks are written as `!(lo < x)`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod greeks;
pub mod iv;
pub mod laplace;
pub mod mc;
pub mod model;
pub mod pricer;

pub use error::{Error, Result};
pub use greeks::{fd_greeks, BumpConfig, GreeksReport};
pub use laplace::{FeeMode, TransformInputs};
pub use mc::{mc_price, McConfig, McEstimate};
pub use model::{
    log_coords, lp_payoff_v2, lp_payoff_v3, normalize_position, payoff_greeks, LogCoords, MarketParams,
    NormalizedPosition, PositionSpec,
};
pub use pricer::{
    price_american, price_european, price_v2, price_with_dynamic_fee, ExerciseStyle, OptimizerConfig, PricingResult,
    PricingStyle, V2Boundaries,
};
