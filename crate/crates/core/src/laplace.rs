//! Laplace transform of the two-sided exit time of a drifted Brownian motion.
//!
//! With normalized log price `W_t = x + mu' t + B_t` and barriers `a < x < b`,
//! the exit time `tau` has
//!
//! ```text
//! E[e^{-r tau}; W_tau = b] = e^{ mu' b'} sinh(a' theta) / sinh((b - a) theta)
//! E[e^{-r tau}; W_tau = a] = e^{-mu' a'} sinh(b' theta) / sinh((b - a) theta)
//! ```
//!
//! where `theta = sqrt(mu'^2 + 2 r)`. Their sum is `F(r) = E[e^{-r tau}]` and
//! `-F'(r) = E[tau e^{-r tau}]`.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LogCoords;

/// Below this argument the sinh ratio is replaced by its series.
const DEGENERATE_ARG: f64 = 1e-8;
/// Above this argument sinh ratios are evaluated in exponentially scaled form.
const LARGE_ARG: f64 = 30.0;
/// Below this argument `-F'` uses its Taylor expansion in theta.
const DERIVATIVE_SERIES_ARG: f64 = 0.05;
/// Continuous fees use the `r -> 0` limit below this rate.
const ZERO_RATE: f64 = 1e-10;
/// `1 - F(r)` is integrated from `-F'` instead of subtracted below this level.
const CANCELLATION_LEVEL: f64 = 1e-3;

/// How accrued fees are withdrawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeeMode {
    /// Fees are withdrawn as they accrue; an upper bound on the fee value.
    Continuous,
    /// All fees are withdrawn when the position closes; a lower bound.
    AtClose,
}

impl FeeMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            FeeMode::Continuous => "continuous",
            FeeMode::AtClose => "at-close",
        }
    }
}

impl std::fmt::Display for FeeMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FeeMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "continuous" => Ok(FeeMode::Continuous),
            "at-close" | "atclose" | "at_close" => Ok(FeeMode::AtClose),
            other => Err(format!("unknown fee mode `{other}` (expected continuous|at-close)")),
        }
    }
}

/// Log coordinates together with the discount rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformInputs {
    coords: LogCoords,
    r: f64,
    theta: f64,
}

impl TransformInputs {
    /// Accepts coordinates on the closed corridor `a <= x <= b` with `a < b`.
    pub fn new(coords: LogCoords, r: f64) -> Result<Self> {
        if !(r >= 0.0 && r.is_finite()) {
            return Err(Error::Domain { what: "r", value: r });
        }
        if !(coords.a_prime >= 0.0) {
            return Err(Error::Domain {
                what: "distance to lower barrier",
                value: coords.a_prime,
            });
        }
        if !(coords.b_prime >= 0.0) {
            return Err(Error::Domain {
                what: "distance to upper barrier",
                value: coords.b_prime,
            });
        }
        if !(coords.width() > 0.0 && coords.width().is_finite()) {
            return Err(Error::Domain {
                what: "corridor width",
                value: coords.width(),
            });
        }
        let theta = (coords.mu_prime * coords.mu_prime + 2.0 * r).sqrt();
        Ok(Self { coords, r, theta })
    }

    pub fn coords(&self) -> &LogCoords {
        &self.coords
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    /// `sqrt(mu'^2 + 2 r)`.
    pub fn theta(&self) -> f64 {
        self.theta
    }

    fn with_rate(&self, r: f64) -> Self {
        let theta = (self.coords.mu_prime * self.coords.mu_prime + 2.0 * r).sqrt();
        Self { r, theta, ..*self }
    }

    // (log prefactor, distance to the opposite barrier) for each leg
    fn upper_leg(&self) -> (f64, f64) {
        (self.coords.mu_prime * self.coords.b_prime, self.coords.a_prime)
    }

    fn lower_leg(&self) -> (f64, f64) {
        (-self.coords.mu_prime * self.coords.a_prime, self.coords.b_prime)
    }
}

/// `e^{log_pref} * sinh(alpha theta) / sinh(width theta)` for `0 <= alpha <= width`.
///
/// `log_pref + (alpha - width) theta <= 0` for both legs because `theta >= |mu'|`,
/// so the scaled branch never overflows.
fn sinh_ratio(log_pref: f64, alpha: f64, width: f64, theta: f64) -> f64 {
    let v = width * theta;
    if v < DEGENERATE_ARG {
        log_pref.exp() * (alpha / width) * (1.0 + theta * theta * (alpha * alpha - width * width) / 6.0)
    } else if v <= LARGE_ARG {
        log_pref.exp() * (alpha * theta).sinh() / v.sinh()
    } else {
        let u = alpha * theta;
        (log_pref + u - v).exp() * (-(-2.0 * u).exp_m1()) / (-(-2.0 * v).exp_m1())
    }
}

/// `e^{log_pref} * cosh(alpha theta) / sinh(width theta)`, same scaling rules.
fn cosh_sinh_ratio(log_pref: f64, alpha: f64, width: f64, theta: f64) -> f64 {
    let v = width * theta;
    if v <= LARGE_ARG {
        log_pref.exp() * (alpha * theta).cosh() / v.sinh()
    } else {
        let u = alpha * theta;
        (log_pref + u - v).exp() * (1.0 + (-2.0 * u).exp()) / (-(-2.0 * v).exp_m1())
    }
}

/// `E[e^{-r tau}; exit through the upper barrier]`.
pub fn hit_upper_factor(inp: &TransformInputs) -> f64 {
    let (pref, alpha) = inp.upper_leg();
    sinh_ratio(pref, alpha, inp.coords.width(), inp.theta)
}

/// `E[e^{-r tau}; exit through the lower barrier]`.
pub fn hit_lower_factor(inp: &TransformInputs) -> f64 {
    let (pref, alpha) = inp.lower_leg();
    sinh_ratio(pref, alpha, inp.coords.width(), inp.theta)
}

/// `F(r) = E[e^{-r tau}]`.
pub fn survival_transform(inp: &TransformInputs) -> f64 {
    hit_upper_factor(inp) + hit_lower_factor(inp)
}

/// `E[tau e^{-r tau}] = -F'(r)`.
///
/// Each leg has the form `e^{k} g(theta)` with `g = sinh(alpha theta) / sinh(w theta)`
/// and `d theta / d r = 1 / theta`, so
///
/// ```text
/// -F'(r) = (1/theta) [ w coth(w theta) F(r)
///          - (a' e^{mu' b'} cosh(a' theta) + b' e^{-mu' a'} cosh(b' theta)) / sinh(w theta) ]
/// ```
///
/// For small `w theta` the bracket cancels to `O(theta^2)`; there the series
/// `ln g = ln(alpha/w) + (alpha^2 - w^2) theta^2 / 6 - (alpha^4 - w^4) theta^4 / 180 + ...`
/// is differentiated term by term instead, which also covers `theta = 0`.
pub fn expected_discounted_tau(inp: &TransformInputs) -> f64 {
    if inp.coords.width() * inp.theta < DERIVATIVE_SERIES_ARG {
        discounted_tau_series(inp)
    } else {
        discounted_tau_closed(inp)
    }
}

fn discounted_tau_series(inp: &TransformInputs) -> f64 {
    let w = inp.coords.width();
    let t2 = inp.theta * inp.theta;
    let leg = |(pref, alpha): (f64, f64)| {
        let (a2, w2) = (alpha * alpha, w * w);
        let (a4, w4) = (a2 * a2, w2 * w2);
        let (a6, w6) = (a4 * a2, w4 * w2);
        let (a8, w8) = (a4 * a4, w4 * w4);
        let log_g = (a2 - w2) * t2 / 6.0 - (a4 - w4) * t2 * t2 / 180.0 + (a6 - w6) * t2 * t2 * t2 / 2835.0
            - (a8 - w8) * t2 * t2 * t2 * t2 / 37800.0;
        let g = (alpha / w) * log_g.exp();
        let dlog_g_over_theta = (a2 - w2) / 3.0 - (a4 - w4) * t2 / 45.0 + 2.0 * (a6 - w6) * t2 * t2 / 945.0
            - (a8 - w8) * t2 * t2 * t2 / 4725.0;
        -pref.exp() * g * dlog_g_over_theta
    };
    leg(inp.upper_leg()) + leg(inp.lower_leg())
}

fn discounted_tau_closed(inp: &TransformInputs) -> f64 {
    let w = inp.coords.width();
    let theta = inp.theta;
    let v = w * theta;
    let coth = if v > LARGE_ARG {
        (1.0 + (-2.0 * v).exp()) / (-(-2.0 * v).exp_m1())
    } else {
        1.0 / v.tanh()
    };
    let (pu, au) = inp.upper_leg();
    let (pl, al) = inp.lower_leg();
    let f = survival_transform(inp);
    let cosh_terms = au * cosh_sinh_ratio(pu, au, w, theta) + al * cosh_sinh_ratio(pl, al, w, theta);
    (w * coth * f - cosh_terms) / theta
}

/// `(1 - F(r)) / r = E[int_0^tau e^{-rt} dt]`, with the `r -> 0` limit `E[tau]`.
pub fn expected_discounted_lifetime(inp: &TransformInputs) -> f64 {
    let r = inp.r;
    if r < ZERO_RATE {
        return expected_discounted_tau(&inp.with_rate(0.0));
    }
    let one_minus_f = 1.0 - survival_transform(inp);
    if one_minus_f >= CANCELLATION_LEVEL {
        return one_minus_f / r;
    }
    // 1 - F(r) = int_0^r -F'(s) ds; the integrand is analytic near [0, r].
    let (nodes, weights) = gauss_legendre_16();
    let half = 0.5 * r;
    let integral: f64 = nodes
        .iter()
        .zip(weights)
        .map(|(z, wgt)| wgt * expected_discounted_tau(&inp.with_rate(half * (1.0 + z))))
        .sum();
    0.5 * integral
}

/// Present value of the fee leg, `C_a L_q` times the discounted fee horizon.
pub fn fee_leg(inp: &TransformInputs, lq: f64, fee_annual: f64, mode: FeeMode) -> f64 {
    if fee_annual == 0.0 {
        return 0.0;
    }
    let horizon = match mode {
        FeeMode::Continuous => expected_discounted_lifetime(inp),
        FeeMode::AtClose => expected_discounted_tau(inp),
    };
    fee_annual * lq * horizon
}

fn gauss_legendre_16() -> &'static ([f64; 16], [f64; 16]) {
    static RULE: OnceLock<([f64; 16], [f64; 16])> = OnceLock::new();
    RULE.get_or_init(|| {
        const N: usize = 16;
        let mut nodes = [0.0; N];
        let mut weights = [0.0; N];
        for i in 0..N {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (N as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, z);
                for k in 2..=N {
                    let k = k as f64;
                    let p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                dp = N as f64 * (z * p1 - p0) / (z * z - 1.0);
                let step = p1 / dp;
                z -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
            nodes[i] = z;
            weights[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        }
        (nodes, weights)
    })
}
