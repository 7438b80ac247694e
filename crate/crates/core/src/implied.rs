//! Flat implied correlation of a supersenior tranche quote.
//!
//! The model price rises with the flat asset correlation, so the quote is
//! bracketed on `[0, 1]` and bisected. A quote above the fully correlated
//! price has no solution in any consistent default model; that outcome is a
//! status, never a correlation above one.

use serde::Serialize;

use crate::copula::AssetCorrelationSpec;
use crate::error::{Error, Result};
use crate::ladder::build_ladder;
use crate::model::ReferencePortfolio;
use crate::pricing::{price_tranche_exhaustive, price_tranche_mc, DefaultLaw, PricingMethod, TrancheKind, TrancheSpec};

/// Bisection stops once the bracket is this narrow.
pub const RHO_TOLERANCE: f64 = 1e-7;
/// Price tolerance for exhaustive pricing.
pub const PRICE_TOLERANCE: f64 = 1e-10;
/// A quote must exceed the fully correlated price by more than this to be
/// reported as breakdown.
pub const BREAKDOWN_TOLERANCE: f64 = 1e-12;
/// Largest portfolio that [`PricingConfig::Auto`] prices exhaustively.
/// The exact flat-correlation pricer costs `2^N` work per quadrature node.
pub const AUTO_EXHAUSTIVE_MAX: usize = 16;

const MAX_ITERATIONS: u32 = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum PricingConfig {
    /// Exhaustive for small portfolios, Monte Carlo otherwise.
    Auto { draws: u64, seed: u64 },
    Exhaustive,
    MonteCarlo { draws: u64, seed: u64 },
}

impl PricingConfig {
    fn resolve(self, n: usize) -> Self {
        match self {
            Self::Auto { draws, seed } if n > AUTO_EXHAUSTIVE_MAX => Self::MonteCarlo { draws, seed },
            Self::Auto { .. } => Self::Exhaustive,
            other => other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CalibrationStatus {
    Solved,
    /// The quote exceeds the price at maximal correlation.
    Breakdown,
    /// The quote is below the price with independent defaults.
    BelowRange,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationResult {
    pub status: CalibrationStatus,
    pub rho: Option<f64>,
    pub price_at_one: f64,
    pub price_at_zero: f64,
    pub market_price: f64,
    /// Model price at the solved correlation.
    pub model_price: Option<f64>,
    pub iterations: u32,
    pub method: PricingMethod,
}

struct Pricer<'a> {
    portfolio: &'a ReferencePortfolio,
    tranche: &'a TrancheSpec,
    config: PricingConfig,
}

impl Pricer<'_> {
    /// Price and the tolerance it supports.
    fn price(&self, rho: f64) -> Result<(f64, f64)> {
        if rho == 1.0 {
            let law = DefaultLaw::Ladder(build_ladder(self.portfolio));
            return Ok((price_tranche_exhaustive(self.portfolio, self.tranche, &law)?.value, PRICE_TOLERANCE));
        }
        match self.config {
            PricingConfig::MonteCarlo { draws, seed } => {
                let v = price_tranche_mc(self.portfolio, self.tranche, &AssetCorrelationSpec::Flat(rho), draws, seed)?;
                Ok((v.value, 2.0 * v.stderr))
            }
            _ => {
                let v = price_tranche_exhaustive(self.portfolio, self.tranche, &DefaultLaw::FlatGaussian(rho))?;
                Ok((v.value, PRICE_TOLERANCE))
            }
        }
    }

    fn method(&self) -> PricingMethod {
        match self.config {
            PricingConfig::MonteCarlo { .. } => PricingMethod::MonteCarlo,
            _ => PricingMethod::Exhaustive,
        }
    }
}

pub fn implied_flat_correlation(
    portfolio: &ReferencePortfolio,
    tranche: &TrancheSpec,
    market_price: f64,
    config: PricingConfig,
) -> Result<CalibrationResult> {
    if !market_price.is_finite() || market_price < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "market price {market_price} must be finite and non-negative"
        )));
    }
    if tranche.kind != TrancheKind::Supersenior {
        return Err(Error::InvalidArgument(
            "implied correlation is defined for supersenior tranches".into(),
        ));
    }
    let pricer = Pricer {
        portfolio,
        tranche,
        config: config.resolve(portfolio.len()),
    };
    let (price_at_one, _) = pricer.price(1.0)?;
    let (price_at_zero, zero_tol) = pricer.price(0.0)?;
    let mut result = CalibrationResult {
        status: CalibrationStatus::Solved,
        rho: None,
        price_at_one,
        price_at_zero,
        market_price,
        model_price: None,
        iterations: 0,
        method: pricer.method(),
    };
    if market_price > price_at_one + BREAKDOWN_TOLERANCE {
        result.status = CalibrationStatus::Breakdown;
        return Ok(result);
    }
    if market_price < price_at_zero - zero_tol.max(BREAKDOWN_TOLERANCE) {
        result.status = CalibrationStatus::BelowRange;
        return Ok(result);
    }
    let bracket = Bracket {
        lo: (0.0, price_at_zero),
        hi: (1.0, price_at_one),
    };
    let solved = match bisect(&pricer, bracket, market_price, 1.0) {
        Err(Error::Solver(_)) => bisect(&pricer, bracket, market_price, 4.0),
        other => other,
    }?;
    result.rho = Some(solved.rho);
    result.model_price = Some(solved.price);
    result.iterations = solved.iterations;
    Ok(result)
}

#[derive(Debug, Clone, Copy)]
struct Bracket {
    lo: (f64, f64),
    hi: (f64, f64),
}

struct Solved {
    rho: f64,
    price: f64,
    iterations: u32,
}

fn bisect(pricer: &Pricer<'_>, mut b: Bracket, target: f64, widen: f64) -> Result<Solved> {
    let mut iterations = 0;
    loop {
        iterations += 1;
        let mid = 0.5 * (b.lo.0 + b.hi.0);
        let (price, tol) = pricer.price(mid)?;
        let tol = tol * widen;
        if price < b.lo.1 - tol || price > b.hi.1 + tol {
            return Err(Error::Solver(format!(
                "price is not monotone in correlation: P({mid}) = {price} outside [P({}) = {}, P({}) = {}] (tolerance {tol:e})",
                b.lo.0, b.lo.1, b.hi.0, b.hi.1
            )));
        }
        if (price - target).abs() <= tol || b.hi.0 - b.lo.0 <= RHO_TOLERANCE {
            return Ok(Solved { rho: mid, price, iterations });
        }
        if iterations >= MAX_ITERATIONS {
            return Err(Error::Solver(format!("no convergence after {iterations} bisection steps")));
        }
        if price < target {
            b.lo = (mid, price);
        } else {
            b.hi = (mid, price);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BreakdownReport {
    pub calibration: CalibrationResult,
    pub max_correlation_price: f64,
    /// `market - price_at_one` when positive, else 0.
    pub excess_premium: f64,
    pub message: String,
}

pub fn breakdown_report(
    portfolio: &ReferencePortfolio,
    tranche: &TrancheSpec,
    market_price: f64,
    config: PricingConfig,
) -> Result<BreakdownReport> {
    let calibration = implied_flat_correlation(portfolio, tranche, market_price, config)?;
    let excess_premium = (market_price - calibration.price_at_one).max(0.0);
    let message = match calibration.status {
        CalibrationStatus::Breakdown => format!(
            "correlation breakdown: the quote {market_price} exceeds the maximal-correlation price {} by {excess_premium}; \
             no consistent default model reproduces it, and a static arbitrage is available (run `arb`)",
            calibration.price_at_one
        ),
        CalibrationStatus::Solved => format!(
            "quote reproduced at flat asset correlation {}",
            calibration.rho.unwrap_or(f64::NAN)
        ),
        CalibrationStatus::BelowRange => format!(
            "the quote {market_price} is below the independent-defaults price {}",
            calibration.price_at_zero
        ),
    };
    Ok(BreakdownReport {
        max_correlation_price: calibration.price_at_one,
        calibration,
        excess_premium,
        message,
    })
}
