//! Static arbitrage against an overpriced supersenior tranche.
//!
//! Write the attachment as the loss capacity of the riskiest names plus a
//! fraction of one more name,
//!
//! ```text
//! A = sum_{i > n} N_i l_i + eps N_n l_n,    0 < eps <= 1,
//! ```
//!
//! then sell protection on `S[A]` and buy protection on the safer names:
//! `N_i` units of each `C_i` with `i < n` and `(1 - eps) N_n` units of
//! `C_n`. The CDS legs pay at least the tranche loss in every scenario, and
//! exactly the tranche loss in every scenario the maximal-correlation law
//! can produce. So the legs cost the fully correlated tranche price, and a
//! quote above it is money for nothing.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{mask_loss, DefaultScenario, ReferencePortfolio};
use crate::pricing::TrancheSpec;

/// Tolerance on reconstructing the attachment and on terminal values.
pub const ARBITRAGE_TOLERANCE: f64 = 1e-12;

const SCENARIO_CHUNK: u64 = 1 << 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AttachmentDecomposition {
    /// 1-based position of the pivot name in the sorted portfolio.
    pub n: usize,
    pub epsilon: f64,
    /// Capacity of the names riskier than the pivot.
    pub tail_capacity: f64,
    /// Capacity of the pivot name.
    pub pivot_capacity: f64,
    /// Capacities were taken with unit loss given default.
    pub stress_lgd: bool,
}

impl AttachmentDecomposition {
    pub fn pivot_index(&self) -> usize {
        self.n - 1
    }

    pub fn reconstruct(&self) -> f64 {
        self.tail_capacity + self.epsilon * self.pivot_capacity
    }
}

fn capacities(portfolio: &ReferencePortfolio, stress_lgd: bool) -> Vec<f64> {
    portfolio
        .names()
        .iter()
        .map(|o| if stress_lgd { o.notional } else { o.loss_capacity() })
        .collect()
}

/// Finds the pivot `n` and fraction `eps`. A rung boundary resolves to
/// `eps = 1` at the larger `n`; names with zero capacity are passed over.
pub fn decompose_attachment(
    portfolio: &ReferencePortfolio,
    attachment: f64,
    stress_lgd: bool,
) -> Result<AttachmentDecomposition> {
    let caps = capacities(portfolio, stress_lgd);
    let total = caps.iter().rev().fold(0.0, |a, c| a + c);
    if !(attachment > 0.0) || attachment > total + ARBITRAGE_TOLERANCE {
        return Err(Error::AttachmentOutOfRange {
            attachment,
            capacity: total,
        });
    }
    let mut tail = 0.0;
    for k in (0..caps.len()).rev() {
        let cap = caps[k];
        if cap == 0.0 {
            continue;
        }
        if attachment <= tail + cap + ARBITRAGE_TOLERANCE {
            return Ok(AttachmentDecomposition {
                n: k + 1,
                // a residual within tolerance of the full rung is the rung
                epsilon: if attachment - tail >= cap - ARBITRAGE_TOLERANCE {
                    1.0
                } else {
                    (attachment - tail) / cap
                },
                tail_capacity: tail,
                pivot_capacity: cap,
                stress_lgd,
            });
        }
        tail += cap;
    }
    unreachable!("attachment within total capacity always finds a pivot")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CdsLeg {
    /// 0-based position in the sorted portfolio.
    pub index: usize,
    pub label: String,
    /// Notional of protection bought.
    pub units: f64,
    /// Fair price per unit, `l_i p_i`.
    pub unit_price: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArbitragePortfolio {
    #[serde(skip)]
    portfolio: ReferencePortfolio,
    /// One unit of protection sold on this supersenior tranche.
    pub tranche: TrancheSpec,
    pub cds_legs: Vec<CdsLeg>,
    pub decomposition: AttachmentDecomposition,
}

impl ArbitragePortfolio {
    pub fn portfolio(&self) -> &ReferencePortfolio {
        &self.portfolio
    }

    /// Cost of the CDS legs; the break-even tranche price.
    pub fn leg_cost(&self) -> f64 {
        self.cds_legs.iter().fold(0.0, |a, l| a + l.units * l.unit_price)
    }

    /// Protection received minus tranche loss paid, for a scenario mask.
    pub fn terminal_value_mask(&self, mask: u64) -> f64 {
        let received = self
            .cds_legs
            .iter()
            .filter(|l| mask >> l.index & 1 == 1)
            .fold(0.0, |a, l| a + l.units * self.portfolio.name(l.index).lgd);
        let loss = mask_loss(&self.portfolio.loss_capacities(), mask);
        received - self.tranche.payoff(loss)
    }

    pub fn terminal_value(&self, scenario: &DefaultScenario) -> Result<f64> {
        if scenario.len() != self.portfolio.len() {
            return Err(Error::ScenarioSize {
                expected: self.portfolio.len(),
                got: scenario.len(),
            });
        }
        let received = self
            .cds_legs
            .iter()
            .filter(|l| scenario.is_defaulted(l.index))
            .fold(0.0, |a, l| a + l.units * self.portfolio.name(l.index).lgd);
        let loss = crate::model::portfolio_loss(&self.portfolio, scenario)?;
        Ok(received - self.tranche.payoff(loss))
    }
}

pub fn build_arbitrage_portfolio(
    portfolio: &ReferencePortfolio,
    attachment: f64,
    stress_lgd: bool,
) -> Result<ArbitragePortfolio> {
    let decomposition = decompose_attachment(portfolio, attachment, stress_lgd)?;
    let pivot = decomposition.pivot_index();
    let mut cds_legs = Vec::with_capacity(pivot + 1);
    for (i, o) in portfolio.names().iter().enumerate().take(pivot + 1) {
        let units = if i < pivot {
            o.notional
        } else {
            (1.0 - decomposition.epsilon) * o.notional
        };
        if units > 0.0 {
            cds_legs.push(CdsLeg {
                index: i,
                label: o.label.clone(),
                units,
                unit_price: o.lgd * o.default_prob,
            });
        }
    }
    Ok(ArbitragePortfolio {
        portfolio: portfolio.clone(),
        tranche: TrancheSpec::supersenior(attachment)?,
        cds_legs,
        decomposition,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaturityReport {
    pub scenarios: u64,
    pub min_value: f64,
    pub worst_scenario: String,
    pub max_value: f64,
    pub best_scenario: String,
    /// Every terminal value is at least `-ARBITRAGE_TOLERANCE`.
    pub nonnegative: bool,
    /// Masks (bit `i` = name `i + 1`) with value above the tolerance.
    pub profitable_scenarios: Vec<u64>,
}

#[derive(Debug, Clone)]
struct Extremes {
    min: (f64, u64),
    max: (f64, u64),
    profitable: Vec<u64>,
}

impl Extremes {
    fn merge(mut self, other: Self) -> Self {
        if other.min.0 < self.min.0 {
            self.min = other.min;
        }
        if other.max.0 > self.max.0 {
            self.max = other.max;
        }
        self.profitable.extend(other.profitable);
        self
    }
}

/// Terminal value in all `2^N` scenarios.
pub fn verify_nonnegative_maturity(arb: &ArbitragePortfolio) -> Result<MaturityReport> {
    let portfolio = arb.portfolio();
    portfolio.ensure_enumerable()?;
    let n = portfolio.len();
    let total = 1u64 << n;
    let caps = portfolio.loss_capacities();
    let legs: Vec<(usize, f64)> = arb
        .cds_legs
        .iter()
        .map(|l| (l.index, l.units * portfolio.name(l.index).lgd))
        .collect();
    let value = |mask: u64| {
        let received = legs
            .iter()
            .filter(|(i, _)| mask >> i & 1 == 1)
            .fold(0.0, |a, (_, v)| a + v);
        received - arb.tranche.payoff(mask_loss(&caps, mask))
    };
    let chunks: Vec<Extremes> = (0..total.div_ceil(SCENARIO_CHUNK))
        .into_par_iter()
        .map(|c| {
            let start = c * SCENARIO_CHUNK;
            let end = (start + SCENARIO_CHUNK).min(total);
            let mut e = Extremes {
                min: (f64::INFINITY, start),
                max: (f64::NEG_INFINITY, start),
                profitable: Vec::new(),
            };
            for mask in start..end {
                let v = value(mask);
                if v < e.min.0 {
                    e.min = (v, mask);
                }
                if v > e.max.0 {
                    e.max = (v, mask);
                }
                if v > ARBITRAGE_TOLERANCE {
                    e.profitable.push(mask);
                }
            }
            e
        })
        .collect();
    let e = chunks.into_iter().reduce(Extremes::merge).expect("at least one scenario");
    Ok(MaturityReport {
        scenarios: total,
        min_value: e.min.0,
        worst_scenario: DefaultScenario::from_mask(e.min.1, n).to_string(),
        max_value: e.max.0,
        best_scenario: DefaultScenario::from_mask(e.max.1, n).to_string(),
        nonnegative: e.min.0 >= -ARBITRAGE_TOLERANCE,
        profitable_scenarios: e.profitable,
    })
}

/// Cost of entering: CDS premiums paid minus the tranche premium received.
/// Negative means the position pays to be entered.
pub fn initial_value(arb: &ArbitragePortfolio, tranche_market_price: f64) -> f64 {
    arb.leg_cost() - tranche_market_price
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArbitrageCertificate {
    pub issued: bool,
    pub market_price: f64,
    /// Tranche price at which the position costs nothing to enter.
    pub break_even_price: f64,
    pub initial_value: f64,
    /// `-initial_value` when issued, else 0.
    pub profit_floor: f64,
    pub portfolio: ArbitragePortfolio,
    pub maturity: MaturityReport,
}

pub fn arbitrage_certificate(
    portfolio: &ReferencePortfolio,
    attachment: f64,
    market_price: f64,
    stress_lgd: bool,
) -> Result<ArbitrageCertificate> {
    if !market_price.is_finite() || market_price < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "market price {market_price} must be finite and non-negative"
        )));
    }
    let arb = build_arbitrage_portfolio(portfolio, attachment, stress_lgd)?;
    let maturity = verify_nonnegative_maturity(&arb)?;
    let initial = initial_value(&arb, market_price);
    let issued = initial < 0.0 && maturity.nonnegative;
    Ok(ArbitrageCertificate {
        issued,
        market_price,
        break_even_price: arb.leg_cost(),
        initial_value: initial,
        profit_floor: if issued { -initial } else { 0.0 },
        portfolio: arb,
        maturity,
    })
}
