//! Obligors, reference portfolios, default scenarios and loss bookkeeping.
//!
//! Everything here is immutable once built. A portfolio is always held in
//! non-decreasing order of default probability; downstream modules (the
//! ladder process, threshold calibration, the arbitrage decomposition) rely
//! on that ordering.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};

/// Largest portfolio for which all `2^N` default scenarios are enumerated.
pub const EXHAUSTIVE_CUTOFF: usize = 24;

/// Additive tolerance applied when validating probabilities.
pub const PROB_TOLERANCE: f64 = 1e-12;

fn check_unit_interval(label: &str, what: &str, x: f64) -> Result<f64> {
    if !x.is_finite() || x < -PROB_TOLERANCE || x > 1.0 + PROB_TOLERANCE {
        return Err(Error::InvalidObligor {
            label: label.to_string(),
            reason: format!("{what} {x} outside [0, 1]"),
        });
    }
    Ok(x.clamp(0.0, 1.0))
}

/// A single reference entity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObligorName {
    pub label: String,
    pub default_prob: f64,
    pub recovery: f64,
    pub lgd: f64,
    /// Fraction of total portfolio notional.
    pub notional: f64,
}

impl ObligorName {
    pub fn new(label: impl Into<String>, default_prob: f64, recovery: f64, notional: f64) -> Result<Self> {
        let label = label.into();
        let default_prob = check_unit_interval(&label, "default probability", default_prob)?;
        let recovery = check_unit_interval(&label, "recovery", recovery)?;
        if !notional.is_finite() || notional < 0.0 {
            return Err(Error::InvalidObligor {
                label,
                reason: format!("notional {notional} must be finite and non-negative"),
            });
        }
        Ok(Self {
            label,
            default_prob,
            recovery,
            lgd: 1.0 - recovery,
            notional,
        })
    }

    /// Survival probability `1 - p`.
    pub fn survival_prob(&self) -> f64 {
        1.0 - self.default_prob
    }

    /// Portfolio loss contributed if this name defaults, `N * lgd`.
    pub fn loss_capacity(&self) -> f64 {
        self.notional * self.lgd
    }
}

/// Obligors sorted by non-decreasing default probability (stable).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferencePortfolio {
    names: Vec<ObligorName>,
}

impl ReferencePortfolio {
    pub fn new(mut names: Vec<ObligorName>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::InvalidArgument("portfolio has no names".into()));
        }
        // slice::sort_by is stable, so equal probabilities keep input order
        names.sort_by(|a, b| a.default_prob.total_cmp(&b.default_prob));
        Ok(Self { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[ObligorName] {
        &self.names
    }

    pub fn name(&self, i: usize) -> &ObligorName {
        &self.names[i]
    }

    pub fn default_probs(&self) -> Vec<f64> {
        self.names.iter().map(|n| n.default_prob).collect()
    }

    pub fn loss_capacities(&self) -> Vec<f64> {
        self.names.iter().map(ObligorName::loss_capacity).collect()
    }

    /// `sum N_i * lgd_i`, the largest loss the portfolio can suffer.
    pub fn total_loss_capacity(&self) -> f64 {
        self.names.iter().map(ObligorName::loss_capacity).sum()
    }

    pub fn total_notional(&self) -> f64 {
        self.names.iter().map(|n| n.notional).sum()
    }

    /// `sum N_i * lgd_i * p_i`. Depends on marginals only.
    pub fn expected_loss(&self) -> f64 {
        self.names
            .iter()
            .map(|n| n.loss_capacity() * n.default_prob)
            .sum()
    }

    /// Rejects portfolios too large for exhaustive enumeration.
    pub fn ensure_enumerable(&self) -> Result<()> {
        if self.len() > EXHAUSTIVE_CUTOFF {
            return Err(Error::TooManyNames {
                n: self.len(),
                cutoff: EXHAUSTIVE_CUTOFF,
            });
        }
        Ok(())
    }
}

/// Terminal default state of every name; index `i` follows portfolio order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct DefaultScenario {
    indicators: Vec<bool>,
}

impl DefaultScenario {
    pub fn new(indicators: Vec<bool>) -> Self {
        Self { indicators }
    }

    pub fn none(n: usize) -> Self {
        Self::new(vec![false; n])
    }

    /// Bit `i` of `mask` is the indicator of name `i` (name 1 least significant).
    pub fn from_mask(mask: u64, n: usize) -> Self {
        debug_assert!(n <= 64);
        Self::new((0..n).map(|i| mask >> i & 1 == 1).collect())
    }

    pub fn mask(&self) -> Option<u64> {
        if self.indicators.len() > 64 {
            return None;
        }
        Some(
            self.indicators
                .iter()
                .enumerate()
                .fold(0u64, |m, (i, &d)| m | (u64::from(d) << i)),
        )
    }

    pub fn len(&self) -> usize {
        self.indicators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indicators.is_empty()
    }

    pub fn indicators(&self) -> &[bool] {
        &self.indicators
    }

    pub fn is_defaulted(&self, i: usize) -> bool {
        self.indicators[i]
    }

    pub fn default_count(&self) -> usize {
        self.indicators.iter().filter(|&&d| d).count()
    }

    /// True when defaults form a suffix: any defaulted name implies every
    /// riskier (later) name has defaulted too.
    pub fn is_hierarchical(&self) -> bool {
        is_suffix_pattern(&self.indicators)
    }
}

impl fmt::Display for DefaultScenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &d in &self.indicators {
            f.write_str(if d { "1" } else { "0" })?;
        }
        Ok(())
    }
}

pub(crate) fn is_suffix_pattern(indicators: &[bool]) -> bool {
    match indicators.iter().position(|&d| d) {
        Some(first) => indicators[first..].iter().all(|&d| d),
        None => true,
    }
}

/// Loss `sum N_i * lgd_i * I_i` for one scenario.
pub fn portfolio_loss(portfolio: &ReferencePortfolio, scenario: &DefaultScenario) -> Result<f64> {
    if scenario.len() != portfolio.len() {
        return Err(Error::ScenarioSize {
            expected: portfolio.len(),
            got: scenario.len(),
        });
    }
    Ok(indicator_loss(&portfolio.loss_capacities(), scenario.indicators()))
}

pub(crate) fn indicator_loss(capacities: &[f64], indicators: &[bool]) -> f64 {
    capacities
        .iter()
        .zip(indicators)
        .filter(|(_, &d)| d)
        .fold(0.0, |acc, (c, _)| acc + c)
}

pub(crate) fn mask_loss(capacities: &[f64], mask: u64) -> f64 {
    let mut loss = 0.0;
    let mut bits = mask;
    while bits != 0 {
        let i = bits.trailing_zeros() as usize;
        loss += capacities[i];
        bits &= bits - 1;
    }
    loss
}

/// Iterator over all `2^N` scenarios in binary counting order.
#[derive(Debug, Clone)]
pub struct ScenarioIter {
    n: usize,
    next: u64,
    end: u64,
}

impl Iterator for ScenarioIter {
    type Item = DefaultScenario;

    fn next(&mut self) -> Option<DefaultScenario> {
        if self.next >= self.end {
            return None;
        }
        let s = DefaultScenario::from_mask(self.next, self.n);
        self.next += 1;
        Some(s)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.end - self.next) as usize;
        (left, Some(left))
    }
}

impl ExactSizeIterator for ScenarioIter {}

pub fn enumerate_scenarios(n_names: usize) -> Result<ScenarioIter> {
    if n_names > EXHAUSTIVE_CUTOFF {
        return Err(Error::TooManyNames {
            n: n_names,
            cutoff: EXHAUSTIVE_CUTOFF,
        });
    }
    Ok(ScenarioIter {
        n: n_names,
        next: 0,
        end: 1u64 << n_names,
    })
}

/// A full joint default law: probability of every one of the `2^N`
/// scenarios, indexed by scenario mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTable {
    n: usize,
    probs: Vec<f64>,
}

impl ScenarioTable {
    pub fn new(n: usize, probs: Vec<f64>) -> Result<Self> {
        if n > EXHAUSTIVE_CUTOFF {
            return Err(Error::TooManyNames {
                n,
                cutoff: EXHAUSTIVE_CUTOFF,
            });
        }
        if probs.len() != 1usize << n {
            return Err(Error::InvalidTable(format!(
                "expected {} entries for {n} names, got {}",
                1usize << n,
                probs.len()
            )));
        }
        if let Some((mask, &p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0)
        {
            return Err(Error::InvalidTable(format!(
                "scenario {} has probability {p}",
                DefaultScenario::from_mask(mask as u64, n)
            )));
        }
        let total = pairwise_sum(&probs);
        if (total - 1.0).abs() > PROB_TOLERANCE {
            return Err(Error::InvalidTable(format!("probabilities sum to {total}")));
        }
        Ok(Self { n, probs })
    }

    /// Independent defaults: `P(I) = prod p_i^I_i q_i^(1 - I_i)`.
    pub fn independent(portfolio: &ReferencePortfolio) -> Result<Self> {
        portfolio.ensure_enumerable()?;
        let probs = product_table(&portfolio.default_probs());
        Self::new(portfolio.len(), probs)
    }

    pub fn n_names(&self) -> usize {
        self.n
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, scenario: &DefaultScenario) -> f64 {
        scenario
            .mask()
            .map_or(0.0, |m| self.probs.get(m as usize).copied().unwrap_or(0.0))
    }

    /// `P(I_i = 1)` for every name.
    pub fn marginals(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let terms: Vec<f64> = self
                    .probs
                    .iter()
                    .enumerate()
                    .filter(|(m, _)| m >> i & 1 == 1)
                    .map(|(_, &p)| p)
                    .collect();
                pairwise_sum(&terms)
            })
            .collect()
    }

    /// `P(I_i = a, I_j = b)` for the pair `(i, j)`.
    pub fn pair_prob(&self, i: usize, j: usize, a: bool, b: bool) -> f64 {
        let terms: Vec<f64> = self
            .probs
            .iter()
            .enumerate()
            .filter(|(m, _)| (m >> i & 1 == 1) == a && (m >> j & 1 == 1) == b)
            .map(|(_, &p)| p)
            .collect();
        pairwise_sum(&terms)
    }
}

/// Builds `prod_i p_i^I_i (1 - p_i)^(1 - I_i)` over all masks by doubling.
pub(crate) fn product_table(probs: &[f64]) -> Vec<f64> {
    let mut table = Vec::with_capacity(1usize << probs.len());
    table.push(1.0);
    for &p in probs {
        let q = 1.0 - p;
        let half = table.len();
        table.extend_from_within(..);
        for w in &mut table[..half] {
            *w *= q;
        }
        for w in &mut table[half..] {
            *w *= p;
        }
    }
    table
}

/// Pairwise (tree) summation; the result depends only on the order of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if xs.len() <= LEAF {
        return xs.iter().fold(0.0, |a, x| a + x);
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Discrete distribution of portfolio loss.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossDistribution {
    points: Vec<(f64, f64)>,
}

/// Loss levels closer than this are treated as one level.
const LOSS_MERGE_TOLERANCE: f64 = 1e-12;

impl LossDistribution {
    /// Builds from (loss, probability) pairs, merging equal loss levels and
    /// dropping zero-probability levels.
    pub fn from_weighted<I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        let mut raw: Vec<(f64, f64)> = pairs.into_iter().collect();
        if raw.is_empty() {
            return Err(Error::InvalidDistribution("no loss levels".into()));
        }
        if let Some(&(l, p)) = raw
            .iter()
            .find(|(l, p)| !l.is_finite() || !p.is_finite() || *p < 0.0)
        {
            return Err(Error::InvalidDistribution(format!(
                "bad point (loss {l}, probability {p})"
            )));
        }
        raw.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut points: Vec<(f64, f64)> = Vec::with_capacity(raw.len());
        for (loss, p) in raw {
            match points.last_mut() {
                Some(last) if loss - last.0 <= LOSS_MERGE_TOLERANCE => last.1 += p,
                _ => points.push((loss, p)),
            }
        }
        let total: f64 = points.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > PROB_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {total}"
            )));
        }
        points.retain(|&(_, p)| p > 0.0);
        Ok(Self { points })
    }

    pub fn from_table(portfolio: &ReferencePortfolio, table: &ScenarioTable) -> Result<Self> {
        if table.n_names() != portfolio.len() {
            return Err(Error::ScenarioSize {
                expected: portfolio.len(),
                got: table.n_names(),
            });
        }
        let caps = portfolio.loss_capacities();
        Self::from_weighted(
            table
                .probs()
                .iter()
                .enumerate()
                .map(|(m, &p)| (mask_loss(&caps, m as u64), p)),
        )
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn expectation(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.points.iter().fold(0.0, |a, &(l, p)| a + p * f(l))
    }

    pub fn mean(&self) -> f64 {
        self.expectation(|l| l)
    }

    pub fn prob_at(&self, loss: f64) -> f64 {
        self.points
            .iter()
            .find(|(l, _)| (l - loss).abs() <= LOSS_MERGE_TOLERANCE)
            .map_or(0.0, |&(_, p)| p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn uniform5() -> ReferencePortfolio {
        let ps = [0.006, 0.01, 0.01, 0.012, 0.04];
        ReferencePortfolio::new(
            ps.iter()
                .enumerate()
                .map(|(i, &p)| ObligorName::new(format!("n{}", i + 1), p, 0.0, 0.2).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn obligor_validation() {
        let o = ObligorName::new("a", 0.04, 0.4, 0.1).unwrap();
        assert_eq!(o.lgd, 1.0 - 0.4);
        assert!(ObligorName::new("a", 1.2, 0.4, 0.1).is_err());
        assert!(ObligorName::new("a", 0.1, -0.2, 0.1).is_err());
        assert!(ObligorName::new("a", 0.1, 0.2, -0.1).is_err());
        assert!(ObligorName::new("a", f64::NAN, 0.2, 0.1).is_err());
        // within tolerance is clamped, not rejected
        assert_eq!(ObligorName::new("a", 1.0 + 1e-13, 0.0, 1.0).unwrap().default_prob, 1.0);
    }

    #[test]
    fn portfolio_sorts_stably() {
        let names = vec![
            ObligorName::new("x", 0.04, 0.0, 0.2).unwrap(),
            ObligorName::new("b", 0.01, 0.0, 0.2).unwrap(),
            ObligorName::new("a", 0.01, 0.0, 0.2).unwrap(),
            ObligorName::new("y", 0.006, 0.0, 0.2).unwrap(),
        ];
        let p = ReferencePortfolio::new(names).unwrap();
        let labels: Vec<_> = p.names().iter().map(|n| n.label.as_str()).collect();
        assert_eq!(labels, ["y", "b", "a", "x"]);
        assert!(ReferencePortfolio::new(vec![]).is_err());
    }

    #[test]
    fn loss_examples() {
        let p = uniform5();
        assert_eq!(portfolio_loss(&p, &DefaultScenario::none(5)).unwrap(), 0.0);
        let s = DefaultScenario::new(vec![false, false, false, true, true]);
        assert!((portfolio_loss(&p, &s).unwrap() - 0.4).abs() < 1e-15);
        let all = DefaultScenario::new(vec![true; 5]);
        assert!((portfolio_loss(&p, &all).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(
            portfolio_loss(&p, &DefaultScenario::none(4)),
            Err(Error::ScenarioSize { expected: 5, got: 4 })
        );
    }

    #[test]
    fn enumeration_small() {
        let one: Vec<_> = enumerate_scenarios(1).unwrap().map(|s| s.to_string()).collect();
        assert_eq!(one, ["0", "1"]);
        let two: Vec<_> = enumerate_scenarios(2).unwrap().map(|s| s.to_string()).collect();
        assert_eq!(two, ["00", "10", "01", "11"]);
        assert!(matches!(
            enumerate_scenarios(25),
            Err(Error::TooManyNames { n: 25, cutoff: 24 })
        ));
    }

    #[test]
    fn enumeration_five_sums_any_measure_to_one() {
        let p = uniform5();
        let table = ScenarioTable::independent(&p).unwrap();
        let scenarios: Vec<_> = enumerate_scenarios(5).unwrap().collect();
        assert_eq!(scenarios.len(), 32);
        let mut distinct = scenarios.clone();
        distinct.sort();
        distinct.dedup();
        assert_eq!(distinct.len(), 32);
        let total: f64 = scenarios.iter().map(|s| table.prob(s)).sum();
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn independent_table_marginals() {
        let p = uniform5();
        let t = ScenarioTable::independent(&p).unwrap();
        for (m, q) in t.marginals().iter().zip(p.default_probs()) {
            assert!((m - q).abs() < 1e-15);
        }
        let joint = t.pair_prob(0, 4, true, true);
        assert!((joint - 0.006 * 0.04).abs() < 1e-16);
    }

    #[test]
    fn table_rejects_bad_input() {
        assert!(ScenarioTable::new(1, vec![0.5]).is_err());
        assert!(ScenarioTable::new(1, vec![1.1, -0.1]).is_err());
        assert!(ScenarioTable::new(1, vec![0.5, 0.6]).is_err());
        assert!(ScenarioTable::new(1, vec![0.5, 0.5]).is_ok());
    }

    #[test]
    fn loss_distribution_merges_levels() {
        let d = LossDistribution::from_weighted(vec![(0.2, 0.25), (0.0, 0.5), (0.1 + 0.1, 0.25), (0.4, 0.0)])
            .unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.points()[0], (0.0, 0.5));
        assert!((d.prob_at(0.2) - 0.5).abs() < 1e-15);
        assert!(LossDistribution::from_weighted(Vec::new()).is_err());
        assert!(LossDistribution::from_weighted(vec![(0.0, 0.9)]).is_err());
    }

    #[test]
    fn hierarchy_detection() {
        assert!(DefaultScenario::new(vec![false, false, true, true]).is_hierarchical());
        assert!(DefaultScenario::none(3).is_hierarchical());
        assert!(!DefaultScenario::new(vec![true, false, true]).is_hierarchical());
    }

    fn obligors() -> impl Strategy<Value = Vec<ObligorName>> {
        prop::collection::vec((0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64), 1..9).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(i, (p, r, n))| ObligorName::new(format!("n{i}"), p, r, n).unwrap())
                .collect()
        })
    }

    proptest! {
        #[test]
        fn permutation_invariant_order(names in obligors(), seed in any::<u64>()) {
            let a = ReferencePortfolio::new(names.clone()).unwrap();
            let mut shuffled = names;
            // deterministic shuffle; probabilities are continuous so ties are negligible
            let len = shuffled.len();
            for i in (1..len).rev() {
                let j = (seed.wrapping_mul(6364136223846793005).wrapping_add(i as u64) % (i as u64 + 1)) as usize;
                shuffled.swap(i, j);
            }
            let b = ReferencePortfolio::new(shuffled).unwrap();
            prop_assert_eq!(a.default_probs(), b.default_probs());
            prop_assert!(a.default_probs().windows(2).all(|w| w[0] <= w[1]));
        }

        #[test]
        fn loss_monotone_in_defaults(names in obligors(), mask in any::<u64>(), extra in 0usize..8) {
            let p = ReferencePortfolio::new(names).unwrap();
            let n = p.len();
            let base = DefaultScenario::from_mask(mask & ((1u64 << n) - 1), n);
            let mut more = base.indicators().to_vec();
            more[extra % n] = true;
            let l0 = portfolio_loss(&p, &base).unwrap();
            let l1 = portfolio_loss(&p, &DefaultScenario::new(more)).unwrap();
            prop_assert!(l1 >= l0);
            prop_assert!(l1 <= p.total_loss_capacity() + 1e-15);
        }

        #[test]
        fn enumeration_is_exhaustive(n in 0usize..11) {
            let masks: std::collections::BTreeSet<u64> =
                enumerate_scenarios(n).unwrap().map(|s| s.mask().unwrap()).collect();
            prop_assert_eq!(masks.len(), 1usize << n);
        }
    }
}
