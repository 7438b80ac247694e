//! Single-period valuation at zero interest rates: every product is worth
//! its expected terminal payoff under the chosen default law.
//!
//! Tranche values are fractions of total portfolio notional. A single-name
//! CDS is valued per unit notional of its own name.

use serde::Serialize;

use crate::copula::{flat_gaussian_expectation, AssetCorrelationSpec, CopulaSampler};
use crate::error::{Error, Result};
use crate::ladder::LadderProcess;
use crate::model::{mask_loss, pairwise_sum, ObligorName, ReferencePortfolio, ScenarioTable};
use crate::sampling::{self, DrawSampler, RunningStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrancheKind {
    /// Pays `[L - A]_+`.
    Supersenior,
    /// Pays `min(L, A)`.
    Equity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrancheSpec {
    pub attachment: f64,
    pub kind: TrancheKind,
}

impl TrancheSpec {
    pub fn new(attachment: f64, kind: TrancheKind) -> Result<Self> {
        if !attachment.is_finite() || attachment < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "attachment {attachment} must be a finite non-negative fraction"
            )));
        }
        Ok(Self { attachment, kind })
    }

    pub fn supersenior(attachment: f64) -> Result<Self> {
        Self::new(attachment, TrancheKind::Supersenior)
    }

    pub fn equity(attachment: f64) -> Result<Self> {
        Self::new(attachment, TrancheKind::Equity)
    }

    pub fn payoff(&self, loss: f64) -> f64 {
        match self.kind {
            TrancheKind::Supersenior => (loss - self.attachment).max(0.0),
            TrancheKind::Equity => loss.min(self.attachment),
        }
    }

    /// A supersenior tranche attached at or above the largest possible loss
    /// is never hit.
    fn never_hit(&self, portfolio: &ReferencePortfolio) -> bool {
        self.kind == TrancheKind::Supersenior && self.attachment >= portfolio.total_loss_capacity()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PricingMethod {
    Exhaustive,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Valuation {
    pub value: f64,
    /// Zero for exhaustive valuations.
    pub stderr: f64,
    pub method: PricingMethod,
    pub draws: Option<u64>,
    pub seed: Option<u64>,
}

impl Valuation {
    fn exact(value: f64) -> Self {
        Self {
            value,
            stderr: 0.0,
            method: PricingMethod::Exhaustive,
            draws: None,
            seed: None,
        }
    }
}

/// A joint default law that can be valued without sampling.
#[derive(Debug, Clone, PartialEq)]
pub enum DefaultLaw {
    Table(ScenarioTable),
    Ladder(LadderProcess),
    /// One-factor Gaussian copula at a flat asset correlation, integrated
    /// over the factor.
    FlatGaussian(f64),
}

/// `l_i * p_i`: expected protection payment per unit notional.
pub fn price_single_name_cds(name: &ObligorName) -> Valuation {
    Valuation::exact(name.lgd * name.default_prob)
}

/// Exact expectation of `g(L)` under `law`.
pub fn expect_exhaustive(portfolio: &ReferencePortfolio, law: &DefaultLaw, g: impl Fn(f64) -> f64) -> Result<f64> {
    match law {
        DefaultLaw::Table(t) => {
            if t.n_names() != portfolio.len() {
                return Err(Error::ScenarioSize {
                    expected: portfolio.len(),
                    got: t.n_names(),
                });
            }
            let caps = portfolio.loss_capacities();
            let terms: Vec<f64> = t
                .probs()
                .iter()
                .enumerate()
                .map(|(m, &w)| if w == 0.0 { 0.0 } else { w * g(mask_loss(&caps, m as u64)) })
                .collect();
            Ok(pairwise_sum(&terms))
        }
        DefaultLaw::Ladder(l) => {
            if l.portfolio() != portfolio {
                return Err(Error::InvalidArgument(
                    "ladder process was built for a different portfolio".into(),
                ));
            }
            let terms: Vec<f64> = l
                .scenario_probs()
                .iter()
                .enumerate()
                .map(|(k, &w)| if w == 0.0 { 0.0 } else { w * g(l.scenario_loss(k)) })
                .collect();
            Ok(pairwise_sum(&terms))
        }
        DefaultLaw::FlatGaussian(rho) => flat_gaussian_expectation(portfolio, *rho, g),
    }
}

pub fn price_tranche_exhaustive(
    portfolio: &ReferencePortfolio,
    tranche: &TrancheSpec,
    law: &DefaultLaw,
) -> Result<Valuation> {
    let value = expect_exhaustive(portfolio, law, |l| tranche.payoff(l))?;
    if tranche.never_hit(portfolio) {
        return Ok(Valuation::exact(0.0));
    }
    Ok(Valuation::exact(value.max(0.0)))
}

/// Sample mean of the payoff over draws from any sampler.
pub fn price_tranche_mc_with(
    portfolio: &ReferencePortfolio,
    tranche: &TrancheSpec,
    sampler: &(impl DrawSampler + ?Sized),
    draws: u64,
    seed: u64,
) -> Result<Valuation> {
    if sampler.n_names() != portfolio.len() {
        return Err(Error::ScenarioSize {
            expected: portfolio.len(),
            got: sampler.n_names(),
        });
    }
    let caps = portfolio.loss_capacities();
    let stats = sampling::fold_draws(
        sampler,
        draws,
        seed,
        RunningStats::default,
        |s, d| s.push(tranche.payoff(crate::model::indicator_loss(&caps, d))),
        RunningStats::merge,
    )?;
    let value = if tranche.never_hit(portfolio) { 0.0 } else { stats.mean };
    Ok(Valuation {
        value,
        stderr: if tranche.never_hit(portfolio) { 0.0 } else { stats.stderr() },
        method: PricingMethod::MonteCarlo,
        draws: Some(draws),
        seed: Some(seed),
    })
}

pub fn price_tranche_mc(
    portfolio: &ReferencePortfolio,
    tranche: &TrancheSpec,
    corr: &AssetCorrelationSpec,
    draws: u64,
    seed: u64,
) -> Result<Valuation> {
    price_tranche_mc_with(portfolio, tranche, &CopulaSampler::new(portfolio, corr)?, draws, seed)
}

/// Both sides of `equity(A) + supersenior(A) = E[L]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParityReport {
    pub attachment: f64,
    pub equity: f64,
    pub supersenior: f64,
    /// `equity + supersenior`.
    pub tranche_sum: f64,
    /// `sum N_i l_i p_i`, which depends on marginals only.
    pub expected_loss: f64,
    pub gap: f64,
    /// Standard error of the simulated total loss; zero when exact.
    pub stderr: f64,
}

pub fn parity_check(portfolio: &ReferencePortfolio, attachment: f64, law: &DefaultLaw) -> Result<ParityReport> {
    let equity = price_tranche_exhaustive(portfolio, &TrancheSpec::equity(attachment)?, law)?.value;
    let supersenior = price_tranche_exhaustive(portfolio, &TrancheSpec::supersenior(attachment)?, law)?.value;
    let expected_loss = portfolio.expected_loss();
    Ok(ParityReport {
        attachment,
        equity,
        supersenior,
        tranche_sum: equity + supersenior,
        expected_loss,
        gap: (equity + supersenior - expected_loss).abs(),
        stderr: 0.0,
    })
}

/// Parity under simulation: both tranches are valued on the same draws, and
/// the gap to the marginal expected loss is sampling error.
pub fn parity_check_mc(
    portfolio: &ReferencePortfolio,
    attachment: f64,
    corr: &AssetCorrelationSpec,
    draws: u64,
    seed: u64,
) -> Result<ParityReport> {
    let eq = TrancheSpec::equity(attachment)?;
    let ss = TrancheSpec::supersenior(attachment)?;
    let caps = portfolio.loss_capacities();
    let sampler = CopulaSampler::new(portfolio, corr)?;
    let [e, s, l] = sampling::fold_draws(
        &sampler,
        draws,
        seed,
        || [RunningStats::default(); 3],
        |acc, d| {
            let loss = crate::model::indicator_loss(&caps, d);
            acc[0].push(eq.payoff(loss));
            acc[1].push(ss.payoff(loss));
            acc[2].push(loss);
        },
        |a, b| [a[0].merge(b[0]), a[1].merge(b[1]), a[2].merge(b[2])],
    )?;
    let expected_loss = portfolio.expected_loss();
    Ok(ParityReport {
        attachment,
        equity: e.mean,
        supersenior: s.mean,
        tranche_sum: e.mean + s.mean,
        expected_loss,
        gap: (e.mean + s.mean - expected_loss).abs(),
        stderr: l.stderr(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::copula::flat_gaussian_table;
    use crate::ladder::{build_ladder, LadderSampler};
    use proptest::prelude::*;

    fn portfolio(ps: &[f64]) -> ReferencePortfolio {
        ReferencePortfolio::new(
            ps.iter()
                .enumerate()
                .map(|(i, &p)| ObligorName::new(format!("n{}", i + 1), p, 0.0, 1.0 / ps.len() as f64).unwrap())
                .collect(),
        )
        .unwrap()
    }

    fn five() -> ReferencePortfolio {
        portfolio(&[0.006, 0.01, 0.01, 0.012, 0.04])
    }

    fn ladder(p: &ReferencePortfolio) -> DefaultLaw {
        DefaultLaw::Ladder(build_ladder(p))
    }

    #[test]
    fn cds_values() {
        let n = ObligorName::new("a", 0.006, 0.0, 0.2).unwrap();
        assert_eq!(price_single_name_cds(&n).value, 0.006);
        let n = ObligorName::new("b", 0.0, 0.3, 0.2).unwrap();
        assert_eq!(price_single_name_cds(&n).value, 0.0);
        let n = ObligorName::new("c", 0.04, 0.4, 0.2).unwrap();
        assert!((price_single_name_cds(&n).value - 0.024).abs() < 1e-17);
    }

    #[test]
    fn five_name_ladder_supersenior() {
        let p = five();
        let v = price_tranche_exhaustive(&p, &TrancheSpec::supersenior(0.5).unwrap(), &ladder(&p)).unwrap();
        // 0.004 * (0.8 - 0.5) + 0.006 * (1.0 - 0.5)
        assert!((v.value - 0.0042).abs() < 1e-15);
        assert_eq!(v.stderr, 0.0);
        assert_eq!(v.method, PricingMethod::Exhaustive);
        let table = DefaultLaw::Table(build_ladder(&p).to_table().unwrap());
        let w = price_tranche_exhaustive(&p, &TrancheSpec::supersenior(0.5).unwrap(), &table).unwrap();
        assert!((w.value - v.value).abs() < 1e-16);
    }

    #[test]
    fn never_hit_is_exactly_zero() {
        let p = five();
        let cap = p.total_loss_capacity();
        for law in [ladder(&p), DefaultLaw::FlatGaussian(0.3), DefaultLaw::Table(ScenarioTable::independent(&p).unwrap())] {
            let v = price_tranche_exhaustive(&p, &TrancheSpec::supersenior(cap).unwrap(), &law).unwrap();
            assert_eq!(v.value, 0.0);
        }
    }

    #[test]
    fn full_equity_is_expected_loss() {
        let p = five();
        let el = p.expected_loss();
        assert!((el - 0.0156).abs() < 1e-15);
        for law in [ladder(&p), DefaultLaw::FlatGaussian(0.6), DefaultLaw::Table(ScenarioTable::independent(&p).unwrap())] {
            let v = price_tranche_exhaustive(&p, &TrancheSpec::equity(1.0).unwrap(), &law).unwrap();
            assert!((v.value - el).abs() < 1e-12);
        }
    }

    #[test]
    fn five_name_parity() {
        let p = five();
        let r = parity_check(&p, 0.5, &ladder(&p)).unwrap();
        assert!((r.supersenior - 0.0042).abs() < 1e-15);
        assert!((r.equity - 0.0114).abs() < 1e-15);
        assert!((r.expected_loss - 0.0156).abs() < 1e-15);
        assert!(r.gap < 1e-12);
    }

    #[test]
    fn mc_matches_ladder_price() {
        let p = five();
        let t = TrancheSpec::supersenior(0.5).unwrap();
        let v = price_tranche_mc(&p, &t, &AssetCorrelationSpec::Flat(1.0), 1_000_000, 17).unwrap();
        assert_eq!(v.method, PricingMethod::MonteCarlo);
        assert!((v.value - 0.0042).abs() < 4.0 * v.stderr, "{} +- {}", v.value, v.stderr);
        let again = price_tranche_mc(&p, &t, &AssetCorrelationSpec::Flat(1.0), 1_000_000, 17).unwrap();
        assert_eq!(v.value.to_bits(), again.value.to_bits());
        assert_eq!(v.stderr.to_bits(), again.stderr.to_bits());
        let u = price_tranche_mc_with(&p, &t, &LadderSampler::new(&build_ladder(&p)), 1_000_000, 3).unwrap();
        assert!((u.value - 0.0042).abs() < 4.0 * u.stderr);
    }

    #[test]
    fn mc_zero_attachment_is_expected_loss() {
        let p = five();
        let v = price_tranche_mc(&p, &TrancheSpec::supersenior(0.0).unwrap(), &AssetCorrelationSpec::Flat(0.0), 500_000, 8)
            .unwrap();
        assert!((v.value - p.expected_loss()).abs() < 4.0 * v.stderr);
    }

    #[test]
    fn mc_parity_gap_within_error() {
        let p = five();
        for rho in [0.0, 1.0] {
            let r = parity_check_mc(&p, 0.3, &AssetCorrelationSpec::Flat(rho), 400_000, 5).unwrap();
            assert!(r.gap < 4.0 * r.stderr, "rho {rho}");
        }
    }

    #[test]
    fn supersenior_monotone_in_rho() {
        let p = five();
        let t = TrancheSpec::supersenior(0.3).unwrap();
        assert!(t.attachment > p.expected_loss());
        let prices: Vec<f64> = (0..=10)
            .map(|k| price_tranche_exhaustive(&p, &t, &DefaultLaw::FlatGaussian(k as f64 / 10.0)).unwrap().value)
            .collect();
        assert!(prices.windows(2).all(|w| w[0] <= w[1] + 1e-14), "{prices:?}");
        let top = price_tranche_exhaustive(&p, &t, &ladder(&p)).unwrap().value;
        assert_eq!(prices[10], top);
    }

    #[test]
    fn flat_law_matches_its_table() {
        let p = five();
        let t = TrancheSpec::supersenior(0.3).unwrap();
        let a = price_tranche_exhaustive(&p, &t, &DefaultLaw::FlatGaussian(0.45)).unwrap().value;
        let b = price_tranche_exhaustive(&p, &t, &DefaultLaw::Table(flat_gaussian_table(&p, 0.45).unwrap()))
            .unwrap()
            .value;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn exhaustive_and_mc_agree_on_fixed_portfolios() {
        let p10: Vec<f64> = (1..=10).map(|i| 0.01 * i as f64).collect();
        for (ps, a) in [(p10.as_slice(), 0.15), (&[0.006, 0.01, 0.01, 0.012, 0.04][..], 0.2), (&[0.05, 0.2, 0.3][..], 0.3)] {
            let p = portfolio(ps);
            for rho in [0.0, 0.3, 0.8, 1.0] {
                let t = TrancheSpec::supersenior(a).unwrap();
                let exact = price_tranche_exhaustive(&p, &t, &DefaultLaw::FlatGaussian(rho)).unwrap().value;
                let mc = price_tranche_mc(&p, &t, &AssetCorrelationSpec::Flat(rho), 400_000, 99).unwrap();
                assert!((mc.value - exact).abs() < 4.0 * mc.stderr, "rho {rho}: {} +- {} vs {exact}", mc.value, mc.stderr);
            }
        }
    }

    #[test]
    fn validation() {
        assert!(TrancheSpec::supersenior(-0.1).is_err());
        assert!(TrancheSpec::equity(f64::NAN).is_err());
        let p = five();
        let other = DefaultLaw::Table(ScenarioTable::independent(&portfolio(&[0.1])).unwrap());
        assert!(price_tranche_exhaustive(&p, &TrancheSpec::equity(0.1).unwrap(), &other).is_err());
        assert!(price_tranche_mc(&p, &TrancheSpec::equity(0.1).unwrap(), &AssetCorrelationSpec::Flat(0.2), 0, 1).is_err());
    }

    fn random_portfolio() -> impl Strategy<Value = ReferencePortfolio> {
        prop::collection::vec((0.001f64..0.3, 0.0f64..0.9, 0.05f64..1.0), 1..=8).prop_map(|v| {
            let total: f64 = v.iter().map(|x| x.2).sum();
            ReferencePortfolio::new(
                v.iter()
                    .enumerate()
                    .map(|(i, &(p, r, w))| ObligorName::new(format!("n{i}"), p, r, w / total).unwrap())
                    .collect(),
            )
            .unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn supersenior_non_increasing_in_attachment(p in random_portfolio(), rho in 0.0f64..=1.0) {
            let table = DefaultLaw::Table(flat_gaussian_table(&p, rho).unwrap());
            let cap = p.total_loss_capacity();
            let mut prev = f64::INFINITY;
            for k in 0..=20 {
                let v = price_tranche_exhaustive(&p, &TrancheSpec::supersenior(cap * k as f64 / 20.0).unwrap(), &table).unwrap();
                prop_assert!(v.value >= 0.0);
                prop_assert!(v.value <= prev + 1e-15);
                prev = v.value;
            }
        }

        #[test]
        fn exhaustive_and_mc_agree(p in random_portfolio(), rho in 0.0f64..=1.0, frac in 0.0f64..1.0, seed in any::<u64>()) {
            let t = TrancheSpec::supersenior(frac * p.total_loss_capacity()).unwrap();
            let exact = price_tranche_exhaustive(&p, &t, &DefaultLaw::FlatGaussian(rho)).unwrap();
            let mc = price_tranche_mc(&p, &t, &AssetCorrelationSpec::Flat(rho), 100_000, seed).unwrap();
            prop_assert!(mc.value >= 0.0);
            // a tail that is never sampled has zero sample variance; allow ten
            // draws' worth of payoff for it
            let band = 4.0 * mc.stderr + 10.0 / 100_000.0 * p.total_loss_capacity();
            prop_assert!((mc.value - exact.value).abs() <= band,
                "mc {} +- {} vs exact {}", mc.value, mc.stderr, exact.value);
        }
    }
}
