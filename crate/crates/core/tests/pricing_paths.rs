//! Cross-checks between the exact, quadrature and Monte Carlo pricing paths.

use corrbreak::copula::{flat_gaussian_table, AssetCorrelationSpec};
use corrbreak::implied::{implied_flat_correlation, CalibrationStatus, PricingConfig};
use corrbreak::ladder::build_ladder;
use corrbreak::model::{ObligorName, ReferencePortfolio, ScenarioTable};
use corrbreak::pricing::{price_tranche_exhaustive, price_tranche_mc, DefaultLaw, TrancheSpec};
use proptest::prelude::*;

fn portfolio(spec: &[(f64, f64, f64)]) -> ReferencePortfolio {
    ReferencePortfolio::new(
        spec.iter()
            .enumerate()
            .map(|(i, &(p, r, n))| ObligorName::new(format!("n{i}"), p, r, n).unwrap())
            .collect(),
    )
    .unwrap()
}

fn phi(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

fn phi_inv(p: f64) -> f64 {
    let (mut lo, mut hi) = (-40.0, 40.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if phi(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Scenario table of the one-factor Gaussian model by composite Simpson over
/// the factor on a uniform grid.
fn simpson_table(p: &[f64], rho: f64) -> Vec<f64> {
    let n = p.len();
    let c: Vec<f64> = p.iter().map(|&x| phi_inv(x)).collect();
    let (a, b) = (rho.sqrt(), (1.0 - rho).sqrt());
    let steps = 40_000;
    let h = 20.0 / steps as f64;
    let mut table = vec![0.0; 1 << n];
    for k in 0..=steps {
        let z = -10.0 + k as f64 * h;
        let w = if k == 0 || k == steps { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
        let density = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let cond: Vec<f64> = c.iter().map(|&ci| phi((ci - a * z) / b)).collect();
        for (m, slot) in table.iter_mut().enumerate() {
            let prod: f64 = (0..n)
                .map(|i| if m >> i & 1 == 1 { cond[i] } else { 1.0 - cond[i] })
                .product();
            *slot += w * h / 3.0 * density * prod;
        }
    }
    table
}

#[test]
fn flat_gaussian_table_matches_simpson() {
    let p = [0.01, 0.03, 0.05, 0.2];
    let pf = portfolio(&p.map(|x| (x, 0.4, 0.25)));
    for rho in [0.05, 0.3, 0.6, 0.9] {
        let got = flat_gaussian_table(&pf, rho).unwrap();
        let want = simpson_table(&p, rho);
        for (m, (g, w)) in got.probs().iter().zip(&want).enumerate() {
            assert!((g - w).abs() < 1e-9, "rho {rho} mask {m}: {g} vs {w}");
        }
    }
}

#[test]
fn quadrature_and_table_prices_agree() {
    let pf = portfolio(&[(0.02, 0.4, 0.2), (0.04, 0.3, 0.3), (0.08, 0.5, 0.1), (0.1, 0.0, 0.4)]);
    for a in [0.0, 0.05, 0.2, 0.45] {
        let t = TrancheSpec::supersenior(a).unwrap();
        for rho in [0.0, 0.25, 0.75] {
            let quad = price_tranche_exhaustive(&pf, &t, &DefaultLaw::FlatGaussian(rho)).unwrap().value;
            let table = price_tranche_exhaustive(&pf, &t, &DefaultLaw::Table(flat_gaussian_table(&pf, rho).unwrap()))
                .unwrap()
                .value;
            assert!((quad - table).abs() < 1e-12, "A {a} rho {rho}: {quad} vs {table}");
        }
    }
    let indep = ScenarioTable::independent(&pf).unwrap();
    let t = TrancheSpec::equity(0.2).unwrap();
    let zero = price_tranche_exhaustive(&pf, &t, &DefaultLaw::FlatGaussian(0.0)).unwrap().value;
    let direct = price_tranche_exhaustive(&pf, &t, &DefaultLaw::Table(indep)).unwrap().value;
    assert!((zero - direct).abs() < 1e-14);
}

#[test]
fn monte_carlo_within_four_sigma() {
    let pf = portfolio(&[(0.02, 0.4, 0.25), (0.05, 0.4, 0.25), (0.07, 0.4, 0.25), (0.12, 0.4, 0.25)]);
    for (a, rho) in [(0.05, 0.2), (0.15, 0.5), (0.3, 0.8)] {
        let t = TrancheSpec::supersenior(a).unwrap();
        let exact = price_tranche_exhaustive(&pf, &t, &DefaultLaw::FlatGaussian(rho)).unwrap().value;
        let mc = price_tranche_mc(&pf, &t, &AssetCorrelationSpec::flat(rho).unwrap(), 400_000, 11).unwrap();
        assert!((mc.value - exact).abs() < 4.0 * mc.stderr, "A {a} rho {rho}: {} +- {} vs {exact}", mc.value, mc.stderr);
    }
}

#[test]
fn monte_carlo_implied_correlation_brackets_truth() {
    let pf = portfolio(&[(0.02, 0.4, 0.25), (0.05, 0.4, 0.25), (0.07, 0.4, 0.25), (0.12, 0.4, 0.25)]);
    let t = TrancheSpec::supersenior(0.1).unwrap();
    let quote = price_tranche_exhaustive(&pf, &t, &DefaultLaw::FlatGaussian(0.4)).unwrap().value;
    let r = implied_flat_correlation(&pf, &t, quote, PricingConfig::MonteCarlo { draws: 400_000, seed: 3 }).unwrap();
    assert_eq!(r.status, CalibrationStatus::Solved);
    assert!((r.rho.unwrap() - 0.4).abs() < 0.05, "{r:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn supersenior_price_increases_with_correlation(
        names in prop::collection::vec((0.005f64..0.3, 0.0f64..0.8, 0.1f64..1.0), 2..7),
        frac in 0.05f64..0.9,
    ) {
        let pf = portfolio(&names);
        let t = TrancheSpec::supersenior(frac * pf.total_loss_capacity()).unwrap();
        let mut last = f64::NEG_INFINITY;
        for k in 0..=10 {
            let rho = k as f64 / 10.0;
            let law = if k == 10 { DefaultLaw::Ladder(build_ladder(&pf)) } else { DefaultLaw::FlatGaussian(rho) };
            let v = price_tranche_exhaustive(&pf, &t, &law).unwrap().value;
            prop_assert!(v >= last - 1e-12, "rho {rho}: {v} < {last}");
            last = v;
        }
    }
}
