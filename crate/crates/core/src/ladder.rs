//! The maximal-correlation default process.
//!
//! With names sorted by default probability, draw one uniform `X` and let
//! every name with `p_i > X` default. Scenario `n` ("the first `n` names
//! survive, the rest default") then has probability `p_{n+1} - p_n`, with
//! `p_0 = 0` and `p_{N+1} = 1`, and no other scenario can occur. This law
//! attains the upper correlation bound for every pair at once and is the
//! only law that does.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{DefaultScenario, LossDistribution, ReferencePortfolio, ScenarioTable};
use crate::sampling::{self, BlockRng, DrawSampler};

/// Absolute tolerance per entry used by [`verify_uniqueness`].
pub const UNIQUENESS_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LadderProcess {
    portfolio: ReferencePortfolio,
    scenario_probs: Vec<f64>,
}

impl LadderProcess {
    pub fn portfolio(&self) -> &ReferencePortfolio {
        &self.portfolio
    }

    /// `P_(n)` for `n = 0..=N`, indexed by the number of surviving names.
    pub fn scenario_probs(&self) -> &[f64] {
        &self.scenario_probs
    }

    pub fn n_names(&self) -> usize {
        self.portfolio.len()
    }

    /// Scenario with the first `survivors` names alive and the rest defaulted.
    pub fn scenario(&self, survivors: usize) -> DefaultScenario {
        let n = self.n_names();
        DefaultScenario::new((0..n).map(|i| i >= survivors).collect())
    }

    /// Mask of [`Self::scenario`] in the `2^N` table layout.
    pub fn scenario_mask(&self, survivors: usize) -> u64 {
        let n = self.n_names();
        let full = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
        let alive = if survivors >= 64 { u64::MAX } else { (1u64 << survivors) - 1 };
        full & !alive
    }

    /// Loss of scenario `survivors`, summed from the riskiest name down.
    pub fn scenario_loss(&self, survivors: usize) -> f64 {
        self.portfolio.names()[survivors..]
            .iter()
            .rev()
            .fold(0.0, |acc, o| acc + o.loss_capacity())
    }

    /// The same law as a full `2^N` table; non-ladder scenarios get 0.
    pub fn to_table(&self) -> Result<ScenarioTable> {
        self.portfolio.ensure_enumerable()?;
        let mut probs = vec![0.0; 1usize << self.n_names()];
        for (k, &p) in self.scenario_probs.iter().enumerate() {
            probs[self.scenario_mask(k) as usize] += p;
        }
        ScenarioTable::new(self.n_names(), probs)
    }
}

pub fn build_ladder(portfolio: &ReferencePortfolio) -> LadderProcess {
    let p = portfolio.default_probs();
    let n = p.len();
    let scenario_probs = (0..=n)
        .map(|k| {
            let lo = if k == 0 { 0.0 } else { p[k - 1] };
            let hi = if k == n { 1.0 } else { p[k] };
            hi - lo
        })
        .collect();
    LadderProcess {
        portfolio: portfolio.clone(),
        scenario_probs,
    }
}

pub fn ladder_loss_distribution(process: &LadderProcess) -> Result<LossDistribution> {
    LossDistribution::from_weighted(
        process
            .scenario_probs
            .iter()
            .enumerate()
            .map(|(k, &p)| (process.scenario_loss(k), p)),
    )
}

/// Draws one uniform per scenario and defaults every name with `p_i > X`.
#[derive(Debug, Clone)]
pub struct LadderSampler {
    probs: Vec<f64>,
}

impl LadderSampler {
    pub fn new(process: &LadderProcess) -> Self {
        Self {
            probs: process.portfolio.default_probs(),
        }
    }

    /// Indicators for a given uniform `x`.
    pub fn apply(&self, x: f64, out: &mut [bool]) {
        for (o, &p) in out.iter_mut().zip(&self.probs) {
            *o = p > x;
        }
    }

    /// Number of surviving names for a given uniform `x`.
    pub fn survivors(&self, x: f64) -> usize {
        self.probs.partition_point(|&p| p <= x)
    }
}

impl DrawSampler for LadderSampler {
    fn n_names(&self) -> usize {
        self.probs.len()
    }

    fn draw(&self, rng: &mut BlockRng, out: &mut [bool]) {
        let x: f64 = rng.random();
        self.apply(x, out);
    }
}

pub fn simulate_ladder(process: &LadderProcess, draws: u64, seed: u64) -> Result<Vec<DefaultScenario>> {
    sampling::fold_draws(
        &LadderSampler::new(process),
        draws,
        seed,
        Vec::new,
        |acc: &mut Vec<DefaultScenario>, d| acc.push(DefaultScenario::new(d.to_vec())),
        |mut a, mut b| {
            a.append(&mut b);
            a
        },
    )
}

/// Outcome of checking a joint table against the ladder characterisation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniquenessReport {
    pub marginals_match: bool,
    pub max_marginal_error: f64,
    /// Every pair has `P(I_i = 1, I_j = 1) = min(p_i, p_j)`.
    pub saturated: bool,
    pub max_saturation_error: f64,
    pub equals_ladder: bool,
    pub max_ladder_deviation: f64,
}

impl UniquenessReport {
    /// The table has the right marginals and saturates every pair.
    pub fn passes(&self) -> bool {
        self.marginals_match && self.saturated
    }

    /// Marginals plus saturation force the ladder table.
    pub fn uniqueness_holds(&self) -> bool {
        !self.passes() || self.equals_ladder
    }
}

pub fn verify_uniqueness(table: &ScenarioTable, portfolio: &ReferencePortfolio) -> Result<UniquenessReport> {
    portfolio.ensure_enumerable()?;
    let n = portfolio.len();
    if table.n_names() != n {
        return Err(Error::ScenarioSize {
            expected: n,
            got: table.n_names(),
        });
    }
    let p = portfolio.default_probs();

    let mut single = vec![0.0; n];
    let mut joint = vec![0.0; n * n];
    for (mask, &w) in table.probs().iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for i in 0..n {
            if mask >> i & 1 == 0 {
                continue;
            }
            single[i] += w;
            for j in i + 1..n {
                if mask >> j & 1 == 1 {
                    joint[i * n + j] += w;
                }
            }
        }
    }

    let max_marginal_error = single
        .iter()
        .zip(&p)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let mut max_saturation_error: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            max_saturation_error = max_saturation_error.max((joint[i * n + j] - p[i].min(p[j])).abs());
        }
    }
    let ladder = build_ladder(portfolio).to_table()?;
    let max_ladder_deviation = table
        .probs()
        .iter()
        .zip(ladder.probs())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    Ok(UniquenessReport {
        marginals_match: max_marginal_error <= UNIQUENESS_TOLERANCE,
        max_marginal_error,
        saturated: max_saturation_error <= UNIQUENESS_TOLERANCE,
        max_saturation_error,
        equals_ladder: max_ladder_deviation <= UNIQUENESS_TOLERANCE,
        max_ladder_deviation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::correlation_upper_bound;
    use crate::model::ObligorName;
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

    #[test]
    fn five_name_probabilities() {
        let l = build_ladder(&five());
        // indexed by survivors: 0 (all default) .. 5 (none default)
        assert_eq!(l.scenario_probs(), &[0.006, 0.004, 0.0, 0.002, 0.028, 0.96]);
        assert_eq!(l.scenario_probs()[5], 1.0 - 0.04);
        assert_eq!(l.scenario_probs()[4], 0.04 - 0.012);
        assert_eq!(l.scenario_probs()[3], 0.012 - 0.01);
    }

    #[test]
    fn small_cases() {
        let l = build_ladder(&portfolio(&[0.3]));
        assert_eq!(l.scenario_probs(), &[0.3, 0.7]);
        let l = build_ladder(&portfolio(&[0.2, 0.2, 0.2]));
        assert_eq!(l.scenario_probs(), &[0.2, 0.0, 0.0, 0.8]);
    }

    #[test]
    fn five_name_loss_distribution() {
        let d = ladder_loss_distribution(&build_ladder(&five())).unwrap();
        let want = [(0.0, 0.96), (0.2, 0.028), (0.4, 0.002), (0.8, 0.004), (1.0, 0.006)];
        assert_eq!(d.len(), 5);
        for ((l, p), (wl, wp)) in d.points().iter().zip(want) {
            assert!((l - wl).abs() < 1e-15);
            assert!((p - wp).abs() < 1e-15);
        }
        let zero_lgd = ReferencePortfolio::new(vec![
            ObligorName::new("a", 0.1, 1.0, 0.5).unwrap(),
            ObligorName::new("b", 0.3, 1.0, 0.5).unwrap(),
        ])
        .unwrap();
        let d = ladder_loss_distribution(&build_ladder(&zero_lgd)).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.points()[0].0.to_bits(), 0.0f64.to_bits());
        assert!((d.points()[0].1 - 1.0).abs() < 1e-15);
        let two_point = portfolio(&[0.0, 0.0, 0.25]);
        let d = ladder_loss_distribution(&build_ladder(&two_point)).unwrap();
        assert_eq!(d.len(), 2);
    }

    #[test]
    fn sampler_trigger_convention() {
        let s = LadderSampler::new(&build_ladder(&five()));
        let mut out = [false; 5];
        s.apply(0.5, &mut out);
        assert_eq!(out, [false; 5]);
        s.apply(0.011, &mut out);
        assert_eq!(out, [false, false, false, true, true]);
        assert_eq!(s.survivors(0.011), 3);
        // a tie does not trigger default
        s.apply(0.01, &mut out);
        assert_eq!(out, [false, false, false, true, true]);
        let zero = LadderSampler::new(&build_ladder(&portfolio(&[0.0, 0.5])));
        let mut out = [true; 2];
        zero.apply(0.0, &mut out);
        assert_eq!(out, [false, true]);
    }

    #[test]
    fn simulated_all_default_frequency() {
        let l = build_ladder(&five());
        let draws = 1_000_000u64;
        let all = sampling::fold_draws(
            &LadderSampler::new(&l),
            draws,
            42,
            || 0u64,
            |a, d| *a += d.iter().all(|&x| x) as u64,
            |a, b| a + b,
        )
        .unwrap();
        let p = 0.006;
        let sd = (p * (1.0 - p) / draws as f64).sqrt();
        assert!((all as f64 / draws as f64 - p).abs() < 3.0 * sd);
    }

    #[test]
    fn simulate_is_deterministic_and_hierarchical() {
        let l = build_ladder(&five());
        let a = simulate_ladder(&l, 5000, 3).unwrap();
        assert_eq!(a, simulate_ladder(&l, 5000, 3).unwrap());
        assert_eq!(a.len(), 5000);
        assert!(a.iter().all(DefaultScenario::is_hierarchical));
        assert!(simulate_ladder(&l, 0, 3).is_err());
    }

    #[test]
    fn uniqueness_accepts_ladder() {
        let p = five();
        let t = build_ladder(&p).to_table().unwrap();
        let r = verify_uniqueness(&t, &p).unwrap();
        assert!(r.passes() && r.equals_ladder && r.uniqueness_holds());
        assert_eq!(r.max_ladder_deviation, 0.0);
    }

    #[test]
    fn uniqueness_rejects_moved_mass() {
        let p = five();
        let mut probs = build_ladder(&p).to_table().unwrap().probs().to_vec();
        probs[0] -= 1e-3;
        probs[0b00001] += 1e-3; // only name 1 defaults: not a ladder scenario
        let r = verify_uniqueness(&ScenarioTable::new(5, probs).unwrap(), &p).unwrap();
        assert!(!r.passes());
        assert!(!r.saturated || !r.marginals_match);
    }

    #[test]
    fn uniqueness_rejects_independence() {
        let p = portfolio(&[0.05, 0.1, 0.2]);
        let r = verify_uniqueness(&ScenarioTable::independent(&p).unwrap(), &p).unwrap();
        assert!(r.marginals_match);
        assert!(!r.saturated);
        assert!(!r.equals_ladder);
    }

    fn sorted_probs() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..=1.0, 1..10)
    }

    proptest! {
        #[test]
        fn ladder_is_a_law_with_the_right_marginals(ps in sorted_probs()) {
            let p = portfolio(&ps);
            let l = build_ladder(&p);
            prop_assert_eq!(l.scenario_probs().len(), p.len() + 1);
            prop_assert!(l.scenario_probs().iter().all(|&x| x >= 0.0));
            let total: f64 = l.scenario_probs().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-15);
            let sorted = p.default_probs();
            for i in 0..p.len() {
                let partial: f64 = l.scenario_probs()[..=i].iter().sum();
                prop_assert!((partial - sorted[i]).abs() < 2e-15);
            }
        }

        #[test]
        fn ladder_saturates_every_pair(ps in sorted_probs()) {
            let p = portfolio(&ps);
            let t = build_ladder(&p).to_table().unwrap();
            let sorted = p.default_probs();
            for i in 0..p.len() {
                for j in i + 1..p.len() {
                    let p11 = t.pair_prob(i, j, true, true);
                    prop_assert!((p11 - sorted[i]).abs() < 2e-15);
                    let (pi, pj) = (sorted[i], sorted[j]);
                    if pi > 0.0 && pj < 1.0 {
                        let s = (pi * (1.0 - pi) * pj * (1.0 - pj)).sqrt();
                        let rho = (p11 - pi * pj) / s;
                        let bound = correlation_upper_bound(pi, pj).unwrap();
                        // p11 carries ~1e-16 of summation rounding, amplified by 1/s
                        prop_assert!((rho - bound).abs() <= 1e-12 + 1e-15 / s, "rho {} vs bound {}", rho, bound);
                    }
                }
            }
        }

        #[test]
        fn positive_scenarios_are_hierarchical(ps in sorted_probs()) {
            let p = portfolio(&ps);
            let t = build_ladder(&p).to_table().unwrap();
            for (m, &w) in t.probs().iter().enumerate() {
                if w > 0.0 {
                    prop_assert!(DefaultScenario::from_mask(m as u64, p.len()).is_hierarchical());
                }
            }
        }
    }
}
