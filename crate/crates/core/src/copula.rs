//! Latent-variable (copula) default models.
//!
//! Each name gets a continuous latent variable `X_i` and defaults when it
//! falls below a threshold `c_i` fixed so that `P(X_i < c_i) = p_i`. The
//! Gaussian family is the market standard; a Cauchy factor family is kept
//! behind the same interface to show that the fully correlated limit does
//! not depend on the choice of latent distribution.

use std::f64::consts::PI;

use rand_distr::{Cauchy as CauchyDist, Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ladder::{build_ladder, LadderProcess};
use crate::matrix::CorrelationMatrix;
use crate::model::{DefaultScenario, ReferencePortfolio, ScenarioTable};
use crate::normal::{bivariate_normal_cdf, norm_cdf, norm_pdf, norm_quantile};
use crate::quadrature;
use crate::sampling::{self, BlockRng, DrawSampler};

/// Diagonal perturbation used when a semidefinite matrix is factorized.
pub const CHOLESKY_JITTER: f64 = 1e-12;

/// Quadrature tolerance for the exact flat-correlation Gaussian law.
pub const FLAT_QUADRATURE_TOLERANCE: f64 = 1e-13;

/// Half-width of the factor range integrated over; the normal mass beyond
/// it is below 1e-22.
const FACTOR_RANGE: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub enum AssetCorrelationSpec {
    /// One common factor, every pair at the same asset correlation.
    Flat(f64),
    /// Full matrix, factorized before sampling.
    Full(CorrelationMatrix),
}

impl AssetCorrelationSpec {
    pub fn flat(rho: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::InvalidArgument(format!(
                "flat asset correlation {rho} outside [0, 1]"
            )));
        }
        Ok(Self::Flat(rho))
    }

    pub fn full(matrix: CorrelationMatrix) -> Result<Self> {
        if !matrix.is_positive_semidefinite() {
            return Err(Error::InvalidMatrix(format!(
                "not positive semidefinite (smallest eigenvalue {:e})",
                matrix.min_eigenvalue()
            )));
        }
        Ok(Self::Full(matrix))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdVector(Vec<f64>);

impl ThresholdVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// `c_i = Phi^{-1}(p_i)`. Names with `p` of exactly 0 or 1 have no finite
/// threshold and are rejected.
pub fn calibrate_thresholds(portfolio: &ReferencePortfolio) -> Result<ThresholdVector> {
    portfolio
        .names()
        .iter()
        .map(|o| {
            let c = norm_quantile(o.default_prob);
            if c.is_finite() {
                Ok(c)
            } else {
                Err(Error::InvalidObligor {
                    label: o.label.clone(),
                    reason: format!("default probability {} has an infinite threshold", o.default_prob),
                })
            }
        })
        .collect::<Result<Vec<_>>>()
        .map(ThresholdVector)
}

/// Default correlation of two names whose latent normals have correlation
/// `rho_asset`.
pub fn asset_to_default_correlation(p_i: f64, p_j: f64, rho_asset: f64) -> Result<f64> {
    for p in [p_i, p_j] {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::DegenerateMarginal { p });
        }
    }
    if !(0.0..=1.0).contains(&rho_asset) {
        return Err(Error::InvalidArgument(format!(
            "asset correlation {rho_asset} outside [0, 1]"
        )));
    }
    let p11 = bivariate_normal_cdf(norm_quantile(p_i), norm_quantile(p_j), rho_asset)?;
    let s = (p_i * (1.0 - p_i) * p_j * (1.0 - p_j)).sqrt();
    Ok((p11 - p_i * p_j) / s)
}

/// A symmetric continuous latent distribution usable in a one-factor model
/// `X_i = a Z + b e_i`, where `Z` and `e_i` share the family's law and the
/// loadings keep `X_i` in that law.
pub trait LatentFamily: Sync + Send {
    fn name(&self) -> &'static str;
    fn quantile(&self, p: f64) -> f64;
    fn sample(&self, rng: &mut BlockRng) -> f64;
    /// `(a, b)` for dependence parameter `rho` in `[0, 1]`; `rho = 1` must give `(1, 0)`.
    fn loadings(&self, rho: f64) -> (f64, f64);
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Gaussian;

impl LatentFamily for Gaussian {
    fn name(&self) -> &'static str {
        "gaussian"
    }
    fn quantile(&self, p: f64) -> f64 {
        norm_quantile(p)
    }
    fn sample(&self, rng: &mut BlockRng) -> f64 {
        StandardNormal.sample(rng)
    }
    fn loadings(&self, rho: f64) -> (f64, f64) {
        (rho.sqrt(), (1.0 - rho).sqrt())
    }
}

/// Standard Cauchy. Scale parameters add under sums of independent Cauchy
/// variables, so the loadings are `(rho, 1 - rho)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Cauchy;

impl LatentFamily for Cauchy {
    fn name(&self) -> &'static str {
        "cauchy"
    }
    fn quantile(&self, p: f64) -> f64 {
        if p <= 0.0 {
            f64::NEG_INFINITY
        } else if p >= 1.0 {
            f64::INFINITY
        } else {
            (PI * (p - 0.5)).tan()
        }
    }
    fn sample(&self, rng: &mut BlockRng) -> f64 {
        CauchyDist::new(0.0, 1.0).expect("unit scale").sample(rng)
    }
    fn loadings(&self, rho: f64) -> (f64, f64) {
        (rho, 1.0 - rho)
    }
}

fn raw_thresholds(portfolio: &ReferencePortfolio, family: &impl LatentFamily) -> Vec<f64> {
    portfolio.names().iter().map(|o| family.quantile(o.default_prob)).collect()
}

/// One-factor sampler for any latent family.
#[derive(Debug, Clone)]
pub struct FactorSampler<F> {
    family: F,
    thresholds: Vec<f64>,
    common: f64,
    idio: f64,
}

impl<F: LatentFamily> FactorSampler<F> {
    pub fn new(portfolio: &ReferencePortfolio, family: F, rho: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::InvalidArgument(format!(
                "factor dependence {rho} outside [0, 1]"
            )));
        }
        let (common, idio) = family.loadings(rho);
        Ok(Self {
            thresholds: raw_thresholds(portfolio, &family),
            family,
            common,
            idio,
        })
    }
}

impl<F: LatentFamily> DrawSampler for FactorSampler<F> {
    fn n_names(&self) -> usize {
        self.thresholds.len()
    }

    fn draw(&self, rng: &mut BlockRng, out: &mut [bool]) {
        let z = self.family.sample(rng);
        for (o, &c) in out.iter_mut().zip(&self.thresholds) {
            let x = if self.idio == 0.0 {
                z
            } else {
                self.common * z + self.idio * self.family.sample(rng)
            };
            *o = x < c;
        }
    }
}

/// Correlated normals `X = L e` from a lower-triangular factor `L`.
#[derive(Debug, Clone)]
pub struct MatrixSampler {
    thresholds: Vec<f64>,
    factor: Vec<f64>,
}

impl MatrixSampler {
    pub fn new(portfolio: &ReferencePortfolio, matrix: &CorrelationMatrix) -> Result<Self> {
        if matrix.dim() != portfolio.len() {
            return Err(Error::InvalidMatrix(format!(
                "matrix is {0}x{0} but the portfolio has {1} names",
                matrix.dim(),
                portfolio.len()
            )));
        }
        Ok(Self {
            thresholds: raw_thresholds(portfolio, &Gaussian),
            factor: matrix.cholesky(CHOLESKY_JITTER)?,
        })
    }
}

impl DrawSampler for MatrixSampler {
    fn n_names(&self) -> usize {
        self.thresholds.len()
    }

    fn draw(&self, rng: &mut BlockRng, out: &mut [bool]) {
        let n = self.thresholds.len();
        let e: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        for i in 0..n {
            let row = &self.factor[i * n..i * n + i + 1];
            let x: f64 = row.iter().zip(&e).map(|(l, z)| l * z).sum();
            out[i] = x < self.thresholds[i];
        }
    }
}

/// Gaussian copula sampler for either correlation form.
#[derive(Debug, Clone)]
pub enum CopulaSampler {
    Factor(FactorSampler<Gaussian>),
    Matrix(MatrixSampler),
}

impl CopulaSampler {
    /// A full matrix whose every entry is 1 is the one-factor model at
    /// `rho = 1`; it is sampled that way instead of factorizing a singular
    /// matrix.
    pub fn new(portfolio: &ReferencePortfolio, corr: &AssetCorrelationSpec) -> Result<Self> {
        match corr {
            AssetCorrelationSpec::Flat(rho) => Ok(Self::Factor(FactorSampler::new(portfolio, Gaussian, *rho)?)),
            AssetCorrelationSpec::Full(m) => {
                let all_one = m.rows().iter().flatten().all(|&x| x >= 1.0 - crate::matrix::ENTRY_TOLERANCE);
                if all_one && m.dim() == portfolio.len() {
                    Ok(Self::Factor(FactorSampler::new(portfolio, Gaussian, 1.0)?))
                } else {
                    Ok(Self::Matrix(MatrixSampler::new(portfolio, m)?))
                }
            }
        }
    }
}

impl DrawSampler for CopulaSampler {
    fn n_names(&self) -> usize {
        match self {
            Self::Factor(s) => s.n_names(),
            Self::Matrix(s) => s.n_names(),
        }
    }

    fn draw(&self, rng: &mut BlockRng, out: &mut [bool]) {
        match self {
            Self::Factor(s) => s.draw(rng, out),
            Self::Matrix(s) => s.draw(rng, out),
        }
    }
}

fn collect_scenarios(sampler: &impl DrawSampler, draws: u64, seed: u64) -> Result<Vec<DefaultScenario>> {
    sampling::fold_draws(
        sampler,
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

pub fn simulate_copula(
    portfolio: &ReferencePortfolio,
    corr: &AssetCorrelationSpec,
    draws: u64,
    seed: u64,
) -> Result<Vec<DefaultScenario>> {
    collect_scenarios(&CopulaSampler::new(portfolio, corr)?, draws, seed)
}

/// One-factor simulation with an arbitrary latent family.
pub fn simulate_factor_copula<F: LatentFamily>(
    portfolio: &ReferencePortfolio,
    family: F,
    rho: f64,
    draws: u64,
    seed: u64,
) -> Result<Vec<DefaultScenario>> {
    collect_scenarios(&FactorSampler::new(portfolio, family, rho)?, draws, seed)
}

/// The `rho -> 1` limit in closed form. With every `X_i` equal to one
/// variable `Z`, scenario `n` is `c_n <= Z < c_{n+1}`, whose probability is
/// `p_{n+1} - p_n`: the ladder law, whatever the latent distribution.
pub fn degenerate_max_correlation(portfolio: &ReferencePortfolio) -> LadderProcess {
    build_ladder(portfolio)
}

/// Conditional default probabilities given the common factor `z`.
fn conditional_probs(thresholds: &[f64], a: f64, b: f64, z: f64, out: &mut [f64]) {
    for (o, &c) in out.iter_mut().zip(thresholds) {
        *o = if c == f64::NEG_INFINITY {
            0.0
        } else if c == f64::INFINITY {
            1.0
        } else {
            norm_cdf((c - a * z) / b)
        };
    }
}

/// Factor-axis segments. Name `i`'s conditional default probability
/// drops from 1 to 0 around `z = c_i / a` over a width of order `b / a`;
/// graded cuts around each such point keep the adaptive rule from stepping
/// over a transition that is narrow next to its panel.
fn factor_segments(thresholds: &[f64], a: f64, b: f64) -> Vec<(f64, f64)> {
    const GRADES: [f64; 5] = [0.0, 0.5, 2.0, 8.0, 32.0];
    let width = b / a;
    let mut cuts: Vec<f64> = thresholds
        .iter()
        .filter(|c| c.is_finite())
        .flat_map(|&c| GRADES.iter().flat_map(move |&g| [c / a - g * width, c / a + g * width]))
        .filter(|z| z.abs() < FACTOR_RANGE)
        .collect();
    cuts.push(-FACTOR_RANGE);
    cuts.push(FACTOR_RANGE);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    cuts.windows(2).map(|w| (w[0], w[1])).collect()
}

/// Exact joint default law of the one-factor Gaussian model at flat
/// correlation `rho`, by integrating the conditionally independent
/// scenario table over the factor. Intended for moderate `N`; the table
/// has `2^N` entries.
pub fn flat_gaussian_table(portfolio: &ReferencePortfolio, rho: f64) -> Result<ScenarioTable> {
    portfolio.ensure_enumerable()?;
    AssetCorrelationSpec::flat(rho)?;
    if rho == 0.0 {
        return ScenarioTable::independent(portfolio);
    }
    if rho == 1.0 {
        return degenerate_max_correlation(portfolio).to_table();
    }
    let n = portfolio.len();
    let thresholds = raw_thresholds(portfolio, &Gaussian);
    let (a, b) = Gaussian.loadings(rho);
    let segments = factor_segments(&thresholds, a, b);
    let tol = FLAT_QUADRATURE_TOLERANCE / segments.len() as f64;
    let mut pz = vec![0.0; n];
    let mut table = vec![0.0; 1usize << n];
    for (lo, hi) in segments {
        let part = quadrature::integrate_vec(
            |z, out| {
                conditional_probs(&thresholds, a, b, z, &mut pz);
                fill_product(&pz, norm_pdf(z), out);
            },
            table.len(),
            lo,
            hi,
            tol,
        )?;
        for (t, p) in table.iter_mut().zip(part) {
            *t += p;
        }
    }
    // the truncated factor range and quadrature leave the total a few ulps
    // away from one
    let total = crate::model::pairwise_sum(&table);
    table.iter_mut().for_each(|t| *t /= total);
    ScenarioTable::new(n, table)
}

fn fill_product(probs: &[f64], scale: f64, out: &mut [f64]) {
    out[0] = scale;
    let mut len = 1;
    for &p in probs {
        let q = 1.0 - p;
        for k in 0..len {
            let w = out[k];
            out[k] = w * q;
            out[k + len] = w * p;
        }
        len *= 2;
    }
}

/// `E[g(L)]` under the one-factor Gaussian model at flat correlation `rho`,
/// where `L` is portfolio loss. Integrates the conditional expectation over
/// the factor; each conditional expectation enumerates the `2^N` scenarios
/// without storing them.
pub fn flat_gaussian_expectation(
    portfolio: &ReferencePortfolio,
    rho: f64,
    g: impl Fn(f64) -> f64,
) -> Result<f64> {
    portfolio.ensure_enumerable()?;
    AssetCorrelationSpec::flat(rho)?;
    let caps = portfolio.loss_capacities();
    let n = portfolio.len();
    if rho == 1.0 {
        let l = degenerate_max_correlation(portfolio);
        let terms: Vec<f64> = (0..=n).map(|k| l.scenario_probs()[k] * g(l.scenario_loss(k))).collect();
        return Ok(crate::model::pairwise_sum(&terms));
    }
    let thresholds = raw_thresholds(portfolio, &Gaussian);
    let mut pz = vec![0.0; n];
    if rho == 0.0 {
        conditional_probs(&thresholds, 0.0, 1.0, 0.0, &mut pz);
        return Ok(conditional_expectation(&pz, &caps, &g));
    }
    let (a, b) = Gaussian.loadings(rho);
    let segments = factor_segments(&thresholds, a, b);
    let tol = FLAT_QUADRATURE_TOLERANCE / segments.len() as f64;
    let mut total = 0.0;
    for (lo, hi) in segments {
        total += quadrature::integrate(
            |z| {
                conditional_probs(&thresholds, a, b, z, &mut pz);
                norm_pdf(z) * conditional_expectation(&pz, &caps, &g)
            },
            lo,
            hi,
            tol,
        )?;
    }
    Ok(total)
}

/// `E[g(L)]` for independent defaults with probabilities `probs`.
fn conditional_expectation(probs: &[f64], caps: &[f64], g: &impl Fn(f64) -> f64) -> f64 {
    fn walk(i: usize, w: f64, loss: f64, probs: &[f64], caps: &[f64], g: &impl Fn(f64) -> f64) -> f64 {
        if w == 0.0 {
            return 0.0;
        }
        if i == probs.len() {
            return w * g(loss);
        }
        let p = probs[i];
        walk(i + 1, w * (1.0 - p), loss, probs, caps, g) + walk(i + 1, w * p, loss + caps[i], probs, caps, g)
    }
    walk(0, 1.0, 0.0, probs, caps, g)
}

/// Empirical `P(I_i = 1, I_j = 1)` and marginals from simulated scenarios.
pub fn empirical_default_correlation(scenarios: &[DefaultScenario], i: usize, j: usize) -> f64 {
    let n = scenarios.len() as f64;
    let (mut a, mut b, mut ab) = (0.0, 0.0, 0.0);
    for s in scenarios {
        let (x, y) = (s.is_defaulted(i), s.is_defaulted(j));
        a += x as u8 as f64;
        b += y as u8 as f64;
        ab += (x && y) as u8 as f64;
    }
    let (pa, pb, pab) = (a / n, b / n, ab / n);
    (pab - pa * pb) / (pa * (1.0 - pa) * pb * (1.0 - pb)).sqrt()
}
