//! Reproducible parallel Monte Carlo.
//!
//! Draws are cut into fixed blocks of [`BLOCK_SIZE`]. Block `k` owns the
//! ChaCha8 stream `k` of the generator seeded from the run seed, so every
//! draw is a function of `(seed, draw index)` alone. Per-block results are
//! merged in block order by a balanced tree, which makes totals independent
//! of how many threads processed the blocks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Published identity of the generator, recorded in run metadata.
pub const RNG_ALGORITHM: &str =
    "ChaCha8Rng (rand_chacha 0.9) seeded by seed_from_u64(seed), stream = block index, 65536 draws per block";

pub const BLOCK_SIZE: u64 = 1 << 16;

pub type BlockRng = ChaCha8Rng;

pub fn block_rng(seed: u64, block: u64) -> BlockRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);
    rng
}

/// Something that turns random numbers into one terminal default state.
pub trait DrawSampler: Sync {
    fn n_names(&self) -> usize;

    /// Writes one draw's default indicators into `out` (length `n_names`).
    fn draw(&self, rng: &mut BlockRng, out: &mut [bool]);
}

/// Runs `draws` draws, folding each block into an accumulator and merging
/// the block accumulators in block order.
pub fn fold_draws<S, A, I, F, M>(sampler: &S, draws: u64, seed: u64, init: I, step: F, merge: M) -> Result<A>
where
    S: DrawSampler + ?Sized,
    A: Send,
    I: Fn() -> A + Sync,
    F: Fn(&mut A, &[bool]) + Sync,
    M: Fn(A, A) -> A + Sync,
{
    if draws == 0 {
        return Err(Error::InvalidArgument("draws must be at least 1".into()));
    }
    let n_blocks = draws.div_ceil(BLOCK_SIZE);
    let partials: Vec<A> = (0..n_blocks)
        .into_par_iter()
        .map(|block| {
            let len = BLOCK_SIZE.min(draws - block * BLOCK_SIZE);
            let mut rng = block_rng(seed, block);
            let mut acc = init();
            let mut buf = vec![false; sampler.n_names()];
            for _ in 0..len {
                sampler.draw(&mut rng, &mut buf);
                step(&mut acc, &buf);
            }
            acc
        })
        .collect();
    Ok(tree_merge(partials, &merge).unwrap_or_else(init))
}

fn tree_merge<A>(mut items: Vec<A>, merge: &impl Fn(A, A) -> A) -> Option<A> {
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        let mut it = items.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(merge(a, b)),
                None => next.push(a),
            }
        }
        items = next;
    }
    items.pop()
}

/// Running mean and sum of squared deviations (Welford), mergeable with
/// Chan's pairwise update.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningStats {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(self, other: Self) -> Self {
        if self.count == 0 {
            return other;
        }
        if other.count == 0 {
            return self;
        }
        let count = self.count + other.count;
        let d = other.mean - self.mean;
        let w = other.count as f64 / count as f64;
        Self {
            count,
            mean: self.mean + d * w,
            m2: self.m2 + other.m2 + d * d * self.count as f64 * w,
        }
    }

    /// Unbiased sample variance; zero for fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    struct Coin;

    impl DrawSampler for Coin {
        fn n_names(&self) -> usize {
            1
        }
        fn draw(&self, rng: &mut BlockRng, out: &mut [bool]) {
            out[0] = rng.random::<f64>() < 0.5;
        }
    }

    fn count_heads(draws: u64, seed: u64) -> u64 {
        fold_draws(&Coin, draws, seed, || 0u64, |a, d| *a += d[0] as u64, |a, b| a + b).unwrap()
    }

    #[test]
    fn independent_of_thread_count() {
        let draws = 3 * BLOCK_SIZE + 17;
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| count_heads(draws, 7));
        let b = four.install(|| count_heads(draws, 7));
        assert_eq!(a, b);
        assert_ne!(a, count_heads(draws, 8));
    }

    #[test]
    fn zero_draws_rejected() {
        assert!(fold_draws(&Coin, 0, 1, || 0u64, |_, _| {}, |a, b| a + b).is_err());
    }

    #[test]
    fn streams_differ() {
        let mut a = block_rng(1, 0);
        let mut b = block_rng(1, 1);
        assert_ne!(a.random::<u64>(), b.random::<u64>());
    }

    #[test]
    fn stats_merge_matches_direct() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 / 7.0).collect();
        let mut all = RunningStats::default();
        xs.iter().for_each(|&x| all.push(x));
        let (mut l, mut r) = (RunningStats::default(), RunningStats::default());
        xs[..333].iter().for_each(|&x| l.push(x));
        xs[333..].iter().for_each(|&x| r.push(x));
        let m = l.merge(r);
        assert_eq!(m.count, all.count);
        assert!((m.mean - all.mean).abs() < 1e-12);
        assert!((m.variance() - all.variance()).abs() < 1e-9);
        let mean = xs.iter().sum::<f64>() / 1000.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 999.0;
        assert!((all.variance() - var).abs() < 1e-9);
    }
}
