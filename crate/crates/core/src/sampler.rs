//! Seeded randomness: count distributions, position partitions and placement.

use rand::seq::index;
use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canvas::Point;

#[derive(Debug, Error, PartialEq)]
pub enum SamplerError {
    #[error("test side size {test_size} must lie strictly between 0 and the universe size {universe}")]
    DegeneratePartition { test_size: usize, universe: usize },
    #[error("cannot draw {n} distinct positions from {available}")]
    NotEnoughPositions { n: usize, available: usize },
    #[error("maximum count {0} outside the supported range")]
    BadMaximum(u8),
    #[error("uniform mix {0} outside [0, 1]")]
    BadMix(f64),
}

/// Deterministic random stream identified by `(seed, stream)`.
///
/// Streams of the same seed are independent, so per-item streams let work
/// be spread over threads without changing any draw.
#[derive(Debug, Clone)]
pub struct Rng {
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { inner }
    }

    pub fn uniform_index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn unit(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.unit() < p
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        use rand::seq::SliceRandom;
        items.shuffle(&mut self.inner);
    }

    pub fn distinct_indices(&mut self, len: usize, amount: usize) -> Vec<usize> {
        index::sample(&mut self.inner, len, amount).into_vec()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Draws an index with probability proportional to `weights`.
    /// Returns `None` when every weight is zero.
    pub fn weighted(&mut self, weights: &[f64]) -> Option<usize> {
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return None;
        }
        let target = self.unit() * total;
        let mut acc = 0.0;
        let mut last = None;
        for (i, &w) in weights.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            acc += w;
            last = Some(i);
            if target < acc {
                return Some(i);
            }
        }
        last
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionKind {
    Uniform,
    Pow102x,
}

/// Law of the number of objects per image.
///
/// `Uniform` covers `low..=m`; `Pow102x` covers `1..=m` with CDF
/// `F(x) = 10^(2x) / 10^(2m)` on `1 < x <= m`, mixed with a uniform draw
/// over `1..=m` with probability `uniform_mix`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountDistribution {
    pub kind: DistributionKind,
    pub m: u8,
    pub uniform_mix: f64,
    /// Smallest count of the uniform law (0 or 1).
    pub low: u8,
}

pub const DEFAULT_UNIFORM_MIX: f64 = 0.10;

impl CountDistribution {
    pub fn uniform(low: u8, m: u8) -> Self {
        Self {
            kind: DistributionKind::Uniform,
            m,
            uniform_mix: 0.0,
            low,
        }
    }

    pub fn pow102x(m: u8, uniform_mix: f64) -> Self {
        Self {
            kind: DistributionKind::Pow102x,
            m,
            uniform_mix,
            low: 1,
        }
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        if !(1..=9).contains(&self.m) || self.low > 1 || self.low > self.m {
            return Err(SamplerError::BadMaximum(self.m));
        }
        if !(0.0..=1.0).contains(&self.uniform_mix) {
            return Err(SamplerError::BadMix(self.uniform_mix));
        }
        Ok(())
    }

    /// `F(x)` of the power law, defined for every integer `x`.
    pub fn pow_cdf(m: u8, x: i32) -> f64 {
        if x <= 1 {
            0.0
        } else if x >= m as i32 {
            1.0
        } else {
            10f64.powi(2 * (x - m as i32))
        }
    }

    /// Probability of each count `0..=9`.
    pub fn pmf(&self) -> [f64; 10] {
        let mut p = [0.0; 10];
        match self.kind {
            DistributionKind::Uniform => {
                let width = (self.m - self.low + 1) as f64;
                for n in self.low..=self.m {
                    p[n as usize] = 1.0 / width;
                }
            }
            DistributionKind::Pow102x => {
                let m = self.m;
                let mix = self.uniform_mix;
                for n in 1..=m {
                    let pow = Self::pow_cdf(m, n as i32) - Self::pow_cdf(m, n as i32 - 1);
                    p[n as usize] = (1.0 - mix) * pow + mix / m as f64;
                }
            }
        }
        p
    }
}

/// Draws one count, two-stage for the mixed power law.
pub fn sample_count(dist: &CountDistribution, rng: &mut Rng) -> u8 {
    match dist.kind {
        DistributionKind::Uniform => {
            dist.low + rng.uniform_index((dist.m - dist.low + 1) as usize) as u8
        }
        DistributionKind::Pow102x => {
            if dist.uniform_mix > 0.0 && rng.bernoulli(dist.uniform_mix) {
                return 1 + rng.uniform_index(dist.m as usize) as u8;
            }
            let u = rng.unit();
            (1..=dist.m)
                .find(|&n| u < CountDistribution::pow_cdf(dist.m, n as i32))
                .unwrap_or(dist.m)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelPartition {
    pub universe: Vec<Point>,
    pub train_side: Vec<Point>,
    pub test_side: Vec<Point>,
}

impl PixelPartition {
    pub fn sizes(&self) -> (usize, usize) {
        (self.train_side.len(), self.test_side.len())
    }
}

/// Splits `universe` into a uniformly random `test_size` subset and its complement.
/// Both sides keep the universe's order.
pub fn partition_pixels(
    universe: &[Point],
    test_size: usize,
    rng: &mut Rng,
) -> Result<PixelPartition, SamplerError> {
    if test_size == 0 || test_size >= universe.len() {
        return Err(SamplerError::DegeneratePartition {
            test_size,
            universe: universe.len(),
        });
    }
    let mut on_test = vec![false; universe.len()];
    for i in rng.distinct_indices(universe.len(), test_size) {
        on_test[i] = true;
    }
    let (test, train): (Vec<_>, Vec<_>) = universe
        .iter()
        .zip(&on_test)
        .partition(|(_, &is_test)| is_test);
    Ok(PixelPartition {
        universe: universe.to_vec(),
        train_side: train.into_iter().map(|(p, _)| *p).collect(),
        test_side: test.into_iter().map(|(p, _)| *p).collect(),
    })
}

pub fn sample_centers(
    n: usize,
    allowed: &[Point],
    distinct: bool,
    rng: &mut Rng,
) -> Result<Vec<Point>, SamplerError> {
    if distinct {
        if n > allowed.len() {
            return Err(SamplerError::NotEnoughPositions {
                n,
                available: allowed.len(),
            });
        }
        Ok(rng
            .distinct_indices(allowed.len(), n)
            .into_iter()
            .map(|i| allowed[i])
            .collect())
    } else {
        if n > 0 && allowed.is_empty() {
            return Err(SamplerError::NotEnoughPositions { n, available: 0 });
        }
        Ok((0..n)
            .map(|_| allowed[rng.uniform_index(allowed.len())])
            .collect())
    }
}

/// Every (row, col) with both coordinates in `range`.
pub fn square_universe(range: std::ops::Range<u8>) -> Vec<Point> {
    range
        .clone()
        .flat_map(|r| range.clone().map(move |c| (r, c)))
        .collect()
}
