//! Named random streams split from one master seed.
//!
//! Each stream is a ChaCha8 generator keyed by the master seed and selected
//! by a stream number derived from `(purpose, site)`, so draws on one stream
//! never shift another stream's sequence.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use super::time::SimDuration;
use crate::error::SimError;

/// What a stream is used for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StreamPurpose {
    Arrivals,
    Placement,
    PageSelection,
    WriteCoin,
    ThinkTime,
    Vote,
    FileLayout,
}

impl StreamPurpose {
    fn code(self) -> u64 {
        match self {
            StreamPurpose::Arrivals => 1,
            StreamPurpose::Placement => 2,
            StreamPurpose::PageSelection => 3,
            StreamPurpose::WriteCoin => 4,
            StreamPurpose::ThinkTime => 5,
            StreamPurpose::Vote => 6,
            StreamPurpose::FileLayout => 7,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StreamId {
    pub purpose: StreamPurpose,
    pub site: u32,
}

impl StreamId {
    pub fn new(purpose: StreamPurpose, site: u32) -> Self {
        StreamId { purpose, site }
    }

    fn number(self) -> u64 {
        (self.purpose.code() << 32) | self.site as u64
    }
}

#[derive(Clone, Debug)]
pub struct RngStream {
    id: StreamId,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, id: StreamId) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(id.number());
        RngStream { id, rng }
    }

    pub fn id(&self) -> StreamId {
        self.id
    }

    /// Uniform real in `[0, 1)`.
    pub fn next_unit(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Exponential duration with the given mean, by inverse-CDF transform,
    /// rounded to the nearest tick.
    pub fn draw_exponential(&mut self, mean: SimDuration) -> Result<SimDuration, SimError> {
        if mean.is_zero() {
            return Err(SimError::InvalidArgument("exponential mean must be positive".into()));
        }
        let u = self.next_unit();
        let x = -(1.0 - u).ln() * mean.as_micros() as f64;
        Ok(SimDuration::from_micros(x.round() as u64))
    }

    /// Integer uniform over the inclusive range `[lo, hi]`.
    pub fn draw_uniform_int(&mut self, lo: u64, hi: u64) -> Result<u64, SimError> {
        if lo > hi {
            return Err(SimError::InvalidArgument(format!("inverted bounds [{lo}, {hi}]")));
        }
        Ok(self.rng.random_range(lo..=hi))
    }

    /// Real uniform over `[lo, hi]`.
    pub fn draw_uniform_real(&mut self, lo: f64, hi: f64) -> Result<f64, SimError> {
        if !(lo <= hi) {
            return Err(SimError::InvalidArgument(format!("inverted bounds [{lo}, {hi}]")));
        }
        Ok(lo + (hi - lo) * self.next_unit())
    }

    pub fn draw_bernoulli(&mut self, p: f64) -> bool {
        self.next_unit() < p
    }

    /// Poisson-distributed count with the given mean.
    pub fn draw_poisson(&mut self, mean: f64) -> Result<u64, SimError> {
        if mean == 0.0 {
            return Ok(0);
        }
        let dist = Poisson::new(mean)
            .map_err(|e| SimError::InvalidArgument(format!("poisson mean {mean}: {e}")))?;
        Ok(dist.sample(&mut self.rng) as u64)
    }

    /// Picks `k` distinct indices from `0..n`, uniformly.
    pub fn sample_distinct(&mut self, n: usize, k: usize) -> Result<Vec<usize>, SimError> {
        if k > n {
            return Err(SimError::InvalidArgument(format!("cannot pick {k} of {n}")));
        }
        Ok(rand::seq::index::sample(&mut self.rng, n, k).into_vec())
    }
}

/// Factory for the streams of one run.
#[derive(Clone, Copy, Debug)]
pub struct RngStreams {
    master_seed: u64,
}

impl RngStreams {
    pub fn new(master_seed: u64) -> Self {
        RngStreams { master_seed }
    }

    pub fn stream(&self, purpose: StreamPurpose, site: u32) -> RngStream {
        RngStream::new(self.master_seed, StreamId::new(purpose, site))
    }
}
