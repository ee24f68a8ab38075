//! Unscrambled Sobol sequence in Gray-code order, and the sample plan that
//! turns it into decision vectors.

use crate::error::{Error, Result};
use crate::joe_kuo::JOE_KUO;
use crate::space::{DecisionVector, DesignSpace};

pub const MAX_DIMENSION: usize = 64;
const BITS: usize = 32;
const SCALE: f64 = 1.0 / 4_294_967_296.0; // 2^-32

/// Direction numbers `v_1..v_32` (as 32-bit fixed-point fractions) for one
/// dimension, 0-based.
fn direction_numbers(dim: usize) -> [u32; BITS] {
    let mut v = [0u32; BITS];
    if dim == 0 {
        for (k, vk) in v.iter_mut().enumerate() {
            *vk = 1u32 << (BITS - 1 - k);
        }
        return v;
    }
    let (s, a, m) = JOE_KUO[dim - 1];
    let s = s as usize;
    for k in 0..s.min(BITS) {
        v[k] = m[k] << (BITS - 1 - k);
    }
    for k in s..BITS {
        let mut x = v[k - s] ^ (v[k - s] >> s);
        for j in 1..s {
            if (a >> (s - 1 - j)) & 1 == 1 {
                x ^= v[k - j];
            }
        }
        v[k] = x;
    }
    v
}

/// A single-owner Sobol generator over `[0, 1)^d`.
#[derive(Clone, Debug)]
pub struct SobolSequence {
    directions: Vec<[u32; BITS]>,
    state: Vec<u32>,
    cursor: u64,
}

impl SobolSequence {
    pub fn new(dimension: usize) -> Result<Self> {
        if dimension == 0 || dimension > MAX_DIMENSION {
            return Err(Error::SobolDimension(dimension));
        }
        Ok(Self {
            directions: (0..dimension).map(direction_numbers).collect(),
            state: vec![0; dimension],
            cursor: 0,
        })
    }

    pub fn dimension(&self) -> usize {
        self.directions.len()
    }

    /// Index of the point the next call returns.
    pub fn cursor(&self) -> u64 {
        self.cursor
    }

    /// Returns the point at the cursor as raw 32-bit fractions.
    pub fn next_raw(&mut self) -> Result<Vec<u32>> {
        if self.cursor >= 1u64 << BITS {
            return Err(Error::SobolExhausted);
        }
        let out = self.state.clone();
        // the bit that flips between gray(i) and gray(i + 1)
        let c = (self.cursor as u32).trailing_ones() as usize;
        if c < BITS {
            for (x, v) in self.state.iter_mut().zip(&self.directions) {
                *x ^= v[c];
            }
        }
        self.cursor += 1;
        Ok(out)
    }

    pub fn next_point(&mut self) -> Result<Vec<f64>> {
        Ok(self.next_raw()?.into_iter().map(|x| x as f64 * SCALE).collect())
    }

    pub fn skip(&mut self, n: u64) -> Result<()> {
        for _ in 0..n {
            self.next_raw()?;
        }
        Ok(())
    }

    /// The next `n` points.
    pub fn take_points(&mut self, n: usize) -> Result<Vec<Vec<f64>>> {
        (0..n).map(|_| self.next_point()).collect()
    }
}

/// Design-of-experiments request: `n_samples` Sobol points over a space.
#[derive(Clone, Debug)]
pub struct SamplePlan {
    n_samples: usize,
    space: DesignSpace,
    skip_first: bool,
}

impl SamplePlan {
    pub fn new(n_samples: usize, space: DesignSpace) -> Result<Self> {
        if n_samples == 0 {
            return Err(Error::InvalidPlan("n_samples must be at least 1".into()));
        }
        Ok(Self {
            n_samples,
            space,
            skip_first: true,
        })
    }

    /// Keep (or drop) the origin as the first sample.
    pub fn with_skip_first(mut self, skip_first: bool) -> Self {
        self.skip_first = skip_first;
        self
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn space(&self) -> &DesignSpace {
        &self.space
    }

    /// Unit-cube points of the plan, before denormalization.
    pub fn unit_points(&self) -> Result<Vec<Vec<f64>>> {
        let mut seq = SobolSequence::new(self.space.n_decisions())?;
        if self.skip_first {
            seq.skip(1)?;
        }
        seq.take_points(self.n_samples)
    }

    pub fn sample(&self) -> Result<Vec<DecisionVector>> {
        self.unit_points()?
            .iter()
            .map(|u| self.space.denormalize(u))
            .collect()
    }
}
