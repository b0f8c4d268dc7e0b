//! Simulation draws. One block per dataset, built once and reused for every
//! likelihood evaluation, so the simulated objective is a smooth
//! deterministic function of the parameters.
//!
//! Column layout per draw: one standard-normal per random coefficient in
//! layout order, then ε0 for the scale term. Halton dimensions take primes in
//! ascending order in the same order.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::model::{DrawScheme, ModelSpec};
use crate::repro::derive_seed;

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

pub fn first_primes(count: usize) -> Vec<u64> {
    (2u64..).filter(|&n| is_prime(n)).take(count).collect()
}

/// Radical inverse of `n` in `base`.
pub fn radical_inverse(mut n: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while n > 0 {
        r += (n % base) as f64 * f;
        n /= base;
        f *= inv;
    }
    r
}

/// Halton points `burn+1 ..= burn+count` in `base`; every value lies in (0, 1).
pub fn halton_sequence(base: u64, count: usize, burn: usize) -> Result<Vec<f64>> {
    if !is_prime(base) {
        return Err(Error::param(format!("Halton base {base} is not prime")));
    }
    Ok((0..count)
        .map(|k| radical_inverse((burn + k + 1) as u64, base))
        .collect())
}

pub fn standard_normal_quantile(u: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").inverse_cdf(u)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrawBlock {
    n_events: usize,
    draws: usize,
    dims: usize,
    scheme: DrawScheme,
    seed: u64,
    burn: usize,
    data: Vec<f64>,
}

/// Draws for a single event: `len()` rows of `dims` standard normals.
#[derive(Debug, Clone, Copy)]
pub struct EventDraws<'a> {
    data: &'a [f64],
    dims: usize,
}

impl<'a> EventDraws<'a> {
    pub fn from_slice(data: &'a [f64], dims: usize) -> Self {
        assert!(dims > 0 && data.len().is_multiple_of(dims), "draw matrix shape");
        EventDraws { data, dims }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dims
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    #[inline]
    pub fn row(&self, d: usize) -> &'a [f64] {
        &self.data[d * self.dims..(d + 1) * self.dims]
    }

    pub fn rows(&self) -> impl Iterator<Item = &'a [f64]> + 'a {
        self.data.chunks_exact(self.dims)
    }
}

impl DrawBlock {
    pub fn generate(
        n_events: usize,
        draws: usize,
        n_random: usize,
        scheme: DrawScheme,
        seed: u64,
        burn: usize,
    ) -> Result<Self> {
        if draws == 0 {
            return Err(Error::param("draw count must be at least 1"));
        }
        let dims = n_random + 1;
        let per_event = draws * dims;
        let mut data = vec![0.0; n_events * per_event];
        let primes = first_primes(dims);
        data.par_chunks_mut(per_event.max(1))
            .enumerate()
            .for_each(|(i, block)| match scheme {
                DrawScheme::Halton => fill_halton(block, i, draws, &primes, seed, burn),
                DrawScheme::PseudoRandom => {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "pseudo-draws", i as u64));
                    for v in block.iter_mut() {
                        *v = StandardNormal.sample(&mut rng);
                    }
                }
            });
        Ok(DrawBlock {
            n_events,
            draws,
            dims,
            scheme,
            seed,
            burn,
            data,
        })
    }

    pub fn for_spec(spec: &ModelSpec, n_events: usize) -> Result<Self> {
        Self::generate(
            n_events,
            spec.effective_draws(),
            spec.n_random(),
            spec.draw_scheme,
            spec.seed,
            spec.halton_burn,
        )
    }

    pub fn n_events(&self) -> usize {
        self.n_events
    }
    pub fn draws(&self) -> usize {
        self.draws
    }
    pub fn dims(&self) -> usize {
        self.dims
    }
    pub fn n_random(&self) -> usize {
        self.dims - 1
    }
    pub fn scheme(&self) -> DrawScheme {
        self.scheme
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn burn(&self) -> usize {
        self.burn
    }

    pub fn event(&self, i: usize) -> EventDraws<'_> {
        let w = self.draws * self.dims;
        EventDraws {
            data: &self.data[i * w..(i + 1) * w],
            dims: self.dims,
        }
    }
}

/// Consecutive Halton segments per event, shuffled within the event per
/// dimension to break the correlation between low prime bases.
fn fill_halton(block: &mut [f64], event: usize, draws: usize, primes: &[u64], seed: u64, burn: usize) {
    let dims = primes.len();
    let mut column = vec![0.0; draws];
    for (j, &p) in primes.iter().enumerate() {
        let start = burn + event * draws;
        for (d, c) in column.iter_mut().enumerate() {
            *c = radical_inverse((start + d + 1) as u64, p);
        }
        let key = ((event as u64) << 8) | j as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "halton-shuffle", key));
        column.shuffle(&mut rng);
        for (d, u) in column.iter().enumerate() {
            block[d * dims + j] = standard_normal_quantile(*u);
        }
    }
}
