//! Seeded random streams and the sampling distributions the simulators draw from.
//!
//! Every simulation record owns an [`RngStream`] keyed by `(master_seed, stream_id)`.
//! The stream is a ChaCha8 generator whose key comes from the master seed and whose
//! 64-bit stream word is the record id, so any record can be regenerated in isolation,
//! in any order, on any worker.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Gamma, Geometric, Normal, Poisson};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct RngStream {
    master_seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(master_seed);
        inner.set_stream(stream_id);
        Self {
            master_seed,
            stream_id,
            inner,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Child stream for one stage of a record (parameter sampling, dynamics,
    /// observation, ...). Depends only on `(master_seed, stream_id, lane)`, never
    /// on how many draws the parent has made.
    pub fn fork(&self, lane: u64) -> RngStream {
        let mut hasher = Sha256::new();
        hasher.update(b"sgnn-forge/fork");
        hasher.update(self.master_seed.to_le_bytes());
        hasher.update(self.stream_id.to_le_bytes());
        hasher.update(lane.to_le_bytes());
        let key: [u8; 32] = hasher.finalize().into();
        let mut inner = ChaCha8Rng::from_seed(key);
        inner.set_stream(self.stream_id);
        Self {
            master_seed: self.master_seed,
            stream_id: self.stream_id,
            inner,
        }
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

pub fn substream(master_seed: u64, stream_id: u64) -> RngStream {
    RngStream::new(master_seed, stream_id)
}

/// Parametric distribution description, serializable into parameter blobs and configs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionSpec {
    Uniform { lo: f64, hi: f64 },
    LogUniform { lo: f64, hi: f64 },
    Normal { mean: f64, sd: f64 },
    /// Normal restricted to `[0, inf)` by rejection.
    TruncNormalNonneg { mean: f64, sd: f64 },
    Gamma { shape: f64, scale: f64 },
    GammaMeanSd { mean: f64, sd: f64 },
    LogNormal { mu: f64, sigma: f64 },
    /// `shift + Geometric(success_prob)`, where the geometric part counts failures
    /// before the first success. The mode is `shift`.
    GeometricShifted { shift: u64, success_prob: f64 },
    /// Gamma-Poisson mixture with variance `mean + mean^2 / overdispersion`.
    NegBinomial { mean: f64, overdispersion: f64 },
    Binomial { n: u64, p: f64 },
    Poisson { rate: f64 },
    Bernoulli { p: f64 },
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::ParamDomain(msg()))
    }
}

fn is_prob(p: f64) -> bool {
    (0.0..=1.0).contains(&p)
}

impl DistributionSpec {
    pub fn validate(&self) -> Result<()> {
        use DistributionSpec::*;
        match *self {
            Uniform { lo, hi } => check(lo.is_finite() && hi.is_finite() && lo <= hi, || {
                format!("uniform requires lo <= hi, got [{lo}, {hi}]")
            }),
            LogUniform { lo, hi } => check(lo > 0.0 && hi.is_finite() && lo <= hi, || {
                format!("log-uniform requires 0 < lo <= hi, got [{lo}, {hi}]")
            }),
            Normal { mean, sd } | TruncNormalNonneg { mean, sd } => {
                check(mean.is_finite() && sd.is_finite() && sd >= 0.0, || {
                    format!("normal requires finite mean and sd >= 0, got ({mean}, {sd})")
                })
            }
            Gamma { shape, scale } => check(shape > 0.0 && scale > 0.0, || {
                format!("gamma requires shape > 0 and scale > 0, got ({shape}, {scale})")
            }),
            GammaMeanSd { mean, sd } => check(mean > 0.0 && sd > 0.0, || {
                format!("gamma requires mean > 0 and sd > 0, got ({mean}, {sd})")
            }),
            LogNormal { mu, sigma } => check(mu.is_finite() && sigma >= 0.0, || {
                format!("lognormal requires sigma >= 0, got ({mu}, {sigma})")
            }),
            GeometricShifted { success_prob, .. } => {
                check(success_prob > 0.0 && success_prob <= 1.0, || {
                    format!("geometric success probability must be in (0, 1], got {success_prob}")
                })
            }
            NegBinomial {
                mean,
                overdispersion,
            } => check(mean >= 0.0 && overdispersion > 0.0, || {
                format!("negative binomial requires mean >= 0 and overdispersion > 0, got ({mean}, {overdispersion})")
            }),
            Binomial { p, .. } | Bernoulli { p } => {
                check(is_prob(p), || format!("probability must be in [0, 1], got {p}"))
            }
            Poisson { rate } => check(rate >= 0.0 && rate.is_finite(), || {
                format!("poisson rate must be finite and >= 0, got {rate}")
            }),
        }
    }

    /// Draws one value. Integer-valued kinds return exact integers as `f64`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        self.validate()?;
        use DistributionSpec::*;
        Ok(match *self {
            Uniform { lo, hi } => uniform(rng, lo, hi),
            LogUniform { lo, hi } => log_uniform(rng, lo, hi),
            Normal { mean, sd } => normal(rng, mean, sd),
            TruncNormalNonneg { mean, sd } => trunc_normal_nonneg(rng, mean, sd),
            Gamma { shape, scale } => gamma(rng, shape, scale),
            GammaMeanSd { mean, sd } => {
                let shape = (mean / sd).powi(2);
                gamma(rng, shape, mean / shape)
            }
            LogNormal { mu, sigma } => (mu + sigma * standard_normal(rng)).exp(),
            GeometricShifted {
                shift,
                success_prob,
            } => geometric_shifted(rng, shift, success_prob) as f64,
            NegBinomial {
                mean,
                overdispersion,
            } => neg_binomial(rng, mean, overdispersion) as f64,
            Binomial { n, p } => binomial(rng, n, p) as f64,
            Poisson { rate } => poisson(rng, rate) as f64,
            Bernoulli { p } => u8::from(bernoulli(rng, p)) as f64,
        })
    }
}

// Fast-path samplers used inside the simulators. Callers guarantee the domain.

pub fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        return lo;
    }
    lo + (hi - lo) * rng.random::<f64>()
}

pub fn uniform_int<R: Rng + ?Sized>(rng: &mut R, lo: u64, hi_inclusive: u64) -> u64 {
    rng.random_range(lo..=hi_inclusive)
}

pub fn log_uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    uniform(rng, lo.ln(), hi.ln()).exp()
}

pub fn bernoulli<R: Rng + ?Sized>(rng: &mut R, p: f64) -> bool {
    if p <= 0.0 {
        false
    } else if p >= 1.0 {
        true
    } else {
        rng.random::<f64>() < p
    }
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(rand_distr::StandardNormal)
}

pub fn normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64) -> f64 {
    if sd == 0.0 {
        return mean;
    }
    Normal::new(mean, sd).map_or(mean, |d| d.sample(rng))
}

pub fn trunc_normal_nonneg<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64) -> f64 {
    if sd == 0.0 {
        return mean.max(0.0);
    }
    for _ in 0..1024 {
        let x = normal(rng, mean, sd);
        if x >= 0.0 {
            return x;
        }
    }
    // Mass on [0, inf) is negligible; the boundary is the limit of the truncation.
    0.0
}

/// Mean-one lognormal multiplier: `exp(N(-sigma^2/2, sigma))`.
pub fn lognormal_mean_one<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 1.0;
    }
    (-0.5 * sigma * sigma + sigma * standard_normal(rng)).exp()
}

pub fn gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, scale: f64) -> f64 {
    Gamma::new(shape, scale).map_or(0.0, |d| d.sample(rng))
}

pub fn binomial<R: Rng + ?Sized>(rng: &mut R, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        0
    } else if p >= 1.0 {
        n
    } else {
        Binomial::new(n, p).map_or(0, |d| d.sample(rng))
    }
}

pub fn poisson<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> u64 {
    if rate <= 0.0 {
        return 0;
    }
    Poisson::new(rate).map_or(0, |d: Poisson<f64>| d.sample(rng) as u64)
}

pub fn neg_binomial<R: Rng + ?Sized>(rng: &mut R, mean: f64, overdispersion: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let lambda = gamma(rng, overdispersion, mean / overdispersion);
    poisson(rng, lambda)
}

pub fn geometric_shifted<R: Rng + ?Sized>(rng: &mut R, shift: u64, success_prob: f64) -> u64 {
    if success_prob >= 1.0 {
        return shift;
    }
    shift + Geometric::new(success_prob).map_or(0, |d| d.sample(rng))
}

/// Splits `n` items over categories with probabilities `probs` (summing to at most 1;
/// any shortfall is the probability of falling off the end). Sequential conditional
/// binomials, so the result is exact and cheap for large `n`.
pub fn multinomial<R: Rng + ?Sized>(rng: &mut R, n: u64, probs: &[f64], out: &mut [u64]) {
    debug_assert_eq!(probs.len(), out.len());
    let mut remaining = n;
    let mut mass_left = 1.0;
    for (p, slot) in probs.iter().zip(out.iter_mut()) {
        if remaining == 0 || mass_left <= 0.0 {
            *slot = 0;
            continue;
        }
        let cond = (p / mass_left).clamp(0.0, 1.0);
        let k = binomial(rng, remaining, cond);
        *slot = k;
        remaining -= k;
        mass_left -= p;
    }
}
