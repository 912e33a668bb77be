//! Absorbed-path machinery for piecewise-linear boundaries.
//!
//! Paths are kept as persistent `(position, weight)` pairs and extended by one
//! Gaussian increment per knot. The weight is the running product of the
//! Brownian-bridge non-crossing probabilities, so it is the conditional
//! probability that the continuous path has stayed below the chords.
//!
//! Random numbers come from ChaCha8 streams keyed by `(seed, step, chunk)`,
//! with a fixed chunk size, so results do not depend on the thread count.
//! Reductions are summed chunk by chunk in index order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::{mills_ratio, std_normal_cdf, std_normal_pdf, survival};

/// Paths per RNG stream and per reduction chunk.
pub const CHUNK: usize = 4096;

/// Effective sample sizes below this make the crossing-mass estimate unusable.
pub const MIN_ESS: f64 = 10.0;

/// Probability that a Brownian bridge from `y0` to `y1` over `dt` stays below
/// the chord from `c0` to `c1`. Zero if either endpoint is on or above it.
#[inline]
pub fn bridge_weight(y0: f64, y1: f64, c0: f64, c1: f64, dt: f64) -> f64 {
    let (g0, g1) = (c0 - y0, c1 - y1);
    if !(g0 > 0.0 && g1 > 0.0) {
        return 0.0;
    }
    -(-2.0 * g0 * g1 / dt).exp_m1()
}

/// Probability `H` that a path at `x` below the level `c` crosses the line
/// `c + β(s − t_n)` within `dt`.
///
/// `H = Ψ(z₁) + e^{−2βd} Φ(z₂)` with `d = c − x`, `z₁ = (β dt + d)/√dt`,
/// `z₂ = (β dt − d)/√dt`. For `z₂ ≤ 0` the second term is rewritten as
/// `φ(z₁) · m(−z₂)` (Mills ratio), which cannot overflow for very negative
/// slopes.
pub fn segment_cross_mass(beta: f64, x: f64, c: f64, dt: f64) -> f64 {
    let d = c - x;
    if !(d > 0.0) {
        return 1.0;
    }
    let sq = dt.sqrt();
    let z1 = (beta * dt + d) / sq;
    let z2 = (beta * dt - d) / sq;
    let second = if z2 > 0.0 {
        (-2.0 * beta * d).exp() * std_normal_cdf(z2)
    } else {
        std_normal_pdf(z1) * mills_ratio(-z2)
    };
    (survival(z1) + second).clamp(0.0, 1.0)
}

/// One simulated path: its position at the latest knot and the probability
/// weight of not having crossed so far.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedPath {
    pub position: f64,
    pub weight: f64,
}

impl WeightedPath {
    pub fn alive(&self) -> bool {
        self.weight > 0.0
    }
}

/// Sample mean with diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
    /// `(Σw)² / Σw²` of the path weights.
    pub ess: f64,
}

/// Mass absorbed during one extension step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLoss {
    pub mass: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Sums {
    s1: f64,
    s2: f64,
}

impl Sums {
    fn add(self, o: Sums) -> Sums {
        Sums {
            s1: self.s1 + o.s1,
            s2: self.s2 + o.s2,
        }
    }
}

/// Running mean and centred second moment, merged chunk by chunk.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, o: Moments) -> Moments {
        if o.n == 0.0 {
            return self;
        }
        if self.n == 0.0 {
            return o;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        Moments {
            n,
            mean: self.mean + d * o.n / n,
            m2: self.m2 + o.m2 + d * d * self.n * o.n / n,
        }
    }

    fn mean_and_se(&self) -> (f64, f64) {
        if self.n < 2.0 {
            return (self.mean, 0.0);
        }
        let var = (self.m2 / (self.n - 1.0)).max(0.0);
        (self.mean, (var / self.n).sqrt())
    }
}

/// Fixed-size collection of weighted paths started at the origin.
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    paths: Vec<WeightedPath>,
    seed: u64,
    step: u64,
}

impl PathEnsemble {
    pub fn new(samples: usize, seed: u64) -> Self {
        PathEnsemble {
            paths: vec![
                WeightedPath {
                    position: 0.0,
                    weight: 1.0
                };
                samples
            ],
            seed,
            step: 0,
        }
    }

    pub fn from_paths(paths: Vec<WeightedPath>, seed: u64) -> Self {
        PathEnsemble { paths, seed, step: 0 }
    }

    pub fn paths(&self) -> &[WeightedPath] {
        &self.paths
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// Number of extension steps taken so far.
    pub fn steps(&self) -> u64 {
        self.step
    }

    fn stream(&self, chunk: usize) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.step.to_le_bytes());
        key[16..24].copy_from_slice(&(chunk as u64).to_le_bytes());
        ChaCha8Rng::from_seed(key)
    }

    /// Mean surviving weight.
    pub fn survival(&self) -> f64 {
        let s = self.reduce(|p| Sums { s1: p.weight, s2: 0.0 });
        s.s1 / self.paths.len() as f64
    }

    /// Effective sample size `(Σw)²/Σw²` of the current weights.
    pub fn ess(&self) -> f64 {
        let s = self.reduce(|p| Sums {
            s1: p.weight,
            s2: p.weight * p.weight,
        });
        if s.s2 > 0.0 {
            s.s1 * s.s1 / s.s2
        } else {
            0.0
        }
    }

    fn reduce<F>(&self, f: F) -> Sums
    where
        F: Fn(&WeightedPath) -> Sums + Sync,
    {
        let partial: Vec<Sums> = self
            .paths
            .par_chunks(CHUNK)
            .map(|chunk| chunk.iter().fold(Sums::default(), |acc, p| acc.add(f(p))))
            .collect();
        partial.into_iter().fold(Sums::default(), Sums::add)
    }

    /// Advances every path by `sqrt(dt)·Z` and multiplies its weight by the
    /// indicator of ending below `c_new` and the bridge non-crossing
    /// probability against the chord from `c_prev` to `c_new`.
    pub fn extend(&mut self, c_prev: f64, c_new: f64, dt: f64) -> StepLoss {
        self.advance(c_prev, c_new, dt, true)
    }

    /// Like [`extend`](Self::extend) but only checks the endpoint, ignoring
    /// crossings inside the step.
    pub fn extend_endpoint_only(&mut self, c_new: f64, dt: f64) -> StepLoss {
        self.advance(f64::INFINITY, c_new, dt, false)
    }

    fn advance(&mut self, c_prev: f64, c_new: f64, dt: f64, bridge: bool) -> StepLoss {
        assert!(dt > 0.0, "step length must be positive");
        let sd = dt.sqrt();
        let streams: Vec<ChaCha8Rng> = (0..self.paths.len().div_ceil(CHUNK)).map(|k| self.stream(k)).collect();
        let partial: Vec<Moments> = self
            .paths
            .par_chunks_mut(CHUNK)
            .zip(streams)
            .map(|(chunk, mut rng)| {
                let mut acc = Moments::default();
                for p in chunk.iter_mut() {
                    // always draw so the stream layout is independent of weights
                    let z: f64 = StandardNormal.sample(&mut rng);
                    if p.weight == 0.0 {
                        acc.push(0.0);
                        continue;
                    }
                    let x_new = p.position + sd * z;
                    let factor = if !(x_new < c_new) {
                        0.0
                    } else if bridge {
                        bridge_weight(p.position, x_new, c_prev, c_new, dt)
                    } else {
                        1.0
                    };
                    let w_new = p.weight * factor;
                    acc.push(p.weight - w_new);
                    p.position = x_new;
                    p.weight = w_new;
                }
                acc
            })
            .collect();
        self.step += 1;
        let total = partial.into_iter().fold(Moments::default(), Moments::merge);
        let (mass, std_error) = total.mean_and_se();
        StepLoss { mass, std_error }
    }

    /// Weighted-path estimate of the crossing mass over the next segment:
    /// the sample mean of `w_j · H(β; x_j)` where the segment starts at level
    /// `c_n` with slope `beta` and lasts `dt`.
    pub fn estimate_crossing_mass(&self, beta: f64, c_n: f64, dt: f64) -> Result<McEstimate> {
        let ess = self.ess();
        let (mean, std_error) = self.crossing_moments(beta, c_n, dt).mean_and_se();
        if ess < MIN_ESS {
            return Err(Error::DegenerateSample { ess });
        }
        Ok(McEstimate {
            mean,
            std_error,
            samples: self.paths.len(),
            ess,
        })
    }

    /// Sample mean of `w_j · H(β; x_j)` without diagnostics. This is the
    /// function the slope search evaluates repeatedly.
    pub fn crossing_mass(&self, beta: f64, c_n: f64, dt: f64) -> f64 {
        let s = self.reduce(|p| {
            let v = if p.weight == 0.0 {
                0.0
            } else {
                p.weight * segment_cross_mass(beta, p.position, c_n, dt)
            };
            Sums { s1: v, s2: 0.0 }
        });
        s.s1 / self.paths.len() as f64
    }

    fn crossing_moments(&self, beta: f64, c_n: f64, dt: f64) -> Moments {
        let partial: Vec<Moments> = self
            .paths
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut acc = Moments::default();
                for p in chunk {
                    acc.push(if p.weight == 0.0 {
                        0.0
                    } else {
                        p.weight * segment_cross_mass(beta, p.position, c_n, dt)
                    });
                }
                acc
            })
            .collect();
        partial.into_iter().fold(Moments::default(), Moments::merge)
    }
}
