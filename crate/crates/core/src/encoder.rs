//! Interval coding: each input value fires exactly one input neuron.
//!
//! The input domain is tiled by equal-length intervals, one neuron per
//! interval. Values outside the current tiling extend it by whole
//! intervals on the side where they fall, each new interval receiving the
//! next free neuron index. Values are clamped to a compact bound first, so
//! the layer cannot grow without limit.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_MAX_NEURONS: usize = 100_000;

// Relative slack when checking that the domain width is a multiple of the
// interval length.
const TILING_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncoderError {
    #[error("domain [{0}, {1}] has no width")]
    DegenerateDomain(f64, f64),
    #[error("interval fraction must lie in (0, 1], got {0}")]
    BadFraction(f64),
    #[error("interval length must be positive and finite, got {0}")]
    BadIntervalLength(f64),
    #[error("clamp bound [{0}, {1}] does not contain the initial domain")]
    BadClamp(f64, f64),
    #[error("encoding would need {needed} input neurons, cap is {cap}")]
    NeuronCapExceeded { needed: usize, cap: usize },
    #[error("cannot encode non-finite value {0}")]
    NonFinite(f64),
    #[error("corrupt encoder state: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains_closed(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    /// Default clamp bound: the domain reflected once on each side.
    pub fn reflected(&self) -> Interval {
        Interval::new(2.0 * self.lo - self.hi, 2.0 * self.hi - self.lo)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Initial domain, already widened to a whole number of intervals.
    pub initial_domain: Interval,
    pub interval_length: f64,
    pub clamp: Interval,
    pub max_neurons: usize,
}

/// Dynamic interval partition and its interval -> neuron map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderState {
    config: EncoderConfig,
    /// Grid index of the leftmost interval; interval `i` spans
    /// `[origin + i*len, origin + (i+1)*len)`, origin being the initial minimum.
    first: i64,
    /// Neuron index of each interval, left to right.
    neurons: Vec<usize>,
}

impl EncoderState {
    /// Builds an encoder whose interval length is `fraction` of the domain width.
    pub fn new(
        domain: Interval,
        fraction: f64,
        clamp: Option<Interval>,
    ) -> Result<Self, EncoderError> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(EncoderError::BadFraction(fraction));
        }
        check_domain(domain)?;
        Self::with_interval_length(domain, fraction * domain.width(), clamp)
    }

    /// Builds an encoder with an absolute interval length.
    pub fn with_interval_length(
        domain: Interval,
        interval_length: f64,
        clamp: Option<Interval>,
    ) -> Result<Self, EncoderError> {
        Self::with_cap(domain, interval_length, clamp, DEFAULT_MAX_NEURONS)
    }

    pub fn with_cap(
        domain: Interval,
        interval_length: f64,
        clamp: Option<Interval>,
        max_neurons: usize,
    ) -> Result<Self, EncoderError> {
        check_domain(domain)?;
        if !(interval_length > 0.0 && interval_length.is_finite()) {
            return Err(EncoderError::BadIntervalLength(interval_length));
        }
        let clamp = clamp.unwrap_or_else(|| domain.reflected());
        if !(clamp.lo <= domain.lo && domain.hi <= clamp.hi) {
            return Err(EncoderError::BadClamp(clamp.lo, clamp.hi));
        }
        let ratio = domain.width() / interval_length;
        let k = ((ratio - TILING_TOLERANCE).ceil() as usize).max(1);
        if k > max_neurons {
            return Err(EncoderError::NeuronCapExceeded {
                needed: k,
                cap: max_neurons,
            });
        }
        let widened = Interval::new(domain.lo, domain.lo + k as f64 * interval_length);
        Ok(Self {
            config: EncoderConfig {
                initial_domain: widened,
                interval_length,
                clamp,
                max_neurons,
            },
            first: 0,
            neurons: (0..k).collect(),
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn interval_length(&self) -> f64 {
        self.config.interval_length
    }

    pub fn neuron_count(&self) -> usize {
        self.neurons.len()
    }

    fn bound(&self, grid_index: i64) -> f64 {
        self.config.initial_domain.lo + grid_index as f64 * self.config.interval_length
    }

    fn last(&self) -> i64 {
        self.first + self.neurons.len() as i64 - 1
    }

    /// Current domain; closed on the right.
    pub fn domain(&self) -> Interval {
        Interval::new(self.bound(self.first), self.bound(self.last() + 1))
    }

    /// Intervals left to right with their neurons.
    pub fn intervals(&self) -> impl Iterator<Item = (Interval, usize)> + '_ {
        self.neurons.iter().enumerate().map(|(pos, &n)| {
            let i = self.first + pos as i64;
            (Interval::new(self.bound(i), self.bound(i + 1)), n)
        })
    }

    // Grid index j with bound(j) <= v < bound(j + 1).
    fn grid_index(&self, v: f64) -> i64 {
        let mut j = ((v - self.config.initial_domain.lo) / self.config.interval_length).floor() as i64;
        while v < self.bound(j) {
            j -= 1;
        }
        while v >= self.bound(j + 1) {
            j += 1;
        }
        j
    }

    /// Neuron owning `v` in the current partition, without extending it.
    pub fn owner(&self, v: f64) -> Option<usize> {
        let d = self.domain();
        if !d.contains_closed(v) {
            return None;
        }
        let j = if v == d.hi { self.last() } else { self.grid_index(v) };
        Some(self.neurons[(j - self.first) as usize])
    }

    /// Clamps `v`, extends the partition until it covers `v`, and returns
    /// the one neuron that spikes.
    pub fn encode(&mut self, v: f64) -> Result<usize, EncoderError> {
        if !v.is_finite() {
            return Err(EncoderError::NonFinite(v));
        }
        let v = v.clamp(self.config.clamp.lo, self.config.clamp.hi);
        let d = self.domain();
        if v > d.hi {
            let j = self.grid_index(v);
            // v sitting exactly on a grid line closes the interval to its left
            let target = if v == self.bound(j) { j - 1 } else { j };
            let added = (target - self.last()) as usize;
            self.reserve(added)?;
            let base = self.neurons.len();
            self.neurons.extend(base..base + added);
        } else if v < d.lo {
            let target = self.grid_index(v);
            let added = (self.first - target) as usize;
            self.reserve(added)?;
            let base = self.neurons.len();
            let mut front: Vec<usize> = (base..base + added).rev().collect();
            front.append(&mut self.neurons);
            self.neurons = front;
            self.first = target;
        }
        Ok(self.owner(v).expect("partition covers clamped value"))
    }

    fn reserve(&self, added: usize) -> Result<(), EncoderError> {
        let needed = self.neurons.len() + added;
        if needed > self.config.max_neurons {
            return Err(EncoderError::NeuronCapExceeded {
                needed,
                cap: self.config.max_neurons,
            });
        }
        Ok(())
    }

    /// Checks structural invariants, e.g. after loading a checkpoint.
    pub fn validate(&self) -> Result<(), EncoderError> {
        let corrupt = |m: &str| Err(EncoderError::Corrupt(m.to_string()));
        if !(self.config.interval_length > 0.0) {
            return corrupt("non-positive interval length");
        }
        if self.neurons.is_empty() || self.neurons.len() > self.config.max_neurons {
            return corrupt("neuron count out of range");
        }
        let mut seen = vec![false; self.neurons.len()];
        for &n in &self.neurons {
            if n >= seen.len() || std::mem::replace(&mut seen[n], true) {
                return corrupt("neuron indices not dense and unique");
            }
        }
        if self.first > 0 || self.last() + 1 < self.initial_intervals() {
            return corrupt("partition does not cover the initial domain");
        }
        Ok(())
    }

    fn initial_intervals(&self) -> i64 {
        let d = self.config.initial_domain;
        (d.width() / self.config.interval_length).round() as i64
    }
}

fn check_domain(domain: Interval) -> Result<(), EncoderError> {
    if !(domain.lo.is_finite() && domain.hi.is_finite()) || domain.width() <= 0.0 {
        return Err(EncoderError::DegenerateDomain(domain.lo, domain.hi));
    }
    Ok(())
}
