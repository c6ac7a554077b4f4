use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StdNormal};

use super::{DramError, DramGeometry};
use crate::mem::Frame;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TimingModel {
    pub hit_cycles: u32,
    pub miss_cycles: u32,
    pub conflict_cycles: u32,
    pub noise_std: f64,
    pub threshold: f64,
}

impl Default for TimingModel {
    fn default() -> Self {
        Self { hit_cycles: 50, miss_cycles: 150, conflict_cycles: 400, noise_std: 0.0, threshold: 275.0 }
    }
}

impl TimingModel {
    pub fn validate(&self) -> Result<(), DramError> {
        let ok = self.conflict_cycles > self.miss_cycles
            && self.miss_cycles >= self.hit_cycles
            && self.noise_std >= 0.0
            && self.noise_std.is_finite()
            && (self.noise_std > 0.0
                || (self.threshold > self.miss_cycles as f64 && self.threshold < self.conflict_cycles as f64));
        if ok {
            Ok(())
        } else {
            Err(DramError::BadTiming(*self))
        }
    }

    /// Gaussian noise under which a single comparison against a threshold
    /// midway between miss and conflict latency is wrong with probability
    /// `error_rate`, in either direction.
    pub fn with_error_rate(self, error_rate: f64) -> Result<Self, DramError> {
        if !(error_rate > 0.0 && error_rate < 0.5) {
            return Err(DramError::BadErrorRate(error_rate));
        }
        let gap = (self.conflict_cycles - self.miss_cycles) as f64 / 2.0;
        let z = StdNormal::new(0.0, 1.0).expect("unit normal").inverse_cdf(1.0 - error_rate);
        Ok(Self { noise_std: gap / z, threshold: (self.conflict_cycles + self.miss_cycles) as f64 / 2.0, ..self })
    }

    /// Chance that one measurement lands on the wrong side of the threshold.
    pub fn error_rate(&self) -> f64 {
        if self.noise_std == 0.0 {
            return 0.0;
        }
        let n = StdNormal::new(0.0, self.noise_std).expect("positive std");
        let miss_high = 1.0 - n.cdf(self.threshold - self.miss_cycles as f64);
        let conflict_low = n.cdf(self.threshold - self.conflict_cycles as f64);
        miss_high.max(conflict_low)
    }

    fn noisy<R: Rng + ?Sized>(&self, base: u32, rng: &mut R) -> f64 {
        if self.noise_std == 0.0 {
            return base as f64;
        }
        base as f64 + Normal::new(0.0, self.noise_std).expect("validated").sample(rng)
    }
}

/// Time to access `a1` and `a2` together: a row conflict iff they share a
/// bank but not a row.
pub fn paired_access_latency<R: Rng + ?Sized>(
    geometry: &DramGeometry,
    timing: &TimingModel,
    a1: u64,
    a2: u64,
    rng: &mut R,
) -> Result<f64, DramError> {
    let c1 = geometry.map_address(a1)?;
    let c2 = geometry.map_address(a2)?;
    let base = if c1.bank == c2.bank && c1.row != c2.row { timing.conflict_cycles } else { timing.miss_cycles };
    Ok(timing.noisy(base, rng))
}

/// Anything that can time two pages accessed together.
pub trait LatencyOracle {
    fn pair_latency(&mut self, p1: Frame, p2: Frame) -> f64;
}

/// Timing measurements on simulated DRAM.
pub struct SimulatedDram<'g, R> {
    pub geometry: &'g DramGeometry,
    pub timing: TimingModel,
    pub rng: R,
    pub measurements: u64,
}

impl<'g, R: Rng> SimulatedDram<'g, R> {
    pub fn new(geometry: &'g DramGeometry, timing: TimingModel, rng: R) -> Self {
        Self { geometry, timing, rng, measurements: 0 }
    }
}

impl<R: Rng> LatencyOracle for SimulatedDram<'_, R> {
    fn pair_latency(&mut self, p1: Frame, p2: Frame) -> f64 {
        self.measurements += 1;
        paired_access_latency(self.geometry, &self.timing, p1 * super::PAGE_SIZE, p2 * super::PAGE_SIZE, &mut self.rng)
            .expect("pages within the simulated range")
    }
}

/// Threshold from a sample of pair latencies, by Otsu's criterion: the cut
/// that maximises the between-class variance of the two groups.
pub fn calibrate_threshold(samples: &[f64]) -> Option<f64> {
    let mut xs: Vec<f64> = samples.iter().copied().filter(|x| x.is_finite()).collect();
    if xs.len() < 2 {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let total: f64 = xs.iter().sum();
    let mut left = 0.0;
    let mut best: Option<(f64, f64)> = None;
    for i in 1..xs.len() {
        left += xs[i - 1];
        if xs[i] == xs[i - 1] {
            continue;
        }
        let (wl, wr) = (i as f64 / n, 1.0 - i as f64 / n);
        let (ml, mr) = (left / i as f64, (total - left) / (n - i as f64));
        let between = wl * wr * (ml - mr).powi(2);
        if best.is_none_or(|(b, _)| between > b) {
            best = Some((between, (xs[i - 1] + xs[i]) / 2.0));
        }
    }
    best.map(|(_, t)| t)
}
