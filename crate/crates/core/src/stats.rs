//! Goodness-of-fit and interval helpers shared by samplers and Monte Carlo.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquareReport {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

impl ChiSquareReport {
    pub fn passes(&self, significance: f64) -> bool {
        self.p_value > significance
    }

    /// Sums independent statistics and their degrees of freedom. An empty
    /// list (nothing testable) yields a statistic of 0 with p-value 1.
    pub fn pooled(reports: &[ChiSquareReport]) -> Result<Self> {
        let statistic: f64 = reports.iter().map(|r| r.statistic).sum();
        let dof: usize = reports.iter().map(|r| r.dof).sum();
        if dof == 0 {
            return Ok(Self {
                statistic: 0.0,
                dof: 0,
                p_value: 1.0,
            });
        }
        Ok(Self {
            statistic,
            dof,
            p_value: p_value(statistic, dof)?,
        })
    }
}

/// Pearson chi-square test of observed counts against declared bin
/// probabilities. Bins with zero declared probability must be empty.
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> Result<ChiSquareReport> {
    if observed.len() != probs.len() {
        return Err(Error::DimensionMismatch {
            expected: probs.len(),
            actual: observed.len(),
        });
    }
    if observed.len() < 2 {
        return Err(Error::Empty("chi-square bins (need at least 2)"));
    }
    let total: u64 = observed.iter().sum();
    if total == 0 {
        return Err(Error::Empty("chi-square observations"));
    }
    let mass: f64 = probs.iter().sum();
    let mut statistic = 0.0;
    let mut bins = 0usize;
    for (&o, &p) in observed.iter().zip(probs) {
        let expected = total as f64 * p / mass;
        if expected == 0.0 {
            if o > 0 {
                statistic = f64::INFINITY;
            }
            continue;
        }
        bins += 1;
        let diff = o as f64 - expected;
        statistic += diff * diff / expected;
    }
    let dof = bins.saturating_sub(1).max(1);
    Ok(ChiSquareReport {
        statistic,
        dof,
        p_value: p_value(statistic, dof)?,
    })
}

fn p_value(statistic: f64, dof: usize) -> Result<f64> {
    if !statistic.is_finite() {
        return Ok(0.0);
    }
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(dist.sf(statistic))
}

/// Streaming mean/variance (Welford), mergeable across workers.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningStats {
    pub count: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Count-weighted combination of two partial results.
    pub fn merge(self, other: Self) -> Self {
        if self.count == 0 {
            return other;
        }
        if other.count == 0 {
            return self;
        }
        let count = self.count + other.count;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.count as f64 / count as f64;
        let m2 = self.m2
            + other.m2
            + delta * delta * (self.count as f64 * other.count as f64) / count as f64;
        Self { count, mean, m2 }
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    /// Half-width of the normal-approximation 95% interval of the mean.
    pub fn ci95(&self) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        1.959_963_984_540_054 * (self.variance() / self.count as f64).sqrt()
    }
}
