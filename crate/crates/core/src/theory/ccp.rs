//! Coupon-collector expectations: analytic values and Monte Carlo oracles.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;

use super::montecarlo;
use super::quadrature::integrate;
use crate::error::{Error, Result};
use crate::format::fmt9;
use crate::rng::Rng;
use crate::sampling::NegativeSamplingDistribution;

/// Largest item count for the exact alternating batch sum.
pub const BATCHED_MAX_ITEMS: usize = 25;
/// Largest item count for subset inclusion–exclusion.
pub const INCLUSION_EXCLUSION_MAX_ITEMS: usize = 20;
/// Relative agreement required between inclusion–exclusion and quadrature.
pub const CROSS_CHECK_TOLERANCE: f64 = 1e-6;

pub const CSV_HEADER: &str = "M,k_or_b,analytic,mc_mean,mc_ci95,trials";

/// Expected draws (or batches) to cover a target set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcpEstimate {
    /// Absent for simulation-only estimates.
    pub analytic: Option<f64>,
    pub mc_mean: f64,
    pub mc_ci95: f64,
    pub trials: u64,
}

impl CcpEstimate {
    fn from_mc(analytic: Option<f64>, stats: crate::stats::RunningStats) -> Self {
        Self {
            analytic,
            mc_mean: stats.mean(),
            mc_ci95: stats.ci95(),
            trials: stats.count,
        }
    }

    /// Whether the analytic value lies inside the Monte Carlo interval.
    pub fn brackets(&self) -> bool {
        self.analytic
            .is_some_and(|a| (a - self.mc_mean).abs() <= self.mc_ci95)
    }

    pub fn csv_row(&self, m: usize, k_or_b: usize) -> String {
        format!(
            "{m},{k_or_b},{},{},{},{}",
            self.analytic.map(fmt9).unwrap_or_default(),
            fmt9(self.mc_mean),
            fmt9(self.mc_ci95),
            self.trials
        )
    }
}

fn check_trials(trials: u64) -> Result<()> {
    if trials == 0 {
        return Err(Error::out_of_range("trials", trials, ">= 1"));
    }
    Ok(())
}

/// `M · H_k`: expected uniform draws from `M` items until a designated
/// `k`-subset has been fully observed.
pub fn ccp_uniform_analytic(m: usize, k: usize) -> Result<f64> {
    if m == 0 || k == 0 || k > m {
        return Err(Error::out_of_range("k", k, format!("[1, M = {m}]")));
    }
    Ok(m as f64 * (1..=k).map(|i| 1.0 / i as f64).sum::<f64>())
}

/// Analytic `M · H_k` with a simulation of uniform draws.
pub fn ccp_uniform_draws(m: usize, k: usize, trials: u64, seed: u64) -> Result<CcpEstimate> {
    let analytic = ccp_uniform_analytic(m, k)?;
    check_trials(trials)?;
    let stats = montecarlo::run(seed, trials, |rng: &mut Rng| {
        let mut seen = vec![false; k];
        let mut remaining = k;
        let mut draws = 0u64;
        while remaining > 0 {
            draws += 1;
            let i = rng.random_range(0..m);
            if i < k && !seen[i] {
                seen[i] = true;
                remaining -= 1;
            }
        }
        draws as f64
    });
    Ok(CcpEstimate::from_mc(Some(analytic), stats))
}

/// Expected number of batches of `b` uniform draws (with replacement) until
/// all `M` items are seen:
/// `Σ_{j=0}^{M−1} (−1)^{M−j+1} C(M, j) / (1 − (j/M)^b)`,
/// evaluated in exact rational arithmetic. Refused above
/// [`BATCHED_MAX_ITEMS`] items.
pub fn ccp_batched_analytic(m: usize, b: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::out_of_range("M", m, ">= 1"));
    }
    if b == 0 {
        return Err(Error::out_of_range("b", b, ">= 1"));
    }
    if m > BATCHED_MAX_ITEMS {
        return Err(Error::Numerical(format!(
            "batched coupon-collector sum refused for M = {m} > {BATCHED_MAX_ITEMS}: \
             the alternating sum loses precision; use the Monte Carlo estimate"
        )));
    }
    let exp = u32::try_from(b).map_err(|_| Error::out_of_range("b", b, "<= u32::MAX"))?;
    let mb = BigInt::from(m).pow(exp);
    let mut total = BigRational::zero();
    let mut binom = BigInt::one();
    for j in 0..m {
        if j > 0 {
            binom = binom * BigInt::from(m - j + 1) / BigInt::from(j);
        }
        let denom = &mb - BigInt::from(j).pow(exp);
        let term = BigRational::new(&binom * &mb, denom);
        if (m - j + 1) % 2 == 0 {
            total += term;
        } else {
            total -= term;
        }
    }
    total
        .to_f64()
        .ok_or_else(|| Error::Numerical("batched sum not representable as f64".into()))
}

/// Analytic batched expectation with a simulation of batches.
pub fn ccp_batched(m: usize, b: usize, trials: u64, seed: u64) -> Result<CcpEstimate> {
    let analytic = ccp_batched_analytic(m, b)?;
    check_trials(trials)?;
    let stats = montecarlo::run(seed, trials, |rng: &mut Rng| {
        let mut seen = vec![false; m];
        let mut remaining = m;
        let mut batches = 0u64;
        while remaining > 0 {
            batches += 1;
            for _ in 0..b {
                let i = rng.random_range(0..m);
                if !seen[i] {
                    seen[i] = true;
                    remaining -= 1;
                }
            }
        }
        batches as f64
    });
    Ok(CcpEstimate::from_mc(Some(analytic), stats))
}

fn check_probs(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::Empty("probability vector"));
    }
    if let Some(p) = probs.iter().find(|p| !(**p > 0.0 && p.is_finite())) {
        return Err(Error::out_of_range("probability", p, "(0, 1]"));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::out_of_range("probability sum", sum, "1 ± 1e-9"));
    }
    Ok(())
}

/// Neumaier-compensated sum.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// `Σ_{S ≠ ∅} (−1)^{|S|+1} / Σ_{i∈S} p_i` over all subsets; refused above
/// [`INCLUSION_EXCLUSION_MAX_ITEMS`] items.
pub fn ccp_unequal_inclusion_exclusion(probs: &[f64]) -> Result<f64> {
    check_probs(probs)?;
    let m = probs.len();
    if m > INCLUSION_EXCLUSION_MAX_ITEMS {
        return Err(Error::Numerical(format!(
            "inclusion-exclusion refused for M = {m} > {INCLUSION_EXCLUSION_MAX_ITEMS}"
        )));
    }
    let n = 1usize << m;
    let mut sums = vec![0.0f64; n];
    for mask in 1..n {
        let low = mask.trailing_zeros() as usize;
        sums[mask] = sums[mask & (mask - 1)] + probs[low];
    }
    Ok(compensated_sum((1..n).map(|mask| {
        let sign = if mask.count_ones() % 2 == 1 {
            1.0
        } else {
            -1.0
        };
        sign / sums[mask]
    })))
}

/// `∫_0^∞ (1 − Π_i (1 − e^{−p_i x})) dx` by adaptive quadrature.
pub fn ccp_unequal_quadrature(probs: &[f64]) -> Result<f64> {
    check_probs(probs)?;
    let p_min = probs.iter().copied().fold(f64::INFINITY, f64::min);
    // Beyond this point the integrand is below M·e^{−40}.
    let upper = ((probs.len() as f64).ln() + 40.0) / p_min;
    let survival = |x: f64| {
        let log_all: f64 = probs.iter().map(|p| (-(-p * x).exp()).ln_1p()).sum();
        -log_all.exp_m1()
    };
    integrate(survival, 0.0, upper, 1e-13, 1e-13)
}

/// Expected categorical draws until every item has been seen. Up to
/// [`INCLUSION_EXCLUSION_MAX_ITEMS`] items the value comes from
/// inclusion–exclusion and must agree with the quadrature value within
/// [`CROSS_CHECK_TOLERANCE`]; above that, quadrature alone.
pub fn ccp_unequal_analytic(probs: &[f64]) -> Result<f64> {
    let quad = ccp_unequal_quadrature(probs)?;
    if probs.len() > INCLUSION_EXCLUSION_MAX_ITEMS {
        return Ok(quad);
    }
    let ie = ccp_unequal_inclusion_exclusion(probs)?;
    let rel = (ie - quad).abs() / ie.abs();
    if rel > CROSS_CHECK_TOLERANCE {
        return Err(Error::Numerical(format!(
            "inclusion-exclusion {ie} and quadrature {quad} disagree (relative {rel:e})"
        )));
    }
    Ok(ie)
}

/// Analytic unequal-probability expectation with a simulation of
/// categorical draws.
pub fn ccp_unequal(probs: &[f64], trials: u64, seed: u64) -> Result<CcpEstimate> {
    let analytic = ccp_unequal_analytic(probs)?;
    check_trials(trials)?;
    let dist = WeightedIndex::new(probs).map_err(|e| Error::Sampling(e.to_string()))?;
    let m = probs.len();
    let stats = montecarlo::run(seed, trials, |rng: &mut Rng| {
        let mut seen = vec![false; m];
        let mut remaining = m;
        let mut draws = 0u64;
        while remaining > 0 {
            draws += 1;
            let i = dist.sample(rng);
            if !seen[i] {
                seen[i] = true;
                remaining -= 1;
            }
        }
        draws as f64
    });
    Ok(CcpEstimate::from_mc(Some(analytic), stats))
}

/// Simulated number of batches of `batch_size` negatives, drawn for
/// `anchor` from `dist`, until every sample in `target` has appeared.
pub fn ccp_topk_coverage_mc(
    dist: &NegativeSamplingDistribution,
    anchor: usize,
    target: &[usize],
    batch_size: usize,
    trials: u64,
    seed: u64,
) -> Result<CcpEstimate> {
    if target.is_empty() {
        return Err(Error::Empty("coverage target set"));
    }
    if batch_size == 0 {
        return Err(Error::out_of_range("batch size", batch_size, ">= 1"));
    }
    check_trials(trials)?;
    let marginal = dist.marginal(anchor)?;
    let mut slot = vec![usize::MAX; dist.index().len()];
    let mut unique = 0;
    for &t in target {
        let reachable = marginal
            .binary_search_by_key(&t, |&(i, _)| i)
            .is_ok_and(|pos| marginal[pos].1 > 0.0);
        if !reachable {
            return Err(Error::Sampling(format!(
                "target sample {t} has zero probability for anchor {anchor}"
            )));
        }
        if slot[t] == usize::MAX {
            slot[t] = unique;
            unique += 1;
        }
    }
    // Draw errors are impossible once the anchor has a valid marginal.
    let stats = montecarlo::run(seed, trials, |rng: &mut Rng| {
        let mut seen = vec![false; unique];
        let mut remaining = unique;
        let mut batches = 0u64;
        while remaining > 0 {
            batches += 1;
            for _ in 0..batch_size {
                let (i, _) = dist.draw_one(anchor, rng).expect("anchor has negatives");
                let s = slot[i];
                if s != usize::MAX && !seen[s] {
                    seen[s] = true;
                    remaining -= 1;
                }
            }
        }
        batches as f64
    });
    Ok(CcpEstimate::from_mc(None, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::EmbeddingMatrix;
    use crate::sampling::{build_class_scns, DatasetIndex};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use ndarray::array;

    fn harmonic(n: usize) -> f64 {
        (1..=n).map(|i| 1.0 / i as f64).sum()
    }

    #[test]
    fn uniform_analytic_values() {
        assert_eq!(ccp_uniform_analytic(7, 1).unwrap(), 7.0);
        assert_abs_diff_eq!(
            ccp_uniform_analytic(10, 10).unwrap(),
            29.289_682_539_682_54,
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(
            ccp_uniform_analytic(10, 3).unwrap(),
            18.333_333_333_333_33,
            epsilon = 1e-9
        );
        assert!(ccp_uniform_analytic(3, 4).is_err());
        assert!(ccp_uniform_analytic(3, 0).is_err());
    }

    #[test]
    fn uniform_simulation_agrees() {
        let e = ccp_uniform_draws(10, 3, 200_000, 1).unwrap();
        assert!(
            (e.mc_mean / e.analytic.unwrap() - 1.0).abs() < 0.005,
            "{e:?}"
        );
        assert_eq!(e.trials, 200_000);
        assert!(ccp_uniform_draws(10, 3, 0, 1).is_err());
    }

    #[test]
    fn batched_reduces_to_classic() {
        assert_eq!(ccp_batched_analytic(2, 1).unwrap(), 3.0);
        assert_eq!(ccp_batched_analytic(3, 1).unwrap(), 5.5);
        assert_abs_diff_eq!(
            ccp_batched_analytic(5, 1).unwrap(),
            11.416_666_666_666_67,
            epsilon = 1e-9
        );
        for m in 1..=20 {
            let classic = m as f64 * harmonic(m);
            assert_relative_eq!(
                ccp_batched_analytic(m, 1).unwrap(),
                classic,
                max_relative = 1e-12
            );
        }
        assert!(ccp_batched_analytic(26, 1).is_err());
        assert!(ccp_batched_analytic(25, 3).is_ok());
    }

    #[test]
    fn batched_is_monotone_in_batch_size() {
        for m in [2, 5, 12] {
            let mut last = f64::INFINITY;
            for b in 1..=12 {
                let v = ccp_batched_analytic(m, b).unwrap();
                assert!(v <= last + 1e-12);
                assert!(v >= (m as f64 / b as f64).max(1.0) - 1e-12);
                last = v;
            }
        }
    }

    #[test]
    fn batched_simulation_agrees() {
        let e = ccp_batched(6, 3, 100_000, 2).unwrap();
        assert!(
            (e.mc_mean - e.analytic.unwrap()).abs() < 4.0 * e.mc_ci95,
            "{e:?}"
        );
    }

    #[test]
    fn unequal_cases() {
        assert_abs_diff_eq!(
            ccp_unequal_analytic(&[0.5, 0.5]).unwrap(),
            3.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            ccp_unequal_analytic(&[0.9, 0.1]).unwrap(),
            10.111_111_111_111_11,
            epsilon = 1e-9
        );
        for m in 1..=12 {
            let p = vec![1.0 / m as f64; m];
            assert_abs_diff_eq!(
                ccp_unequal_analytic(&p).unwrap(),
                ccp_uniform_analytic(m, m).unwrap(),
                epsilon = 1e-9
            );
        }
        assert!(ccp_unequal_analytic(&[0.5, 0.4]).is_err());
        assert!(ccp_unequal_analytic(&[1.0, 0.0]).is_err());
        assert!(ccp_unequal_inclusion_exclusion(&[1.0 / 21.0; 21]).is_err());
        let big = vec![1.0 / 30.0; 30];
        assert_relative_eq!(
            ccp_unequal_analytic(&big).unwrap(),
            30.0 * harmonic(30),
            max_relative = 1e-9
        );
    }

    #[test]
    fn unequal_simulation_agrees() {
        let e = ccp_unequal(&[0.9, 0.1], 200_000, 3).unwrap();
        assert!(
            (e.mc_mean / e.analytic.unwrap() - 1.0).abs() < 0.005,
            "{e:?}"
        );
    }

    #[test]
    fn coverage_matches_uniform_and_geometric() {
        // Anchor 0 in class 0; negatives are samples 1..=5, each its own class.
        let index = DatasetIndex::new(vec![0, 1, 2, 3, 4, 5]).unwrap();
        let uniform = NegativeSamplingDistribution::uniform(index.clone());
        let e = ccp_topk_coverage_mc(&uniform, 0, &[1, 2, 3, 4, 5], 1, 100_000, 4).unwrap();
        let classic = ccp_uniform_analytic(5, 5).unwrap();
        assert!((e.mc_mean - classic).abs() < 4.0 * e.mc_ci95, "{e:?}");
        assert!(e.analytic.is_none());

        let b = 3;
        let e = ccp_topk_coverage_mc(&uniform, 0, &[2], b, 100_000, 5).unwrap();
        let expected = 1.0 / (1.0 - (1.0 - 0.2f64).powi(b as i32));
        assert!((e.mc_mean - expected).abs() < 4.0 * e.mc_ci95, "{e:?}");
    }

    #[test]
    fn concentrated_sampler_covers_faster() {
        let labels: Vec<usize> = (0..12).map(|i| i / 2).collect();
        let index = DatasetIndex::new(labels).unwrap();
        let emb = EmbeddingMatrix::new(array![
            [1.0, 0.0, 0.0],
            [0.95, 0.3, 0.0],
            [0.9, 0.0, 0.4],
            [-1.0, 0.1, 0.0],
            [0.0, -1.0, 0.0],
            [0.0, 0.0, -1.0]
        ])
        .unwrap();
        let scns = build_class_scns(&emb, index.clone(), 2, 5.0).unwrap();
        let uniform = NegativeSamplingDistribution::uniform(index);
        let target = [2, 3, 4, 5];
        let a = ccp_topk_coverage_mc(&scns, 0, &target, 2, 50_000, 6).unwrap();
        let u = ccp_topk_coverage_mc(&uniform, 0, &target, 2, 50_000, 6).unwrap();
        assert!(a.mc_mean + a.mc_ci95 < u.mc_mean - u.mc_ci95, "{a:?} {u:?}");
        assert!(ccp_topk_coverage_mc(&scns, 0, &[10], 2, 10, 6).is_err());
    }

    #[test]
    fn csv_row_layout() {
        let e = CcpEstimate {
            analytic: Some(18.333_333_333_333_33),
            mc_mean: 18.3,
            mc_ci95: 0.05,
            trials: 1000,
        };
        assert_eq!(
            e.csv_row(10, 3),
            "10,3,18.3333333,18.3000000,0.0500000000,1000"
        );
    }
}
