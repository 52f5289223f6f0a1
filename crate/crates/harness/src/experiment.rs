//! Convergence comparisons: epochs-to-threshold for several
//! configurations over a grid of seeds, run in parallel.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use scns_core::format::fmt9;

use crate::config::{ExperimentConfig, SamplerChoice};
use crate::data::load_dataset;
use crate::error::{HarnessError, Result};
use crate::train::{
    needs_pairs, needs_teacher, pretrain_teacher, train_kd, train_supervised, TrainOptions,
};

pub const CONVERGENCE_HEADER: &str = "config,seed,epochs_to_threshold";

/// A named configuration in a comparison.
#[derive(Debug, Clone)]
pub struct Arm {
    pub name: String,
    pub config: ExperimentConfig,
}

/// One arm per entry of `[convergence] samplers`, differing only in the
/// negative sampler and its neighbor count.
pub fn sampler_arms(cfg: &ExperimentConfig) -> Result<Vec<Arm>> {
    if !needs_pairs(cfg) {
        return Err(HarnessError::Config {
            key: "convergence.samplers",
            message: "no enabled loss term draws negatives, so every arm would be identical".into(),
        });
    }
    let c = &cfg.convergence;
    let classes = cfg.dataset.classes;
    if c.samplers.contains(&SamplerChoice::Class) && c.class_k >= classes {
        return Err(HarnessError::Config {
            key: "convergence.class_k",
            message: format!(
                "{} is out of range [1, classes - 1] with {classes} classes",
                c.class_k
            ),
        });
    }
    Ok(c.samplers
        .iter()
        .map(|&kind| {
            let mut config = cfg.clone();
            config.sampler.kind = kind;
            match kind {
                SamplerChoice::Class => config.sampler.k = c.class_k,
                SamplerChoice::Instance => config.sampler.k = c.instance_k,
                SamplerChoice::Uniform => {}
            }
            Arm {
                name: kind.kind().name().to_string(),
                config,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmSummary {
    pub name: String,
    /// Epochs to threshold per seed; `None` when never reached.
    pub epochs: Vec<Option<usize>>,
    /// `None` stands for infinity.
    pub median: Option<f64>,
    pub mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub threshold: f64,
    pub seeds: Vec<u64>,
    pub arms: Vec<ArmSummary>,
}

/// Median with unreached runs ordered after every finite count.
pub fn median_epochs(epochs: &[Option<usize>]) -> Option<f64> {
    if epochs.is_empty() {
        return None;
    }
    let mut sorted: Vec<f64> = epochs
        .iter()
        .map(|e| e.map_or(f64::INFINITY, |v| v as f64))
        .collect();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let m = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    m.is_finite().then_some(m)
}

fn mean_epochs(epochs: &[Option<usize>]) -> Option<f64> {
    let total: Option<usize> = epochs.iter().copied().sum();
    total
        .filter(|_| !epochs.is_empty())
        .map(|t| t as f64 / epochs.len() as f64)
}

/// Epochs to reach `threshold` training accuracy for one run.
pub fn epochs_to_threshold(cfg: &ExperimentConfig, threshold: f64) -> Result<Option<usize>> {
    let mut cfg = cfg.clone();
    cfg.convergence.threshold = threshold;
    let split = load_dataset(&cfg.dataset, cfg.seed()?)?;
    let opts = TrainOptions {
        record_time: false,
        stop_at_threshold: true,
    };
    let outcome = if needs_teacher(&cfg) {
        let teacher = pretrain_teacher(&cfg, &split)?;
        if cfg.needs_teacher_outputs() {
            train_kd(&cfg, &split, &teacher, opts)?
        } else {
            train_supervised(&cfg, &split, Some(&teacher), opts)?
        }
    } else {
        train_supervised(&cfg, &split, None, opts)?
    };
    Ok(outcome.log.epochs_to_threshold)
}

/// Runs every arm at every seed (the seed overrides each arm's own) and
/// summarizes epochs-to-threshold per arm. Runs are independent and
/// execute on the current rayon pool; results do not depend on its size.
pub fn convergence_experiment(
    arms: &[Arm],
    threshold: f64,
    seeds: &[u64],
) -> Result<ConvergenceTable> {
    let jobs: Vec<(usize, u64)> = (0..arms.len())
        .flat_map(|a| seeds.iter().map(move |&s| (a, s)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(a, seed)| {
            let mut cfg = arms[a].config.clone();
            cfg.seed = Some(seed);
            epochs_to_threshold(&cfg, threshold)
        })
        .collect::<Result<Vec<_>>>()?;
    let arms = arms
        .iter()
        .zip(results.chunks(seeds.len().max(1)))
        .map(|(arm, epochs)| ArmSummary {
            name: arm.name.clone(),
            epochs: epochs.to_vec(),
            median: median_epochs(epochs),
            mean: mean_epochs(epochs),
        })
        .collect();
    Ok(ConvergenceTable {
        threshold,
        seeds: seeds.to_vec(),
        arms,
    })
}

impl ConvergenceTable {
    pub fn arm(&self, name: &str) -> Option<&ArmSummary> {
        self.arms.iter().find(|a| a.name == name)
    }

    /// One row per (arm, seed); unreached runs are written as `inf`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{CONVERGENCE_HEADER}")?;
        for arm in &self.arms {
            for (seed, e) in self.seeds.iter().zip(&arm.epochs) {
                let e = e.map_or_else(|| "inf".to_string(), |v| v.to_string());
                writeln!(out, "{},{seed},{e}", arm.name)?;
            }
        }
        Ok(())
    }

    /// `config,median,mean` rows.
    pub fn write_summary_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "config,median,mean")?;
        let f = |v: Option<f64>| v.map_or_else(|| "inf".to_string(), fmt9);
        for arm in &self.arms {
            writeln!(out, "{},{},{}", arm.name, f(arm.median), f(arm.mean))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_treats_unreached_as_infinite() {
        assert_eq!(median_epochs(&[Some(3), None, Some(1)]), Some(3.0));
        assert_eq!(median_epochs(&[Some(3), None, None]), None);
        assert_eq!(median_epochs(&[Some(2), Some(4)]), Some(3.0));
        assert_eq!(median_epochs(&[Some(2), None]), None);
        assert_eq!(mean_epochs(&[Some(2), Some(4)]), Some(3.0));
        assert_eq!(mean_epochs(&[Some(2), None]), None);
    }

    #[test]
    fn class_arm_needs_fewer_neighbors_than_classes() {
        let mut cfg = ExperimentConfig::with_seed(1);
        cfg.loss.infonce = 1.0;
        cfg.dataset.classes = 3;
        let err = sampler_arms(&cfg).unwrap_err();
        assert!(err.to_string().starts_with("convergence.class_k"), "{err}");
        cfg.convergence.class_k = 2;
        let arms = sampler_arms(&cfg).unwrap();
        assert_eq!(arms[1].config.sampler.k, 2);
        cfg.convergence.samplers = vec![SamplerChoice::Uniform];
        cfg.convergence.class_k = 5;
        assert!(sampler_arms(&cfg).is_ok());
    }
}
