//! Experiment configuration. Every section rejects unknown keys and every
//! key has a default except the top-level `seed`.

use serde::{Deserialize, Serialize};

use scns_core::losses::Kernel;
use scns_core::SamplerKind;

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default)]
    pub memory: MemoryConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub teacher: TeacherConfig,
    #[serde(default)]
    pub theory: TheoryConfig,
    #[serde(default)]
    pub convergence: ConvergenceConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    /// Synthetic isotropic Gaussian mixture.
    Mixture,
    /// Feature matrices read from CSV files (`label,x0,x1,...`).
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    pub classes: usize,
    pub per_class: usize,
    pub eval_per_class: usize,
    pub dim: usize,
    pub separation: f64,
    pub train_path: Option<String>,
    pub eval_path: Option<String>,
    /// Word-embedding file for class-level sampling; rows are matched to
    /// `labels` in class order.
    pub embeddings_path: Option<String>,
    pub labels: Vec<String>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            kind: DatasetKind::Mixture,
            classes: 10,
            per_class: 500,
            eval_per_class: 200,
            dim: 32,
            separation: 3.0,
            train_path: None,
            eval_path: None,
            embeddings_path: None,
            labels: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerChoice {
    Uniform,
    Class,
    Instance,
}

impl SamplerChoice {
    pub fn kind(self) -> SamplerKind {
        match self {
            SamplerChoice::Uniform => SamplerKind::Uniform,
            SamplerChoice::Class => SamplerKind::ClassScns,
            SamplerChoice::Instance => SamplerKind::InstanceScns,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub kind: SamplerChoice,
    /// Neighbors per row of the top-k table.
    pub k: usize,
    /// Softmax sharpness over neighbor similarities.
    pub sharpness: f64,
    /// Negatives drawn per anchor.
    pub negatives: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            kind: SamplerChoice::Uniform,
            k: 3,
            sharpness: 5.0,
            negatives: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripletChoice {
    None,
    Pearson,
    CkaLinear,
    CkaRbf,
}

impl TripletChoice {
    pub fn kernel(self) -> Option<Kernel> {
        match self {
            TripletChoice::CkaLinear => Some(Kernel::Linear),
            TripletChoice::CkaRbf => Some(Kernel::Rbf),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Distillation weight: `(1 − α)·CE + α·τ²·KLD`.
    pub alpha: f64,
    /// Distillation temperature.
    pub tau: f64,
    /// Latent mixup of negative and anchor for the distillation term.
    pub mixup: bool,
    /// Adds `κ(z−, z*)` pseudo-negatives to the InfoNCE term.
    pub infonce_mixup: bool,
    /// Beta(β, β) parameter for the mixing coefficient.
    pub beta: f64,
    /// Weight of the InfoNCE term.
    pub infonce: f64,
    /// InfoNCE temperature; the anchor is divided by it.
    pub infonce_tau: f64,
    /// Weight of the correlation reward on positive student/teacher pairs.
    pub gamma_pos: f64,
    /// Weight of the correlation reward on negative student/teacher pairs.
    pub gamma_neg: f64,
    pub triplet: TripletChoice,
    pub triplet_weight: f64,
    pub zeta: f64,
    pub margin: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 0.0,
            tau: 4.0,
            mixup: false,
            infonce_mixup: false,
            beta: 0.5,
            infonce: 0.0,
            infonce_tau: 0.1,
            gamma_pos: 0.0,
            gamma_neg: 0.0,
            triplet: TripletChoice::None,
            triplet_weight: 0.0,
            zeta: 0.2,
            margin: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemoryConfig {
    /// Weight of the memory NCE term; 0 disables the memory.
    pub weight: f64,
    /// Value-table rows; 0 means one per class.
    pub values: usize,
    pub queue: usize,
    pub gamma: f64,
    pub tau: f64,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        Self {
            weight: 0.0,
            values: 0,
            queue: 256,
            gamma: 0.5,
            tau: 0.07,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Learning rate multiplier applied at each milestone epoch.
    pub lr_decay: f64,
    pub lr_milestones: Vec<usize>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lr: 0.05,
            momentum: 0.9,
            weight_decay: 5e-4,
            epochs: 50,
            batch_size: 64,
            lr_decay: 0.1,
            lr_milestones: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub proj_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            proj_dim: 32,
        }
    }
}

/// The harness-trained teacher used by instance-level sampling and
/// distillation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeacherConfig {
    pub hidden: Vec<usize>,
    pub proj_dim: usize,
    pub epochs: usize,
    pub lr: f64,
    /// InfoNCE weight (uniform negatives) while pretraining, so the metric
    /// head is meaningful.
    pub infonce: f64,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        Self {
            hidden: vec![256, 256],
            proj_dim: 32,
            epochs: 30,
            lr: 0.05,
            infonce: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoryConfig {
    #[serde(rename = "M")]
    pub m: usize,
    pub k: usize,
    pub b: usize,
    pub trials: u64,
    /// Item probabilities for the unequal-probability expectation.
    pub probs: Vec<f64>,
    pub loss: f64,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        Self {
            m: 10,
            k: 3,
            b: 1,
            trials: 100_000,
            probs: Vec::new(),
            loss: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub threshold: f64,
    pub seeds: Vec<u64>,
    pub samplers: Vec<SamplerChoice>,
    /// Neighbor classes per class for the class-level arm.
    pub class_k: usize,
    /// Neighbor samples per anchor for the instance-level arm.
    pub instance_k: usize,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            threshold: 0.95,
            seeds: vec![1, 2, 3, 4, 5],
            samplers: vec![
                SamplerChoice::Uniform,
                SamplerChoice::Class,
                SamplerChoice::Instance,
            ],
            class_k: 3,
            instance_k: 1000,
        }
    }
}

fn range_error(key: &'static str, value: impl std::fmt::Display, range: &str) -> HarnessError {
    HarnessError::Config {
        key,
        message: format!("{value} is out of range {range}"),
    }
}

fn check(ok: bool, key: &'static str, value: impl std::fmt::Display, range: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(range_error(key, value, range))
    }
}

impl ExperimentConfig {
    /// All defaults with the given seed.
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed: Some(seed),
            dataset: DatasetConfig::default(),
            sampler: SamplerConfig::default(),
            loss: LossConfig::default(),
            memory: MemoryConfig::default(),
            optimizer: OptimizerConfig::default(),
            model: ModelConfig::default(),
            teacher: TeacherConfig::default(),
            theory: TheoryConfig::default(),
            convergence: ConvergenceConfig::default(),
        }
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed.ok_or(HarnessError::Config {
            key: "seed",
            message: "seed missing".into(),
        })
    }

    /// Whether any term needs the teacher's outputs.
    pub fn needs_teacher_outputs(&self) -> bool {
        let l = &self.loss;
        l.alpha > 0.0 || l.gamma_pos > 0.0 || l.gamma_neg > 0.0 || l.triplet_weight > 0.0
    }

    /// Checks every documented range; the first violation is reported
    /// with its `section.key`.
    pub fn validate(&self) -> Result<()> {
        self.seed()?;
        let d = &self.dataset;
        check(d.classes >= 2, "dataset.classes", d.classes, ">= 2")?;
        check(d.per_class >= 2, "dataset.per_class", d.per_class, ">= 2")?;
        check(d.dim >= 1, "dataset.dim", d.dim, ">= 1")?;
        check(
            d.separation >= 0.0 && d.separation.is_finite(),
            "dataset.separation",
            d.separation,
            "[0, inf)",
        )?;
        if d.kind == DatasetKind::Csv && d.train_path.is_none() {
            return Err(HarnessError::Config {
                key: "dataset.train_path",
                message: "required when kind = \"csv\"".into(),
            });
        }
        if d.embeddings_path.is_some() && d.labels.is_empty() {
            return Err(HarnessError::Config {
                key: "dataset.labels",
                message: "required with dataset.embeddings_path".into(),
            });
        }

        let s = &self.sampler;
        check(s.k >= 1, "sampler.k", s.k, ">= 1")?;
        if s.kind == SamplerChoice::Class {
            check(s.k < d.classes, "sampler.k", s.k, "[1, classes - 1]")?;
        }
        check(
            s.sharpness > 0.0 && s.sharpness.is_finite(),
            "sampler.sharpness",
            s.sharpness,
            "(0, inf)",
        )?;
        check(s.negatives >= 1, "sampler.negatives", s.negatives, ">= 1")?;

        let l = &self.loss;
        check(
            (0.0..=1.0).contains(&l.alpha),
            "loss.alpha",
            l.alpha,
            "[0, 1]",
        )?;
        check(
            l.tau > 0.0 && l.tau.is_finite(),
            "loss.tau",
            l.tau,
            "(0, inf)",
        )?;
        check(
            l.beta > 0.0 && l.beta.is_finite(),
            "loss.beta",
            l.beta,
            "(0, inf)",
        )?;
        check(l.infonce >= 0.0, "loss.infonce", l.infonce, "[0, inf)")?;
        check(
            l.infonce_tau > 0.0 && l.infonce_tau.is_finite(),
            "loss.infonce_tau",
            l.infonce_tau,
            "(0, inf)",
        )?;
        check(
            l.gamma_pos >= 0.0,
            "loss.gamma_pos",
            l.gamma_pos,
            "[0, inf)",
        )?;
        check(
            l.gamma_neg >= 0.0,
            "loss.gamma_neg",
            l.gamma_neg,
            "[0, inf)",
        )?;
        check(
            l.triplet_weight >= 0.0,
            "loss.triplet_weight",
            l.triplet_weight,
            "[0, inf)",
        )?;
        check((0.0..=1.0).contains(&l.zeta), "loss.zeta", l.zeta, "[0, 1]")?;
        check(l.margin >= 0.0, "loss.margin", l.margin, "[0, inf)")?;
        if l.triplet_weight > 0.0 && l.triplet == TripletChoice::None {
            return Err(HarnessError::Config {
                key: "loss.triplet",
                message: "a triplet kind is required when loss.triplet_weight > 0".into(),
            });
        }

        let m = &self.memory;
        check(m.weight >= 0.0, "memory.weight", m.weight, "[0, inf)")?;
        check(m.queue >= 1, "memory.queue", m.queue, ">= 1")?;
        check(
            (0.0..=1.0).contains(&m.gamma),
            "memory.gamma",
            m.gamma,
            "[0, 1]",
        )?;
        check(
            m.tau > 0.0 && m.tau.is_finite(),
            "memory.tau",
            m.tau,
            "(0, inf)",
        )?;

        let o = &self.optimizer;
        check(
            o.lr > 0.0 && o.lr.is_finite(),
            "optimizer.lr",
            o.lr,
            "(0, inf)",
        )?;
        check(
            (0.0..1.0).contains(&o.momentum),
            "optimizer.momentum",
            o.momentum,
            "[0, 1)",
        )?;
        check(
            o.weight_decay >= 0.0,
            "optimizer.weight_decay",
            o.weight_decay,
            "[0, inf)",
        )?;
        check(o.epochs >= 1, "optimizer.epochs", o.epochs, ">= 1")?;
        check(
            o.batch_size >= 1,
            "optimizer.batch_size",
            o.batch_size,
            ">= 1",
        )?;
        check(
            o.lr_decay > 0.0,
            "optimizer.lr_decay",
            o.lr_decay,
            "(0, inf)",
        )?;

        check(
            self.model.hidden.iter().all(|&w| w >= 1),
            "model.hidden",
            format!("{:?}", self.model.hidden),
            "widths >= 1",
        )?;
        check(
            self.model.proj_dim >= 1,
            "model.proj_dim",
            self.model.proj_dim,
            ">= 1",
        )?;
        let t = &self.teacher;
        check(
            t.hidden.iter().all(|&w| w >= 1),
            "teacher.hidden",
            format!("{:?}", t.hidden),
            "widths >= 1",
        )?;
        check(t.proj_dim >= 1, "teacher.proj_dim", t.proj_dim, ">= 1")?;
        check(t.epochs >= 1, "teacher.epochs", t.epochs, ">= 1")?;
        check(
            t.lr > 0.0 && t.lr.is_finite(),
            "teacher.lr",
            t.lr,
            "(0, inf)",
        )?;
        check(t.infonce >= 0.0, "teacher.infonce", t.infonce, "[0, inf)")?;
        if (l.gamma_pos > 0.0 || l.gamma_neg > 0.0 || l.triplet_weight > 0.0)
            && t.proj_dim != self.model.proj_dim
        {
            return Err(HarnessError::Config {
                key: "teacher.proj_dim",
                message: format!(
                    "{} must equal model.proj_dim = {} for representation-level distillation",
                    t.proj_dim, self.model.proj_dim
                ),
            });
        }

        let th = &self.theory;
        check(th.m >= 1, "theory.M", th.m, ">= 1")?;
        check(th.k >= 1 && th.k <= th.m, "theory.k", th.k, "[1, M]")?;
        check(th.b >= 1, "theory.b", th.b, ">= 1")?;
        check(th.trials >= 1, "theory.trials", th.trials, ">= 1")?;

        let c = &self.convergence;
        check(
            (0.0..=1.0).contains(&c.threshold),
            "convergence.threshold",
            c.threshold,
            "[0, 1]",
        )?;
        check(!c.seeds.is_empty(), "convergence.seeds", "[]", "non-empty")?;
        check(
            !c.samplers.is_empty(),
            "convergence.samplers",
            "[]",
            "non-empty",
        )?;
        check(c.class_k >= 1, "convergence.class_k", c.class_k, ">= 1")?;
        check(
            c.instance_k >= 1,
            "convergence.instance_k",
            c.instance_k,
            ">= 1",
        )?;
        Ok(())
    }
}
