//! Gradient preflight: the assembled batch objective of a configuration is
//! checked against central finite differences on a tiny frozen instance
//! before any experiment runs.

use ndarray::Array1;
use rand::Rng;
use rand_distr::StandardNormal;

use scns_core::losses::gradcheck::check_gradient;
use scns_core::rng::{stream_rng, streams};
use scns_core::ContrastMemory;

use crate::config::{ExperimentConfig, SamplerChoice};
use crate::data::{generate_gaussian_mixture, SplitData};
use crate::error::{HarnessError, Result};
use crate::mlp::{Architecture, MlpEncoder};
use crate::train::{architecture, build_sampler, needs_pairs, new_memory, Context, TeacherOutputs};

pub const PREFLIGHT_TOLERANCE: f64 = 1e-4;
const STEP: f64 = 1e-6;
const CLASSES: usize = 3;
const PER_CLASS: usize = 4;
const DIM: usize = 4;
const PROJ: usize = 3;
const MAX_NEGATIVES: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct PreflightReport {
    pub variant: String,
    pub loss: f64,
    pub max_relative_error: f64,
}

/// Short name listing the enabled terms of a configuration.
pub fn variant_name(cfg: &ExperimentConfig) -> String {
    let l = &cfg.loss;
    let mut parts = Vec::new();
    if l.alpha < 1.0 {
        parts.push("ce".to_string());
    }
    if l.alpha > 0.0 {
        parts.push(if l.mixup { "kd-mixup" } else { "kd" }.to_string());
    }
    if l.gamma_pos > 0.0 {
        parts.push("corr-pos".into());
    }
    if l.gamma_neg > 0.0 {
        parts.push("corr-neg".into());
    }
    if l.infonce > 0.0 {
        parts.push(
            if l.infonce_mixup {
                "infonce-mixup"
            } else {
                "infonce"
            }
            .to_string(),
        );
    }
    if cfg.memory.weight > 0.0 {
        parts.push("memory".into());
    }
    if l.triplet_weight > 0.0 {
        parts.push(format!("triplet-{:?}", l.triplet).to_lowercase());
    }
    if needs_pairs(cfg) {
        parts.push(cfg.sampler.kind.kind().name().to_string());
    }
    parts.join("+")
}

/// The configuration's loss terms on a 3-class, 12-sample instance with a
/// small student and a randomly initialized frozen teacher.
pub fn gradient_preflight(cfg: &ExperimentConfig) -> Result<PreflightReport> {
    let seed = cfg.seed()?;
    let mut mini = cfg.clone();
    mini.model.hidden = vec![5, 4];
    mini.model.proj_dim = PROJ;
    mini.teacher.proj_dim = PROJ;
    mini.sampler.negatives = cfg.sampler.negatives.min(MAX_NEGATIVES);
    mini.sampler.k = match cfg.sampler.kind {
        SamplerChoice::Class => cfg.sampler.k.min(CLASSES - 1),
        _ => cfg.sampler.k.min(PER_CLASS * (CLASSES - 1)),
    };
    mini.memory.values = 0;
    mini.memory.queue = 4;

    let mut rng = stream_rng(seed, streams::DATA);
    let train = generate_gaussian_mixture(CLASSES, PER_CLASS, DIM, 2.0, &mut rng)?;
    let split = SplitData {
        label_embeddings: train.centroids.clone(),
        train,
        eval: None,
    };
    let data = &split.train;
    let teacher = MlpEncoder::new(
        &Architecture {
            input: DIM,
            hidden: vec![6],
            classes: CLASSES,
            proj_dim: PROJ,
        },
        &mut stream_rng(seed, streams::TEACHER),
    );
    let outputs = TeacherOutputs::compute(&teacher, data)?;
    let mut ctx = Context {
        cfg: &mini,
        data,
        teacher: Some(&outputs),
        sampler: None,
    };
    if needs_pairs(&mini) {
        ctx.sampler = Some(build_sampler(&mini, &split, Some(&outputs))?);
    }
    let memory = new_memory(&mini, CLASSES, seed, streams::MEMORY)?
        .map(|mut m| -> Result<ContrastMemory> {
            for _ in 0..3 {
                let mut u = Array1::from_shape_fn(PROJ, |_| rng.sample::<f64, _>(StandardNormal));
                u /= u.dot(&u).sqrt();
                m.enqueue(u.view())?;
            }
            Ok(m)
        })
        .transpose()?;

    let student = MlpEncoder::new(
        &architecture(&mini, data),
        &mut stream_rng(seed, streams::INIT),
    );
    let anchors: Vec<usize> = (0..data.len()).step_by(2).collect();
    let mut sampler_rng = stream_rng(seed, streams::SAMPLER);
    let mut mixup_rng = stream_rng(seed, streams::MIXUP);
    let plan = ctx.plan(&anchors, &mut sampler_rng, &mut mixup_rng)?;
    let (loss, grads, _) = ctx.objective(&student, &plan, memory.as_ref())?;
    let params = student.params_flat();
    let report = check_gradient(
        |p| {
            let mut e = student.clone();
            e.set_params_flat(p);
            ctx.objective(&e, &plan, memory.as_ref())
                .map(|r| r.0)
                .unwrap_or(f64::NAN)
        },
        &params,
        &grads.flatten(),
        STEP,
        PREFLIGHT_TOLERANCE,
    );
    let variant = variant_name(cfg);
    if !report.passed {
        return Err(HarnessError::Preflight {
            variant,
            error: report.max_relative_error,
            index: report.worst_index,
        });
    }
    Ok(PreflightReport {
        variant,
        loss,
        max_relative_error: report.max_relative_error,
    })
}
