//! Training loops: supervised (cross-entropy plus optional contrastive
//! terms) and teacher–student distillation.

use std::time::Instant;

use ndarray::{s, Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;

use scns_core::losses::{
    cross_entropy, infonce, kld, latent_mixup_kld, pearson, pearson_triplet_loss, triplet_cka_loss,
    Kernel, MixupDraw,
};
use scns_core::rng::{stream_rng, streams};
use scns_core::sampling::{build_class_scns, build_instance_scns, compose_batch};
use scns_core::{ContrastMemory, EmbeddingMatrix, NegativeSamplingDistribution, SamplerKind};

use crate::config::{ExperimentConfig, SamplerChoice, TripletChoice};
use crate::data::{Dataset, SplitData};
use crate::error::{HarnessError, Result};
use crate::metrics::{EpochMetrics, MetricsLog};
use crate::mlp::{argmax_rows, Architecture, Gradients, MlpEncoder, Sgd};

const EVAL_CHUNK: usize = 1024;

/// Random streams of one training run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Streams {
    pub init: u64,
    pub shuffle: u64,
    pub sampler: u64,
    pub mixup: u64,
    pub memory: u64,
}

impl Streams {
    pub const STUDENT: Streams = Streams {
        init: streams::INIT,
        shuffle: streams::SHUFFLE,
        sampler: streams::SAMPLER,
        mixup: streams::MIXUP,
        memory: streams::MEMORY,
    };

    /// Teacher pretraining draws from streams disjoint from the student's.
    pub const TEACHER: Streams = Streams {
        init: streams::TEACHER,
        shuffle: streams::TEACHER << 8 | streams::SHUFFLE,
        sampler: streams::TEACHER << 8 | streams::SAMPLER,
        mixup: streams::TEACHER << 8 | streams::MIXUP,
        memory: streams::TEACHER << 8 | streams::MEMORY,
    };
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    /// Record wall-clock time per epoch; when off `wall_ms` is 0 and the
    /// log is byte-reproducible.
    pub record_time: bool,
    /// Stop after the first epoch that reaches the convergence threshold.
    pub stop_at_threshold: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            record_time: true,
            stop_at_threshold: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub encoder: MlpEncoder,
    pub log: MetricsLog,
    pub memory: Option<ContrastMemory>,
}

/// Frozen teacher logits and metric features over a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherOutputs {
    pub logits: Array2<f64>,
    pub z: Array2<f64>,
}

impl TeacherOutputs {
    pub fn compute(teacher: &MlpEncoder, data: &Dataset) -> Result<Self> {
        let mut logits = Array2::zeros((data.len(), teacher.num_classes()));
        let mut z = Array2::zeros((data.len(), teacher.architecture().proj_dim));
        for start in (0..data.len()).step_by(EVAL_CHUNK) {
            let end = (start + EVAL_CHUNK).min(data.len());
            let f = teacher.forward(data.inputs.slice(s![start..end, ..]))?;
            logits.slice_mut(s![start..end, ..]).assign(&f.logits);
            z.slice_mut(s![start..end, ..]).assign(&f.z);
        }
        Ok(Self { logits, z })
    }
}

/// Classification accuracy of the argmax logit (ties to the lowest class).
pub fn evaluate(encoder: &MlpEncoder, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for start in (0..data.len()).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(data.len());
        let logits = encoder.logits(data.inputs.slice(s![start..end, ..]))?;
        correct += argmax_rows(logits.view())
            .iter()
            .zip(&data.labels[start..end])
            .filter(|(p, l)| p == l)
            .count();
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Everything the per-batch objective reads but never changes.
pub(crate) struct Context<'a> {
    pub cfg: &'a ExperimentConfig,
    pub data: &'a Dataset,
    pub teacher: Option<&'a TeacherOutputs>,
    pub sampler: Option<NegativeSamplingDistribution>,
}

/// Random choices for one minibatch, drawn before the objective is
/// evaluated so the objective itself is a deterministic function of the
/// parameters.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct BatchPlan {
    pub anchors: Vec<usize>,
    pub positives: Vec<usize>,
    /// `anchors.len() × M`, row-major.
    pub negatives: Vec<usize>,
    /// Mixing coefficient per (anchor, negative) pair for distillation.
    pub kd_nu: Vec<f64>,
    /// Mixing coefficient per (anchor, negative) pair for InfoNCE
    /// pseudo-negatives.
    pub nce_nu: Vec<f64>,
}

/// Whether any term needs positives and sampled negatives.
pub fn needs_pairs(cfg: &ExperimentConfig) -> bool {
    let l = &cfg.loss;
    l.infonce > 0.0
        || l.gamma_pos > 0.0
        || l.gamma_neg > 0.0
        || l.triplet_weight > 0.0
        || (l.alpha > 0.0 && l.mixup)
}

impl Context<'_> {
    fn needs_pairs(&self) -> bool {
        needs_pairs(self.cfg)
    }

    fn negatives_per_anchor(&self) -> usize {
        if self.needs_pairs() {
            self.cfg.sampler.negatives
        } else {
            0
        }
    }

    fn teacher(&self) -> Result<&TeacherOutputs> {
        self.teacher.ok_or(HarnessError::Config {
            key: "loss",
            message: "teacher outputs are required by the enabled distillation terms".into(),
        })
    }

    pub fn plan<R: Rng + ?Sized>(
        &self,
        anchors: &[usize],
        sampler_rng: &mut R,
        mixup_rng: &mut R,
    ) -> Result<BatchPlan> {
        let m = self.negatives_per_anchor();
        let mut plan = BatchPlan {
            anchors: anchors.to_vec(),
            positives: Vec::new(),
            negatives: Vec::new(),
            kd_nu: Vec::new(),
            nce_nu: Vec::new(),
        };
        if m == 0 {
            return Ok(plan);
        }
        let dist = self
            .sampler
            .as_ref()
            .expect("sampler built when pairs are needed");
        for &a in anchors {
            let b = compose_batch(dist, a, m, sampler_rng)?;
            plan.positives.push(b.positive);
            plan.negatives.extend(b.negatives);
        }
        let l = &self.cfg.loss;
        let pairs = anchors.len() * m;
        if l.alpha > 0.0 && l.mixup {
            plan.kd_nu = (0..pairs)
                .map(|_| MixupDraw::sample(l.beta, mixup_rng).map(|d| d.nu))
                .collect::<std::result::Result<_, _>>()?;
        }
        if l.infonce > 0.0 && l.infonce_mixup {
            plan.nce_nu = (0..pairs)
                .map(|_| MixupDraw::sample(l.beta, mixup_rng).map(|d| d.nu))
                .collect::<std::result::Result<_, _>>()?;
        }
        Ok(plan)
    }

    /// Mean loss over the batch, its parameter gradients, and the anchors'
    /// metric features (for memory updates).
    pub fn objective(
        &self,
        encoder: &MlpEncoder,
        plan: &BatchPlan,
        memory: Option<&ContrastMemory>,
    ) -> Result<(f64, Gradients, Array2<f64>)> {
        let l = &self.cfg.loss;
        let labels = &self.data.labels;
        let b = plan.anchors.len();
        let m = if plan.positives.is_empty() {
            0
        } else {
            plan.negatives.len() / b
        };
        let rows: Vec<usize> = plan
            .anchors
            .iter()
            .chain(&plan.positives)
            .chain(&plan.negatives)
            .copied()
            .collect();
        let x = self.data.select(&rows);
        let fwd = encoder.forward(x.view())?;
        let r = rows.len();
        let (pos, neg) = (b, 2 * b);
        let inv_b = 1.0 / b as f64;

        let uses_z = l.infonce > 0.0
            || l.gamma_pos > 0.0
            || l.gamma_neg > 0.0
            || l.triplet_weight > 0.0
            || (self.cfg.memory.weight > 0.0);
        let kd_mix = l.alpha > 0.0 && l.mixup;
        let mut d_logits = Array2::zeros((r, encoder.num_classes()));
        let mut d_z = uses_z.then(|| Array2::zeros(fwd.z.dim()));
        let mut d_feat = kd_mix.then(|| Array2::zeros(fwd.features.dim()));
        let mut extra_w = kd_mix.then(|| Array2::zeros(encoder.classifier.weights.dim()));
        let mut extra_b = kd_mix.then(|| Array1::zeros(encoder.num_classes()));
        let mut loss = 0.0;

        let teacher = if self.cfg.needs_teacher_outputs() {
            Some(self.teacher()?)
        } else {
            None
        };
        let kd_scale = l.alpha * l.tau * l.tau;

        for (i, &a) in plan.anchors.iter().enumerate() {
            let ce_weight = 1.0 - l.alpha;
            if ce_weight > 0.0 {
                let ce = cross_entropy(fwd.logits.row(i), labels[a], 1.0)?;
                loss += ce_weight * inv_b * ce.value;
                d_logits
                    .row_mut(i)
                    .scaled_add(ce_weight * inv_b, &ce.vector("logits"));
            }
            if l.alpha > 0.0 {
                let t = teacher.expect("teacher checked");
                if l.mixup {
                    let w = kd_scale * inv_b / m as f64;
                    for j in 0..m {
                        let row = neg + i * m + j;
                        let n_idx = plan.negatives[i * m + j];
                        let e = latent_mixup_kld(
                            encoder.classifier.weights.view(),
                            encoder.classifier.bias.view(),
                            fwd.features.row(row),
                            fwd.features.row(i),
                            t.logits.row(n_idx),
                            t.logits.row(a),
                            plan.kd_nu[i * m + j],
                            l.tau,
                        )?;
                        loss += w * e.value;
                        let df = d_feat.as_mut().expect("allocated");
                        df.row_mut(row).scaled_add(w, &e.vector("student_i"));
                        df.row_mut(i).scaled_add(w, &e.vector("student_j"));
                        extra_w
                            .as_mut()
                            .expect("allocated")
                            .scaled_add(w, &e.matrix("weights"));
                        extra_b
                            .as_mut()
                            .expect("allocated")
                            .scaled_add(w, &e.vector("bias"));
                    }
                } else {
                    let e = kld(t.logits.row(a), fwd.logits.row(i), l.tau)?;
                    loss += kd_scale * inv_b * e.value;
                    d_logits
                        .row_mut(i)
                        .scaled_add(kd_scale * inv_b, &e.vector("student"));
                }
            }
            if l.gamma_pos > 0.0 {
                let t = teacher.expect("teacher checked");
                let e = pearson(fwd.z.row(pos + i), t.z.row(plan.positives[i]))?;
                loss -= l.gamma_pos * inv_b * e.value;
                d_z.as_mut()
                    .expect("allocated")
                    .row_mut(pos + i)
                    .scaled_add(-l.gamma_pos * inv_b, &e.vector("u"));
            }
            if l.gamma_neg > 0.0 {
                let t = teacher.expect("teacher checked");
                let w = l.gamma_neg * inv_b / m as f64;
                for j in 0..m {
                    let row = neg + i * m + j;
                    let e = pearson(fwd.z.row(row), t.z.row(plan.negatives[i * m + j]))?;
                    loss -= w * e.value;
                    d_z.as_mut()
                        .expect("allocated")
                        .row_mut(row)
                        .scaled_add(-w, &e.vector("u"));
                }
            }
            if l.infonce > 0.0 {
                let w = l.infonce * inv_b;
                let inv_t = 1.0 / l.infonce_tau;
                let q = fwd.z.row(i).mapv(|v| v * inv_t);
                let mixed = l.infonce_mixup;
                let mut negs = Array2::zeros((if mixed { 2 * m } else { m }, fwd.z.ncols()));
                for j in 0..m {
                    negs.row_mut(j).assign(&fwd.z.row(neg + i * m + j));
                    if mixed {
                        let nu = plan.nce_nu[i * m + j];
                        negs.row_mut(m + j).assign(
                            &(&fwd.z.row(neg + i * m + j) * nu + &fwd.z.row(i) * (1.0 - nu)),
                        );
                    }
                }
                let e = infonce(q.view(), fwd.z.row(pos + i), negs.view())?;
                loss += w * e.value;
                let dz = d_z.as_mut().expect("allocated");
                dz.row_mut(i).scaled_add(w * inv_t, &e.vector("anchor"));
                dz.row_mut(pos + i).scaled_add(w, &e.vector("positive"));
                let gn = e.matrix("negatives");
                for j in 0..m {
                    dz.row_mut(neg + i * m + j).scaled_add(w, &gn.row(j));
                    if mixed {
                        let nu = plan.nce_nu[i * m + j];
                        dz.row_mut(neg + i * m + j)
                            .scaled_add(w * nu, &gn.row(m + j));
                        dz.row_mut(i).scaled_add(w * (1.0 - nu), &gn.row(m + j));
                    }
                }
            }
            if self.cfg.memory.weight > 0.0 {
                let mem = memory.expect("memory allocated when weighted");
                let w = self.cfg.memory.weight * inv_b;
                let e = mem.nce_loss_and_grad(fwd.z.row(i), labels[a])?;
                loss += w * e.value;
                d_z.as_mut()
                    .expect("allocated")
                    .row_mut(i)
                    .scaled_add(w, &e.vector("z"));
            }
            if l.triplet_weight > 0.0 && l.triplet == TripletChoice::Pearson {
                let t = teacher.expect("teacher checked");
                let w = l.triplet_weight * inv_b;
                let negs = &plan.negatives[i * m..(i + 1) * m];
                let e = pearson_triplet_loss(
                    fwd.z.slice(s![neg + i * m..neg + (i + 1) * m, ..]),
                    fwd.z.row(pos + i),
                    t.z.select(ndarray::Axis(0), negs).view(),
                    t.z.row(plan.positives[i]),
                    l.zeta,
                    l.margin,
                )?;
                loss += w * e.value;
                let dz = d_z.as_mut().expect("allocated");
                dz.slice_mut(s![neg + i * m..neg + (i + 1) * m, ..])
                    .scaled_add(w, &e.matrix("student_minus"));
                dz.row_mut(pos + i).scaled_add(w, &e.vector("student_plus"));
            }
        }

        if l.triplet_weight > 0.0 {
            if let Some(kernel) = l.triplet.kernel() {
                let min_rows = if kernel == Kernel::Rbf { 3 } else { 2 };
                if b >= min_rows {
                    let t = teacher.expect("teacher checked");
                    let first_neg: Vec<usize> = (0..b).map(|i| neg + i * m).collect();
                    let zn = fwd.z.select(ndarray::Axis(0), &first_neg);
                    let ta = t.z.select(ndarray::Axis(0), &plan.anchors);
                    let e = triplet_cka_loss(
                        fwd.z.slice(s![0..b, ..]),
                        fwd.z.slice(s![pos..pos + b, ..]),
                        zn.view(),
                        ta.view(),
                        l.zeta,
                        l.margin,
                        kernel,
                    )?;
                    let w = l.triplet_weight;
                    loss += w * e.value;
                    let dz = d_z.as_mut().expect("allocated");
                    dz.slice_mut(s![0..b, ..])
                        .scaled_add(w, &e.matrix("student_anchor"));
                    dz.slice_mut(s![pos..pos + b, ..])
                        .scaled_add(w, &e.matrix("student_positive"));
                    let gn = e.matrix("student_negative");
                    for (k, &row) in first_neg.iter().enumerate() {
                        dz.row_mut(row).scaled_add(w, &gn.row(k));
                    }
                }
            }
        }

        let mut grads = encoder.backward(
            &fwd,
            d_logits.view(),
            d_z.as_ref().map(|g| g.view()),
            d_feat.as_ref().map(|g| g.view()),
        );
        if let (Some(w), Some(bias)) = (extra_w, extra_b) {
            let c = grads.classifier_mut();
            c.weights += &w;
            c.bias += &bias;
        }
        let anchor_z = fwd.z.slice(s![0..b, ..]).to_owned();
        Ok((loss, grads, anchor_z))
    }
}

fn check_teacher(cfg: &ExperimentConfig, data: &Dataset, teacher: &MlpEncoder) -> Result<()> {
    if teacher.input_dim() != data.dim() {
        return Err(HarnessError::Config {
            key: "teacher",
            message: format!(
                "teacher expects {} inputs, data has {}",
                teacher.input_dim(),
                data.dim()
            ),
        });
    }
    if teacher.num_classes() != data.num_classes {
        return Err(HarnessError::Config {
            key: "teacher",
            message: format!(
                "teacher has {} classes, data has {}",
                teacher.num_classes(),
                data.num_classes
            ),
        });
    }
    let l = &cfg.loss;
    let student_proj = cfg.model.proj_dim;
    let teacher_proj = teacher.architecture().proj_dim;
    if (l.gamma_pos > 0.0 || l.gamma_neg > 0.0 || l.triplet_weight > 0.0)
        && teacher_proj != student_proj
    {
        return Err(HarnessError::Config {
            key: "teacher.proj_dim",
            message: format!(
                "teacher metric head has {teacher_proj} dims, student has {student_proj}"
            ),
        });
    }
    Ok(())
}

pub(crate) fn build_sampler(
    cfg: &ExperimentConfig,
    split: &SplitData,
    teacher: Option<&TeacherOutputs>,
) -> Result<NegativeSamplingDistribution> {
    let index = split.train.index()?;
    let s = &cfg.sampler;
    Ok(match s.kind {
        SamplerChoice::Uniform => NegativeSamplingDistribution::uniform(index),
        SamplerChoice::Class => {
            let emb = split
                .label_embeddings
                .as_ref()
                .ok_or(HarnessError::Config {
                    key: "dataset.embeddings_path",
                    message: "class-level sampling needs label embeddings".into(),
                })?;
            build_class_scns(&EmbeddingMatrix::new(emb.clone())?, index, s.k, s.sharpness)?
        }
        SamplerChoice::Instance => {
            let t = teacher.ok_or(HarnessError::Config {
                key: "sampler.kind",
                message: "instance-level sampling needs a teacher".into(),
            })?;
            build_instance_scns(&EmbeddingMatrix::new(t.z.clone())?, index, s.k, s.sharpness)?
        }
    })
}

pub(crate) fn architecture(cfg: &ExperimentConfig, data: &Dataset) -> Architecture {
    Architecture {
        input: data.dim(),
        hidden: cfg.model.hidden.clone(),
        classes: data.num_classes,
        proj_dim: cfg.model.proj_dim,
    }
}

pub(crate) fn new_memory(
    cfg: &ExperimentConfig,
    classes: usize,
    seed: u64,
    stream: u64,
) -> Result<Option<ContrastMemory>> {
    let m = &cfg.memory;
    if m.weight == 0.0 {
        return Ok(None);
    }
    let values = if m.values == 0 { classes } else { m.values };
    if values < classes {
        return Err(HarnessError::Config {
            key: "memory.values",
            message: format!("{values} rows cannot hold one entry per class ({classes})"),
        });
    }
    let mut rng = stream_rng(seed, stream);
    Ok(Some(ContrastMemory::init(
        values,
        m.queue,
        cfg.model.proj_dim,
        m.gamma,
        m.tau,
        &mut rng,
    )?))
}

fn learning_rate(cfg: &ExperimentConfig, base: f64, epoch: usize) -> f64 {
    let o = &cfg.optimizer;
    let passed = o.lr_milestones.iter().filter(|&&e| epoch > e).count();
    base * o.lr_decay.powi(passed as i32)
}

fn run(
    cfg: &ExperimentConfig,
    split: &SplitData,
    teacher: Option<&MlpEncoder>,
    streams: Streams,
    lr: f64,
    epochs: usize,
    opts: TrainOptions,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let seed = cfg.seed()?;
    let data = &split.train;
    if let Some(t) = teacher {
        check_teacher(cfg, data, t)?;
    }
    let outputs = teacher
        .map(|t| TeacherOutputs::compute(t, data))
        .transpose()?;
    let mut ctx = Context {
        cfg,
        data,
        teacher: outputs.as_ref(),
        sampler: None,
    };
    if cfg.needs_teacher_outputs() {
        ctx.teacher()?;
    }
    if ctx.needs_pairs() {
        ctx.sampler = Some(build_sampler(cfg, split, outputs.as_ref())?);
    }

    let mut encoder = MlpEncoder::new(
        &architecture(cfg, data),
        &mut stream_rng(seed, streams.init),
    );
    let mut memory = new_memory(cfg, data.num_classes, seed, streams.memory)?;
    let mut opt = Sgd::new(&encoder, cfg.optimizer.momentum, cfg.optimizer.weight_decay);
    let mut shuffle_rng = stream_rng(seed, streams.shuffle);
    let mut sampler_rng = stream_rng(seed, streams.sampler);
    let mut mixup_rng = stream_rng(seed, streams.mixup);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = MetricsLog::new(cfg.convergence.threshold);
    let start = Instant::now();

    for epoch in 1..=epochs {
        let rate = learning_rate(cfg, lr, epoch);
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for (batch, anchors) in order.chunks(cfg.optimizer.batch_size).enumerate() {
            let plan = ctx.plan(anchors, &mut sampler_rng, &mut mixup_rng)?;
            let (loss, grads, anchor_z) = ctx.objective(&encoder, &plan, memory.as_ref())?;
            if !loss.is_finite() {
                return Err(HarnessError::Diverged { epoch, batch, loss });
            }
            total += loss * anchors.len() as f64;
            opt.step(&mut encoder, &grads, rate);
            if let Some(mem) = memory.as_mut() {
                for (z, &a) in anchor_z.rows().into_iter().zip(anchors) {
                    mem.momentum_update(data.labels[a], z)?;
                    mem.enqueue(z)?;
                }
            }
        }
        let train_acc = evaluate(&encoder, data)?;
        let eval_acc = split
            .eval
            .as_ref()
            .map(|e| evaluate(&encoder, e))
            .transpose()?;
        log.push(EpochMetrics {
            epoch,
            train_loss: total / data.len() as f64,
            train_acc,
            eval_acc,
            wall_ms: if opts.record_time {
                start.elapsed().as_millis() as u64
            } else {
                0
            },
        });
        if opts.stop_at_threshold && log.epochs_to_threshold.is_some() {
            break;
        }
    }
    Ok(TrainOutcome {
        encoder,
        log,
        memory,
    })
}

/// Supervised training: cross-entropy plus any enabled contrastive terms
/// (InfoNCE with sampled negatives, latent-mixup pseudo-negatives,
/// memory NCE). `sampling_teacher` supplies the representations for
/// instance-level sampling and is otherwise unused.
pub fn train_supervised(
    cfg: &ExperimentConfig,
    split: &SplitData,
    sampling_teacher: Option<&MlpEncoder>,
    opts: TrainOptions,
) -> Result<TrainOutcome> {
    if cfg.needs_teacher_outputs() {
        return Err(HarnessError::Config {
            key: "loss",
            message: "distillation terms are enabled; use train_kd".into(),
        });
    }
    run(
        cfg,
        split,
        sampling_teacher,
        Streams::STUDENT,
        cfg.optimizer.lr,
        cfg.optimizer.epochs,
        opts,
    )
}

/// Teacher–student distillation. The teacher is only read.
pub fn train_kd(
    cfg: &ExperimentConfig,
    split: &SplitData,
    teacher: &MlpEncoder,
    opts: TrainOptions,
) -> Result<TrainOutcome> {
    run(
        cfg,
        split,
        Some(teacher),
        Streams::STUDENT,
        cfg.optimizer.lr,
        cfg.optimizer.epochs,
        opts,
    )
}

/// Configuration used to pretrain the teacher: the `[teacher]` architecture
/// trained with cross-entropy plus InfoNCE over uniform negatives.
pub fn teacher_config(cfg: &ExperimentConfig) -> ExperimentConfig {
    let mut t = cfg.clone();
    t.model.hidden = cfg.teacher.hidden.clone();
    t.model.proj_dim = cfg.teacher.proj_dim;
    t.loss = crate::config::LossConfig {
        infonce: cfg.teacher.infonce,
        infonce_tau: cfg.loss.infonce_tau,
        ..Default::default()
    };
    t.memory.weight = 0.0;
    t.sampler.kind = SamplerChoice::Uniform;
    t.optimizer.lr = cfg.teacher.lr;
    t.optimizer.epochs = cfg.teacher.epochs;
    t
}

pub fn pretrain_teacher(cfg: &ExperimentConfig, split: &SplitData) -> Result<MlpEncoder> {
    let t = teacher_config(cfg);
    let opts = TrainOptions {
        record_time: false,
        stop_at_threshold: false,
    };
    Ok(run(
        &t,
        split,
        None,
        Streams::TEACHER,
        t.optimizer.lr,
        t.optimizer.epochs,
        opts,
    )?
    .encoder)
}

/// Whether a configuration needs a pretrained teacher at all.
pub fn needs_teacher(cfg: &ExperimentConfig) -> bool {
    cfg.needs_teacher_outputs()
        || (cfg.sampler.kind.kind() == SamplerKind::InstanceScns && needs_pairs(cfg))
}

/// The negative sampler a run with `cfg` would use. For instance-level
/// sampling, `teacher` supplies the representations.
pub fn negative_sampler(
    cfg: &ExperimentConfig,
    split: &SplitData,
    teacher: Option<&MlpEncoder>,
) -> Result<NegativeSamplingDistribution> {
    let outputs = match teacher {
        Some(t) if cfg.sampler.kind == SamplerChoice::Instance => {
            Some(TeacherOutputs::compute(t, &split.train)?)
        }
        _ => None,
    };
    build_sampler(cfg, split, outputs.as_ref())
}
