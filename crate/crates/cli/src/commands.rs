//! Command dispatch. Each run writes `<out>/<command>-<seed>/` containing
//! `config.resolved`, `metrics.csv` and `summary.json`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use scns_core::format::fmt9;
use scns_core::rng::{stream_rng, streams};
use scns_core::sampling::audit_sampler;
use scns_core::theory::{
    self, alignment_report, ccp_batched, ccp_unequal, ccp_uniform_draws, AnchorSets,
};
use scns_core::EmbeddingMatrix;
use scns_harness::checkpoint::write_checkpoint;
use scns_harness::data::load_dataset;
use scns_harness::experiment::{convergence_experiment, sampler_arms};
use scns_harness::preflight::gradient_preflight;
use scns_harness::{
    needs_teacher, negative_sampler, pretrain_teacher, train_kd, train_supervised,
    ExperimentConfig, SplitData, TrainOptions, TrainOutcome,
};

use crate::config::{canonical, parse_config_with_seed};
use crate::embeddings::load_word_embeddings;
use crate::error::{CliError, Result};

/// Significance level of the sampler audit.
pub const AUDIT_SIGNIFICANCE: f64 = 0.01;

#[derive(Debug, Parser)]
#[command(
    name = "scns",
    version,
    about = "Semantically conditioned negative sampling experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub global: GlobalArgs,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// TOML configuration; without one, every key takes its default.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configuration's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Parent directory of the run directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Monte Carlo trials (theory commands) or total draws (sample-audit).
    #[arg(long, global = true)]
    pub trials: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Write zero wall-clock times so outputs are byte-reproducible.
    #[arg(long, global = true)]
    pub no_timing: bool,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Supervised or contrastive training without distillation.
    Train,
    /// Pretrain a teacher, then distill a student.
    Kd,
    /// Chi-square test of the configured negative sampler.
    SampleAudit,
    /// Coupon-collector expectations with a Monte Carlo estimate.
    TheoryCcp(CcpArgs),
    /// Alignment weights and mutual-information bounds over classes.
    TheoryMi,
    /// Epochs to threshold for each sampler over several seeds.
    Convergence,
}

#[derive(Debug, Clone, Args)]
pub struct CcpArgs {
    /// Number of items.
    #[arg(long = "M")]
    pub m: Option<usize>,
    /// Size of the designated subset for single draws.
    #[arg(long)]
    pub k: Option<usize>,
    /// Batch size; above 1, counts batches until every item is seen.
    #[arg(long)]
    pub b: Option<usize>,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Kd => "kd",
            Command::SampleAudit => "sample-audit",
            Command::TheoryCcp(_) => "theory-ccp",
            Command::TheoryMi => "theory-mi",
            Command::Convergence => "convergence",
        }
    }
}

/// Result of a command: the one-line summary and whether its check passed.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub line: String,
    pub dir: PathBuf,
    pub passed: bool,
}

/// Resolves the configuration: the file if given, else defaults with
/// seed 0; `--seed` overrides either.
pub fn resolve_config(global: &GlobalArgs) -> Result<ExperimentConfig> {
    match &global.config {
        Some(path) => parse_config_with_seed(path, global.seed),
        None => {
            let cfg = ExperimentConfig::with_seed(global.seed.unwrap_or(0));
            cfg.validate()?;
            Ok(cfg)
        }
    }
}

pub fn run(cli: &Cli) -> Result<Report> {
    if let Some(n) = cli.global.threads {
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
    let mut cfg = resolve_config(&cli.global)?;
    if let Command::TheoryCcp(a) = &cli.command {
        let t = &mut cfg.theory;
        t.m = a.m.unwrap_or(t.m);
        t.k = a.k.unwrap_or(t.k);
        t.b = a.b.unwrap_or(t.b);
    }
    if let Some(t) = cli.global.trials {
        cfg.theory.trials = t;
    }
    let seed = cfg.seed()?;
    let dir = cli
        .global
        .out
        .join(format!("{}-{seed}", cli.command.name()));
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    write_file(&dir.join("config.resolved"), |w| {
        w.write_all(canonical(&cfg).as_bytes())
    })?;
    let opts = TrainOptions {
        record_time: !cli.global.no_timing,
        stop_at_threshold: false,
    };
    let (line, passed) = match &cli.command {
        Command::Train => train(&cfg, &dir, opts, false)?,
        Command::Kd => train(&cfg, &dir, opts, true)?,
        Command::SampleAudit => sample_audit(&cfg, &dir)?,
        Command::TheoryCcp(_) => theory_ccp(&cfg, &dir)?,
        Command::TheoryMi => theory_mi(&cfg, &dir)?,
        Command::Convergence => convergence(&cfg, &dir)?,
    };
    Ok(Report { line, dir, passed })
}

fn write_file(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(path, e))
}

fn write_json(dir: &Path, value: &Value) -> Result<()> {
    write_file(&dir.join("summary.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)
    })
}

/// Loads the dataset, replacing class embeddings with word vectors when
/// the configuration names a file.
pub fn load_split(cfg: &ExperimentConfig) -> Result<SplitData> {
    let mut split = load_dataset(&cfg.dataset, cfg.seed()?)?;
    if let Some(path) = &cfg.dataset.embeddings_path {
        let emb = load_word_embeddings(Path::new(path), &cfg.dataset.labels)?;
        if emb.rows() != split.train.num_classes {
            return Err(CliError::Invalid {
                module: "config",
                message: format!(
                    "[dataset].labels has {} entries, the data has {} classes",
                    emb.rows(),
                    split.train.num_classes
                ),
            });
        }
        split.label_embeddings = Some(emb.into_inner());
    }
    Ok(split)
}

fn train(
    cfg: &ExperimentConfig,
    dir: &Path,
    opts: TrainOptions,
    distill: bool,
) -> Result<(String, bool)> {
    if distill && !cfg.needs_teacher_outputs() {
        return Err(CliError::Invalid {
            module: "kd",
            message: "no distillation term is enabled; set [loss].alpha, gamma_pos, gamma_neg or triplet_weight"
                .into(),
        });
    }
    if !distill && cfg.needs_teacher_outputs() {
        return Err(CliError::Invalid {
            module: "train",
            message: "distillation terms are enabled; use the kd command".into(),
        });
    }
    let preflight = gradient_preflight(cfg)?;
    let split = load_split(cfg)?;
    let teacher = if distill || needs_teacher(cfg) {
        Some(pretrain_teacher(cfg, &split)?)
    } else {
        None
    };
    let outcome: TrainOutcome = match (&teacher, distill) {
        (Some(t), true) => train_kd(cfg, &split, t, opts)?,
        (t, _) => train_supervised(cfg, &split, t.as_ref(), opts)?,
    };
    write_file(&dir.join("metrics.csv"), |w| outcome.log.write_csv(w))?;
    write_file(&dir.join("student.ckpt"), |w| {
        write_checkpoint(&outcome.encoder, w)
    })?;
    if let Some(t) = &teacher {
        write_file(&dir.join("teacher.ckpt"), |w| write_checkpoint(t, w))?;
    }
    let last = outcome.log.last().expect("at least one epoch");
    write_json(
        dir,
        &json!({
            "command": if distill { "kd" } else { "train" },
            "seed": cfg.seed()?,
            "variant": preflight.variant,
            "preflight_max_relative_error": preflight.max_relative_error,
            "epochs": last.epoch,
            "final": last,
            "threshold": outcome.log.threshold,
            "epochs_to_threshold": outcome.log.epochs_to_threshold,
        }),
    )?;
    let eval = last.eval_acc.map(fmt9).unwrap_or_else(|| "n/a".into());
    Ok((
        format!(
            "{} {}: {} epochs, train_acc {}, eval_acc {eval}, loss {}",
            if distill { "kd" } else { "train" },
            preflight.variant,
            last.epoch,
            fmt9(last.train_acc),
            fmt9(last.train_loss)
        ),
        true,
    ))
}

fn sample_audit(cfg: &ExperimentConfig, dir: &Path) -> Result<(String, bool)> {
    let split = load_split(cfg)?;
    let teacher = match cfg.sampler.kind {
        scns_harness::config::SamplerChoice::Instance => Some(pretrain_teacher(cfg, &split)?),
        _ => None,
    };
    let dist = negative_sampler(cfg, &split, teacher.as_ref())?;
    let index = dist.index();
    let anchors: Vec<usize> = (0..index.num_classes())
        .filter_map(|c| index.members(c).first().copied())
        .collect();
    let per_anchor = (cfg.theory.trials / anchors.len() as u64).max(1);
    let mut rng = stream_rng(cfg.seed()?, streams::MONTE_CARLO);
    let audit = audit_sampler(&dist, &anchors, per_anchor, &mut rng)?;
    let passed = audit.passes(AUDIT_SIGNIFICANCE);
    let verdict = if passed { "PASS" } else { "FAIL" };
    let name = dist.kind().name();
    let c = &audit.chi_square;
    write_file(&dir.join("metrics.csv"), |w| {
        writeln!(
            w,
            "sampler,anchors,draws,same_class,statistic,dof,p_value,result"
        )?;
        writeln!(
            w,
            "{name},{},{},{},{},{},{},{verdict}",
            anchors.len(),
            audit.draws,
            audit.same_class,
            fmt9(c.statistic),
            c.dof,
            fmt9(c.p_value)
        )
    })?;
    write_file(&dir.join("sampler.csv"), |w| dist.write_csv(w))?;
    write_json(
        dir,
        &json!({
            "command": "sample-audit",
            "seed": cfg.seed()?,
            "sampler": name,
            "anchors": anchors,
            "draws": audit.draws,
            "same_class": audit.same_class,
            "statistic": c.statistic,
            "dof": c.dof,
            "p_value": c.p_value,
            "significance": AUDIT_SIGNIFICANCE,
            "passed": passed,
        }),
    )?;
    Ok((
        format!(
            "{verdict} sample-audit {name}: chi2 {} on {} dof, p {}, {} same-class of {} draws",
            fmt9(c.statistic),
            c.dof,
            fmt9(c.p_value),
            audit.same_class,
            audit.draws
        ),
        passed,
    ))
}

fn theory_ccp(cfg: &ExperimentConfig, dir: &Path) -> Result<(String, bool)> {
    let t = &cfg.theory;
    let seed = cfg.seed()?;
    let (mode, m, k_or_b, est) = if !t.probs.is_empty() {
        (
            "unequal",
            t.probs.len(),
            1,
            ccp_unequal(&t.probs, t.trials, seed)?,
        )
    } else if t.b > 1 {
        ("batched", t.m, t.b, ccp_batched(t.m, t.b, t.trials, seed)?)
    } else {
        (
            "uniform",
            t.m,
            t.k,
            ccp_uniform_draws(t.m, t.k, t.trials, seed)?,
        )
    };
    let row = est.csv_row(m, k_or_b);
    write_file(&dir.join("metrics.csv"), |w| {
        writeln!(w, "{}", theory::ccp::CSV_HEADER)?;
        writeln!(w, "{row}")
    })?;
    write_json(
        dir,
        &json!({
            "command": "theory-ccp",
            "seed": seed,
            "mode": mode,
            "M": m,
            "k_or_b": k_or_b,
            "analytic": est.analytic,
            "mc_mean": est.mc_mean,
            "mc_ci95": est.mc_ci95,
            "trials": est.trials,
            "brackets": est.brackets(),
        }),
    )?;
    Ok((format!("{}\n{row}", theory::ccp::CSV_HEADER), true))
}

fn theory_mi(cfg: &ExperimentConfig, dir: &Path) -> Result<(String, bool)> {
    let split = load_split(cfg)?;
    let emb = split.label_embeddings.ok_or(CliError::Invalid {
        module: "theory-mi",
        message: "needs class embeddings: a mixture dataset or [dataset].embeddings_path".into(),
    })?;
    let reps = EmbeddingMatrix::new(emb)?;
    let classes = reps.rows();
    let k = cfg.sampler.k;
    if k + 2 > classes {
        return Err(CliError::Invalid {
            module: "theory-mi",
            message: format!("[sampler].k = {k} leaves no remaining classes among {classes}"),
        });
    }
    let anchors = (0..classes)
        .map(|a| {
            let mut others: Vec<(usize, f64)> = (0..classes)
                .filter(|&j| j != a)
                .map(|j| Ok((j, theory::cosine_alignment(reps.row(a), reps.row(j))?)))
                .collect::<Result<_>>()?;
            others.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
            let ids: Vec<usize> = others.iter().map(|o| o.0).collect();
            Ok(AnchorSets {
                anchor: a,
                topk: ids[..k].to_vec(),
                rest: ids[k..].to_vec(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let loss = cfg.theory.loss;
    let r = alignment_report(&reps, &anchors, theory::cosine_alignment, loss)?;
    write_file(&dir.join("metrics.csv"), |w| {
        writeln!(w, "anchor,a_topk,a_rest,omega")?;
        for (i, a) in anchors.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{}",
                a.anchor,
                fmt9(r.a_topk[i]),
                fmt9(r.a_rest[i]),
                fmt9(r.omega_per_anchor[i])
            )?;
        }
        Ok(())
    })?;
    write_json(
        dir,
        &json!({
            "command": "theory-mi",
            "seed": cfg.seed()?,
            "M": classes,
            "k": k,
            "loss": loss,
            "omega_total": r.omega_total,
            "bound_uniform": r.bound_uniform,
            "bound_scns": r.bound_scns,
        }),
    )?;
    Ok((
        format!(
            "theory-mi: M {classes}, k {k}, Omega {}, bound_uniform {}, bound_scns {}",
            fmt9(r.omega_total),
            fmt9(r.bound_uniform),
            fmt9(r.bound_scns)
        ),
        true,
    ))
}

fn convergence(cfg: &ExperimentConfig, dir: &Path) -> Result<(String, bool)> {
    let arms = sampler_arms(cfg)?;
    for arm in &arms {
        gradient_preflight(&arm.config)?;
    }
    let c = &cfg.convergence;
    let table = convergence_experiment(&arms, c.threshold, &c.seeds)?;
    write_file(&dir.join("metrics.csv"), |w| table.write_csv(w))?;
    write_file(&dir.join("summary.csv"), |w| table.write_summary_csv(w))?;
    write_json(
        dir,
        &json!({
            "command": "convergence",
            "seed": cfg.seed()?,
            "table": table,
        }),
    )?;
    let medians: Vec<String> = table
        .arms
        .iter()
        .map(|a| format!("{} {}", a.name, a.median.map_or_else(|| "inf".into(), fmt9)))
        .collect();
    Ok((
        format!(
            "convergence: median epochs to {} train accuracy: {}",
            fmt9(c.threshold),
            medians.join(", ")
        ),
        true,
    ))
}
