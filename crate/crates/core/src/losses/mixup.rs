use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::{Beta, Distribution};

use super::{check_same_len, kld, LossEvaluation};
use crate::error::{Error, Result};

/// A mixing coefficient `ν` and the Beta parameter it was drawn with
/// (`beta = 0` marks a fixed, non-random coefficient).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixupDraw {
    pub beta: f64,
    pub nu: f64,
}

impl MixupDraw {
    /// Draws `ν ~ Beta(β, β)`.
    pub fn sample<R: Rng + ?Sized>(beta: f64, rng: &mut R) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::out_of_range("beta", beta, "(0, inf)"));
        }
        let dist = Beta::new(beta, beta).map_err(|e| Error::Numerical(e.to_string()))?;
        Ok(Self {
            beta,
            nu: dist.sample(rng),
        })
    }

    pub fn fixed(nu: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&nu) {
            return Err(Error::out_of_range("nu", nu, "[0, 1]"));
        }
        Ok(Self { beta: 0.0, nu })
    }
}

/// `ν·z_i + (1 − ν)·z_j`.
pub fn mixup(z_i: ArrayView1<'_, f64>, z_j: ArrayView1<'_, f64>, nu: f64) -> Result<Array1<f64>> {
    if !(0.0..=1.0).contains(&nu) {
        return Err(Error::out_of_range("nu", nu, "[0, 1]"));
    }
    check_same_len(z_i.len(), z_j.len())?;
    Ok(&z_i * nu + &z_j * (1.0 - nu))
}

/// KL divergence from the mixed teacher target `σ(teacher_mix/τ)` to the
/// student's prediction on the mixed representation `σ(student_mix/τ)`.
/// `teacher_mix` holds the already-mixed teacher logits. Gradient key:
/// `"student"`.
pub fn mixup_kld(
    student_mix_logits: ArrayView1<'_, f64>,
    teacher_mix_logits: ArrayView1<'_, f64>,
    tau: f64,
) -> Result<LossEvaluation> {
    check_same_len(teacher_mix_logits.len(), student_mix_logits.len())?;
    kld(teacher_mix_logits, student_mix_logits, tau)
}

/// Latent mixup distillation through a linear classifier head
/// (`weights`: d×C, `bias`: C). Student representations are mixed, then
/// classified; teacher logits are mixed directly.
///
/// Gradient keys: `"student_i"`, `"student_j"`, `"weights"`, `"bias"`.
#[allow(clippy::too_many_arguments)]
pub fn latent_mixup_kld(
    weights: ArrayView2<'_, f64>,
    bias: ArrayView1<'_, f64>,
    student_i: ArrayView1<'_, f64>,
    student_j: ArrayView1<'_, f64>,
    teacher_logits_i: ArrayView1<'_, f64>,
    teacher_logits_j: ArrayView1<'_, f64>,
    nu: f64,
    tau: f64,
) -> Result<LossEvaluation> {
    check_same_len(weights.nrows(), student_i.len())?;
    check_same_len(weights.ncols(), bias.len())?;
    check_same_len(weights.ncols(), teacher_logits_i.len())?;
    let z_mix = mixup(student_i, student_j, nu)?;
    let t_mix = mixup(teacher_logits_i, teacher_logits_j, nu)?;
    let logits = weights.t().dot(&z_mix) + bias;
    let inner = mixup_kld(logits.view(), t_mix.view(), tau)?;
    let g_logits = inner.vector("student");
    let g_mix = weights.dot(&g_logits);
    let g_w = z_mix
        .view()
        .insert_axis(ndarray::Axis(1))
        .dot(&g_logits.insert_axis(ndarray::Axis(0)));
    Ok(LossEvaluation::new(inner.value)
        .with_vector("student_i", &g_mix * nu)
        .with_vector("student_j", &g_mix * (1.0 - nu))
        .with_matrix("weights", g_w)
        .with_vector("bias", g_logits.to_owned()))
}
