use ndarray::{Array1, ArrayView1};

use super::{check_same_len, check_temperature, LossEvaluation};
use crate::error::{Error, Result};

/// `log σ(logits / τ)`, computed by log-sum-exp.
pub fn log_softmax(logits: ArrayView1<'_, f64>, tau: f64) -> Array1<f64> {
    let m = logits
        .iter()
        .fold(f64::NEG_INFINITY, |a, &b| a.max(b / tau));
    let lse = logits
        .iter()
        .map(|&l| (l / tau - m).exp())
        .sum::<f64>()
        .ln()
        + m;
    logits.mapv(|l| l / tau - lse)
}

pub fn softmax(logits: ArrayView1<'_, f64>, tau: f64) -> Array1<f64> {
    log_softmax(logits, tau).mapv(f64::exp)
}

/// Negative log-likelihood of `target` under `σ(logits / τ)`.
/// Gradient key: `"logits"`.
pub fn cross_entropy(
    logits: ArrayView1<'_, f64>,
    target: usize,
    tau: f64,
) -> Result<LossEvaluation> {
    check_temperature(tau)?;
    if target >= logits.len() {
        return Err(Error::out_of_range(
            "target",
            target,
            format!("[0, {})", logits.len()),
        ));
    }
    let logp = log_softmax(logits, tau);
    let mut grad = logp.mapv(f64::exp);
    grad[target] -= 1.0;
    grad.mapv_inplace(|g| g / tau);
    Ok(LossEvaluation::new(-logp[target]).with_vector("logits", grad))
}

/// `D_KL(σ(teacher/τ) ‖ σ(student/τ))`, differentiated with respect to the
/// student logits only. Gradient key: `"student"`.
pub fn kld(
    teacher_logits: ArrayView1<'_, f64>,
    student_logits: ArrayView1<'_, f64>,
    tau: f64,
) -> Result<LossEvaluation> {
    check_temperature(tau)?;
    check_same_len(teacher_logits.len(), student_logits.len())?;
    let log_t = log_softmax(teacher_logits, tau);
    let log_s = log_softmax(student_logits, tau);
    let p_t = log_t.mapv(f64::exp);
    let value: f64 = p_t
        .iter()
        .zip(log_t.iter().zip(log_s.iter()))
        .filter(|(&p, _)| p > 0.0)
        .map(|(&p, (&lt, &ls))| p * (lt - ls))
        .sum();
    let grad = (&log_s.mapv(f64::exp) - &p_t) / tau;
    Ok(LossEvaluation::new(value.max(0.0)).with_vector("student", grad))
}

/// `(1 − α)·CE(student, target) + α·τ²·D_KL(teacher ‖ student)`.
///
/// The hard-label term is evaluated at temperature 1; only the
/// distillation term is softened by `tau`. Gradient key: `"student"`.
pub fn kd_combined(
    student_logits: ArrayView1<'_, f64>,
    teacher_logits: ArrayView1<'_, f64>,
    target: usize,
    alpha: f64,
    tau: f64,
) -> Result<LossEvaluation> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::out_of_range("alpha", alpha, "[0, 1]"));
    }
    let ce = cross_entropy(student_logits, target, 1.0)?;
    let kl = kld(teacher_logits, student_logits, tau)?;
    let value = (1.0 - alpha) * ce.value + alpha * tau * tau * kl.value;
    let grad = &ce.vector("logits") * (1.0 - alpha) + &kl.vector("student") * (alpha * tau * tau);
    Ok(LossEvaluation::new(value).with_vector("student", grad))
}
