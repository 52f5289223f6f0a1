//! Mutual-information lower bounds with alignment weights.

use ndarray::ArrayView1;

use crate::embedding::{cosine_similarity, EmbeddingMatrix};
use crate::error::{Error, Result};

/// Top-k and remaining negatives of one anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSets {
    pub anchor: usize,
    pub topk: Vec<usize>,
    pub rest: Vec<usize>,
}

/// Per-anchor alignment weights and the resulting bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentReport {
    /// Mean alignment between each anchor and its top-k negatives.
    pub a_topk: Vec<f64>,
    /// Mean alignment between each anchor and its remaining negatives.
    pub a_rest: Vec<f64>,
    /// `Ω_x = 1 − a_topk / (a_topk + a_rest)`.
    pub omega_per_anchor: Vec<f64>,
    pub omega_total: f64,
    /// `ln M − loss` with `M` the number of anchors.
    pub bound_uniform: f64,
    /// `ln(2Ω) − loss`.
    pub bound_scns: f64,
}

/// `(cos(u, v) + 1) / 2`.
pub fn cosine_alignment(u: ArrayView1<'_, f64>, v: ArrayView1<'_, f64>) -> Result<f64> {
    Ok((cosine_similarity(u, v)? + 1.0) / 2.0)
}

/// `ln M − loss`.
pub fn mi_bound_uniform(loss: f64, m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::out_of_range("M", m, ">= 1"));
    }
    Ok((m as f64).ln() - loss)
}

pub fn alignment_report<F>(
    reps: &EmbeddingMatrix,
    anchors: &[AnchorSets],
    alignment: F,
    loss: f64,
) -> Result<AlignmentReport>
where
    F: Fn(ArrayView1<'_, f64>, ArrayView1<'_, f64>) -> Result<f64>,
{
    if anchors.is_empty() {
        return Err(Error::Empty("anchor list"));
    }
    let n = reps.rows();
    let mean_alignment = |anchor: usize, set: &[usize], what: &'static str| -> Result<f64> {
        if set.is_empty() {
            return Err(Error::Empty(what));
        }
        let mut total = 0.0;
        for &j in set {
            if j >= n {
                return Err(Error::out_of_range("sample index", j, format!("[0, {n})")));
            }
            let a = alignment(reps.row(anchor), reps.row(j))?;
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::out_of_range("alignment value", a, "[0, 1]"));
            }
            total += a;
        }
        Ok(total / set.len() as f64)
    };

    let mut report = AlignmentReport {
        a_topk: Vec::with_capacity(anchors.len()),
        a_rest: Vec::with_capacity(anchors.len()),
        omega_per_anchor: Vec::with_capacity(anchors.len()),
        omega_total: 0.0,
        bound_uniform: 0.0,
        bound_scns: 0.0,
    };
    for sets in anchors {
        if sets.anchor >= n {
            return Err(Error::out_of_range(
                "anchor",
                sets.anchor,
                format!("[0, {n})"),
            ));
        }
        if sets
            .topk
            .iter()
            .any(|i| sets.rest.contains(i) || *i == sets.anchor)
            || sets.rest.contains(&sets.anchor)
        {
            return Err(Error::Sampling(format!(
                "top-k and remaining sets of anchor {} must be disjoint and exclude it",
                sets.anchor
            )));
        }
        let ak = mean_alignment(sets.anchor, &sets.topk, "top-k negative set")?;
        let ar = mean_alignment(sets.anchor, &sets.rest, "remaining negative set")?;
        if ak + ar <= 0.0 {
            return Err(Error::Numerical(format!(
                "anchor {} has zero total alignment",
                sets.anchor
            )));
        }
        let omega = 1.0 - ak / (ak + ar);
        report.a_topk.push(ak);
        report.a_rest.push(ar);
        report.omega_per_anchor.push(omega);
        report.omega_total += omega;
    }
    report.bound_uniform = mi_bound_uniform(loss, anchors.len())?;
    report.bound_scns = (2.0 * report.omega_total).ln() - loss;
    Ok(report)
}
