use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use super::{check_same_len, LossEvaluation};
use crate::error::{Error, Result};

/// InfoNCE over one positive and `M` negatives (rows of `negatives`):
///
/// `−log exp(a·p) / (exp(a·p) + Σ_m exp(a·n_m))`
///
/// Gradient keys: `"anchor"`, `"positive"`, `"negatives"` (M×d).
pub fn infonce(
    anchor: ArrayView1<'_, f64>,
    positive: ArrayView1<'_, f64>,
    negatives: ArrayView2<'_, f64>,
) -> Result<LossEvaluation> {
    if negatives.nrows() == 0 {
        return Err(Error::Empty("InfoNCE negatives"));
    }
    let d = anchor.len();
    check_same_len(d, positive.len())?;
    check_same_len(d, negatives.ncols())?;

    let m = negatives.nrows();
    let mut scores = Array1::zeros(m + 1);
    scores[0] = anchor.dot(&positive);
    for (k, neg) in negatives.rows().into_iter().enumerate() {
        scores[k + 1] = anchor.dot(&neg);
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln() + max;
    let value = lse - scores[0];
    let probs = scores.mapv(|s| (s - lse).exp());

    let mut g_anchor = &positive * (probs[0] - 1.0);
    let mut g_neg = Array2::zeros((m, d));
    for (k, neg) in negatives.rows().into_iter().enumerate() {
        g_anchor.scaled_add(probs[k + 1], &neg);
        g_neg.row_mut(k).assign(&(&anchor * probs[k + 1]));
    }
    let g_pos = &anchor * (probs[0] - 1.0);
    Ok(LossEvaluation::new(value)
        .with_vector("anchor", g_anchor)
        .with_vector("positive", g_pos)
        .with_matrix("negatives", g_neg))
}
