use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use super::{check_same_len, hinge, LossEvaluation};
use crate::error::{Error, Result};

fn centered(u: ArrayView1<'_, f64>) -> (Array1<f64>, f64) {
    let mean = u.sum() / u.len() as f64;
    let c = u.mapv(|x| x - mean);
    let norm = c.dot(&c).sqrt();
    (c, norm)
}

/// Pearson correlation `ρ(u, v)` with gradient keys `"u"` and `"v"`.
pub fn pearson(u: ArrayView1<'_, f64>, v: ArrayView1<'_, f64>) -> Result<LossEvaluation> {
    check_same_len(u.len(), v.len())?;
    if u.len() < 2 {
        return Err(Error::out_of_range("pearson input length", u.len(), ">= 2"));
    }
    let (cu, nu) = centered(u);
    let (cv, nv) = centered(v);
    if !(nu > 0.0 && nv > 0.0) {
        return Err(Error::DegenerateVector(
            "zero-variance input to pearson".into(),
        ));
    }
    let rho = (cu.dot(&cv) / (nu * nv)).clamp(-1.0, 1.0);
    let gu = &cv / (nu * nv) - &cu * (rho / (nu * nu));
    let gv = &cu / (nu * nv) - &cv * (rho / (nv * nv));
    Ok(LossEvaluation::new(rho)
        .with_vector("u", gu)
        .with_vector("v", gv))
}

/// Triplet correlation loss over a set of negatives (rows of the `*_minus`
/// matrices, paired row by row between student and teacher):
///
/// ```text
/// l+ = mean_i ρ(zS-_i, zT-_i) + ρ(zS+, zT+)
/// l- = mean_i ρ(zS-_i, zS+)  + mean_i ρ(zS-_i, zT+)
/// l  = max(0, ζ·l+ − (1 − ζ)·l- + m)
/// ```
///
/// Gradient keys: `"student_minus"`, `"student_plus"`, `"teacher_minus"`,
/// `"teacher_plus"`.
pub fn pearson_triplet_loss(
    student_minus: ArrayView2<'_, f64>,
    student_plus: ArrayView1<'_, f64>,
    teacher_minus: ArrayView2<'_, f64>,
    teacher_plus: ArrayView1<'_, f64>,
    zeta: f64,
    margin: f64,
) -> Result<LossEvaluation> {
    if !(0.0..=1.0).contains(&zeta) {
        return Err(Error::out_of_range("zeta", zeta, "[0, 1]"));
    }
    if !(margin >= 0.0) {
        return Err(Error::out_of_range("margin", margin, "[0, inf)"));
    }
    let n = student_minus.nrows();
    if n == 0 {
        return Err(Error::Empty("pearson triplet negatives"));
    }
    check_same_len(n, teacher_minus.nrows())?;
    let d = student_plus.len();
    for len in [
        student_minus.ncols(),
        teacher_minus.ncols(),
        teacher_plus.len(),
    ] {
        check_same_len(d, len)?;
    }

    let inv_n = 1.0 / n as f64;
    let mut g_sm = Array2::zeros((n, d));
    let mut g_tm = Array2::zeros((n, d));
    let mut g_sp = Array1::zeros(d);
    let mut g_tp = Array1::zeros(d);

    let pp = pearson(student_plus, teacher_plus)?;
    let mut pos = pp.value;
    let mut neg = 0.0;
    let w_pos = zeta;
    let w_neg = -(1.0 - zeta);
    g_sp.scaled_add(w_pos, &pp.vector("u"));
    g_tp.scaled_add(w_pos, &pp.vector("v"));
    for i in 0..n {
        let sm = student_minus.row(i);
        let a = pearson(sm, teacher_minus.row(i))?;
        let b = pearson(sm, student_plus)?;
        let c = pearson(sm, teacher_plus)?;
        pos += inv_n * a.value;
        neg += inv_n * (b.value + c.value);
        let mut row = g_sm.row_mut(i);
        row.scaled_add(w_pos * inv_n, &a.vector("u"));
        row.scaled_add(w_neg * inv_n, &b.vector("u"));
        row.scaled_add(w_neg * inv_n, &c.vector("u"));
        g_tm.row_mut(i).scaled_add(w_pos * inv_n, &a.vector("v"));
        g_sp.scaled_add(w_neg * inv_n, &b.vector("v"));
        g_tp.scaled_add(w_neg * inv_n, &c.vector("v"));
    }
    let (value, slope) = hinge(zeta * pos - (1.0 - zeta) * neg + margin);
    Ok(LossEvaluation::new(value)
        .with_matrix("student_minus", g_sm * slope)
        .with_vector("student_plus", g_sp * slope)
        .with_matrix("teacher_minus", g_tm * slope)
        .with_vector("teacher_plus", g_tp * slope))
}
