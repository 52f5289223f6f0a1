use ndarray::{Array2, ArrayView2, Axis};

use super::{check_same_len, hinge, LossEvaluation};
use crate::error::{Error, Result};

/// Gram-matrix kernel for alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Kernel {
    /// `K = Z Zᵀ`, uncentered.
    #[default]
    Linear,
    /// `K_ab = exp(−‖z_a − z_b‖² / 2S²)` where `S²` is the sample variance
    /// (denominator n − 1) of the Euclidean distances over all row pairs;
    /// the Gram matrix is then double-centered. Needs at least 3 rows.
    Rbf,
}

impl Kernel {
    pub fn name(self) -> &'static str {
        match self {
            Kernel::Linear => "linear",
            Kernel::Rbf => "rbf",
        }
    }
}

/// `H K H` with `H = I − 11ᵀ/M`.
fn double_center(k: &Array2<f64>) -> Array2<f64> {
    let m = k.nrows() as f64;
    let row = k.sum_axis(Axis(1)) / m;
    let col = k.sum_axis(Axis(0)) / m;
    let all = row.sum() / m;
    Array2::from_shape_fn(k.dim(), |(a, b)| k[[a, b]] - row[a] - col[b] + all)
}

struct RbfCache {
    raw: Array2<f64>,
    sq_dist: Array2<f64>,
    dist: Array2<f64>,
    mean: f64,
    s2: f64,
    pairs: usize,
}

struct Gram {
    k: Array2<f64>,
    rbf: Option<RbfCache>,
}

impl Gram {
    fn new(z: ArrayView2<'_, f64>, kernel: Kernel) -> Result<Self> {
        match kernel {
            Kernel::Linear => Ok(Self {
                k: z.dot(&z.t()),
                rbf: None,
            }),
            Kernel::Rbf => {
                let m = z.nrows();
                let mut sq_dist = Array2::zeros((m, m));
                let mut dist = Array2::zeros((m, m));
                let mut ds = Vec::with_capacity(m * (m - 1) / 2);
                for a in 0..m {
                    for b in a + 1..m {
                        let diff = &z.row(a) - &z.row(b);
                        let sq = diff.dot(&diff);
                        let d = sq.sqrt();
                        sq_dist[[a, b]] = sq;
                        sq_dist[[b, a]] = sq;
                        dist[[a, b]] = d;
                        dist[[b, a]] = d;
                        ds.push(d);
                    }
                }
                let pairs = ds.len();
                let mean = ds.iter().sum::<f64>() / pairs as f64;
                let s2 = ds.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (pairs - 1) as f64;
                if !(s2 > 1e-12 * mean * mean) {
                    return Err(Error::Numerical(
                        "rbf bandwidth is zero: all pairwise distances are equal".into(),
                    ));
                }
                let raw = sq_dist.mapv(|sq| (-sq / (2.0 * s2)).exp());
                Ok(Self {
                    k: double_center(&raw),
                    rbf: Some(RbfCache {
                        raw,
                        sq_dist,
                        dist,
                        mean,
                        s2,
                        pairs,
                    }),
                })
            }
        }
    }

    /// Pulls a gradient with respect to the (centered) Gram matrix back to
    /// the rows of `z`.
    fn backward(&self, z: ArrayView2<'_, f64>, g: &Array2<f64>) -> Array2<f64> {
        let Some(c) = &self.rbf else {
            return (g + &g.t()).dot(&z);
        };
        let m = z.nrows();
        let gamma = double_center(g);
        let w = &gamma * &c.raw;
        let bandwidth = (&w * &c.sq_dist).sum() / (2.0 * c.s2 * c.s2);
        let mut dz = Array2::zeros(z.dim());
        for a in 0..m {
            for b in a + 1..m {
                let d = c.dist[[a, b]];
                let mut gd = -(w[[a, b]] + w[[b, a]]) / (2.0 * c.s2);
                // Kink of the Euclidean distance at coincident rows: subgradient 0.
                if d > 0.0 {
                    gd += bandwidth * (d - c.mean) / ((c.pairs - 1) as f64 * d);
                }
                let diff = &z.row(a) - &z.row(b);
                dz.row_mut(a).scaled_add(2.0 * gd, &diff);
                dz.row_mut(b).scaled_add(-2.0 * gd, &diff);
            }
        }
        dz
    }
}

/// Kernel alignment `⟨K_i, K_j⟩_F / (‖K_i‖_F ‖K_j‖_F)` between two row sets
/// of equal size. Gradient keys: `"z_i"`, `"z_j"`.
pub fn centered_alignment(
    z_i: ArrayView2<'_, f64>,
    z_j: ArrayView2<'_, f64>,
    kernel: Kernel,
) -> Result<LossEvaluation> {
    check_same_len(z_i.nrows(), z_j.nrows())?;
    let min_rows = if kernel == Kernel::Rbf { 3 } else { 2 };
    if z_i.nrows() < min_rows {
        return Err(Error::out_of_range(
            "alignment row count",
            z_i.nrows(),
            format!(">= {min_rows}"),
        ));
    }
    let gi = Gram::new(z_i, kernel)?;
    let gj = Gram::new(z_j, kernel)?;
    let ni = gi.k.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nj = gj.k.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(ni > 0.0 && nj > 0.0) {
        return Err(Error::Numerical("zero Gram matrix norm".into()));
    }
    let ca = (&gi.k * &gj.k).sum() / (ni * nj);
    let d_ki = &gj.k / (ni * nj) - &gi.k * (ca / (ni * ni));
    let d_kj = &gi.k / (ni * nj) - &gj.k * (ca / (nj * nj));
    Ok(LossEvaluation::new(ca)
        .with_matrix("z_i", gi.backward(z_i, &d_ki))
        .with_matrix("z_j", gj.backward(z_j, &d_kj)))
}

/// Triplet alignment loss:
///
/// ```text
/// l+ = A(zS+, zS*) + A(zS*, zT*)
/// l- = A(zS-, zS*) + A(zS-, zT*)
/// l  = max(0, ζ·l+ − (1 − ζ)·l- + m)
/// ```
///
/// Gradient keys: `"student_anchor"`, `"student_positive"`,
/// `"student_negative"`, `"teacher_anchor"`.
pub fn triplet_cka_loss(
    student_anchor: ArrayView2<'_, f64>,
    student_positive: ArrayView2<'_, f64>,
    student_negative: ArrayView2<'_, f64>,
    teacher_anchor: ArrayView2<'_, f64>,
    zeta: f64,
    margin: f64,
    kernel: Kernel,
) -> Result<LossEvaluation> {
    if !(0.0..=1.0).contains(&zeta) {
        return Err(Error::out_of_range("zeta", zeta, "[0, 1]"));
    }
    if !(margin >= 0.0) {
        return Err(Error::out_of_range("margin", margin, "[0, inf)"));
    }
    let pos_a = centered_alignment(student_positive, student_anchor, kernel)?;
    let pos_b = centered_alignment(student_anchor, teacher_anchor, kernel)?;
    let neg_a = centered_alignment(student_negative, student_anchor, kernel)?;
    let neg_b = centered_alignment(student_negative, teacher_anchor, kernel)?;
    let pos = pos_a.value + pos_b.value;
    let neg = neg_a.value + neg_b.value;
    let (value, slope) = hinge(zeta * pos - (1.0 - zeta) * neg + margin);
    let wp = zeta * slope;
    let wn = -(1.0 - zeta) * slope;
    let g_sa = &pos_a.matrix("z_j") * wp + &pos_b.matrix("z_i") * wp + &neg_a.matrix("z_j") * wn;
    let g_sp = &pos_a.matrix("z_i") * wp;
    let g_sn = (&neg_a.matrix("z_i") + &neg_b.matrix("z_i")) * wn;
    let g_ta = &pos_b.matrix("z_j") * wp + &neg_b.matrix("z_j") * wn;
    Ok(LossEvaluation::new(value)
        .with_matrix("student_anchor", g_sa)
        .with_matrix("student_positive", g_sp)
        .with_matrix("student_negative", g_sn)
        .with_matrix("teacher_anchor", g_ta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::gradcheck::check_gradient;
    use crate::rng::stream_rng;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random(rng: &mut impl Rng, m: usize, d: usize) -> Array2<f64> {
        Array2::from_shape_fn((m, d), |_| rng.sample::<f64, _>(StandardNormal))
    }

    /// Orthogonal matrix by Gram–Schmidt on a Gaussian matrix.
    fn random_orthogonal(rng: &mut impl Rng, d: usize) -> Array2<f64> {
        let mut q = random(rng, d, d);
        for i in 0..d {
            for j in 0..i {
                let proj = q.row(i).dot(&q.row(j));
                let rj = q.row(j).to_owned();
                q.row_mut(i).scaled_add(-proj, &rj);
            }
            let n = q.row(i).dot(&q.row(i)).sqrt();
            q.row_mut(i).mapv_inplace(|x| x / n);
        }
        q
    }

    #[test]
    fn linear_invariances() {
        let mut rng = stream_rng(21, 0);
        let z = random(&mut rng, 6, 4);
        let ca = |a: &Array2<f64>, b: &Array2<f64>, k| {
            centered_alignment(a.view(), b.view(), k).unwrap().value
        };
        assert_abs_diff_eq!(ca(&z, &z, Kernel::Linear), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ca(&z, &(&z * 3.5), Kernel::Linear), 1.0, epsilon = 1e-12);
        let r = random_orthogonal(&mut rng, 4);
        assert_abs_diff_eq!(ca(&z, &z.dot(&r), Kernel::Linear), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(ca(&z, &z.dot(&r), Kernel::Rbf), 1.0, epsilon = 1e-9);
        let other = random(&mut rng, 6, 4);
        let v = ca(&z, &other, Kernel::Linear);
        assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn degenerate_inputs() {
        let z = Array2::<f64>::zeros((3, 2));
        let y = array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        assert!(centered_alignment(z.view(), y.view(), Kernel::Linear).is_err());
        assert!(
            centered_alignment(y.view(), y.slice(ndarray::s![..2, ..]), Kernel::Linear).is_err()
        );
        let equilateral = array![[0.0, 0.0], [1.0, 0.0], [0.5, 0.75f64.sqrt()]];
        assert!(centered_alignment(equilateral.view(), y.view(), Kernel::Rbf).is_err());
    }

    #[test]
    fn alignment_gradients() {
        let mut rng = stream_rng(22, 0);
        let (m, d) = (5, 3);
        for kernel in [Kernel::Linear, Kernel::Rbf] {
            for _ in 0..10 {
                let x: Vec<f64> = (0..2 * m * d)
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let f = |x: &[f64]| {
                    let a = ArrayView2::from_shape((m, d), &x[..m * d]).unwrap();
                    let b = ArrayView2::from_shape((m, d), &x[m * d..]).unwrap();
                    centered_alignment(a, b, kernel).unwrap()
                };
                let e = f(&x);
                let mut g: Vec<f64> = e.matrix("z_i").iter().copied().collect();
                g.extend(e.matrix("z_j").iter());
                let r = check_gradient(|x| f(x).value, &x, &g, 1e-5, 1e-6);
                assert!(r.passed, "{kernel:?} {r:?}");
            }
        }
    }

    #[test]
    fn triplet_zero_when_positive_terms_vanish() {
        let sa = array![[1.0, 0.0], [0.0, 0.0]];
        let sp = array![[0.0, 0.0], [0.0, 1.0]];
        let ta = sp.clone();
        let sn = array![[1.0, 0.0], [1.0, 0.0]];
        let e = triplet_cka_loss(
            sa.view(),
            sp.view(),
            sn.view(),
            ta.view(),
            1.0,
            0.0,
            Kernel::Linear,
        )
        .unwrap();
        assert_eq!(e.value, 0.0);
        for name in [
            "student_anchor",
            "student_positive",
            "student_negative",
            "teacher_anchor",
        ] {
            assert!(e.matrix(name).iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn triplet_gradient_when_active() {
        let mut rng = stream_rng(23, 0);
        let (m, d) = (4, 3);
        for kernel in [Kernel::Linear, Kernel::Rbf] {
            for _ in 0..10 {
                let x: Vec<f64> = (0..4 * m * d)
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let f = |x: &[f64]| {
                    let v = |i: usize| {
                        ArrayView2::from_shape((m, d), &x[i * m * d..(i + 1) * m * d]).unwrap()
                    };
                    triplet_cka_loss(v(0), v(1), v(2), v(3), 0.4, 2.0, kernel).unwrap()
                };
                let e = f(&x);
                assert!(e.value > 0.0);
                let mut g = Vec::new();
                for name in [
                    "student_anchor",
                    "student_positive",
                    "student_negative",
                    "teacher_anchor",
                ] {
                    g.extend(e.matrix(name).iter());
                }
                let r = check_gradient(|x| f(x).value, &x, &g, 1e-5, 1e-6);
                assert!(r.passed, "{kernel:?} {r:?}");
            }
        }
    }
}
