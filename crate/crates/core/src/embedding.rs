//! Dense embedding primitives: cosine similarity, row normalization,
//! sharpness-controlled softmax and exact top-k neighbor extraction.

use std::cmp::Ordering;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// A dense `rows × dim` matrix of finite reals, one entity per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    data: Array2<f64>,
}

impl EmbeddingMatrix {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.nrows() == 0 {
            return Err(Error::Empty("embedding rows"));
        }
        if data.ncols() == 0 {
            return Err(Error::Empty("embedding dimensions"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding matrix"));
        }
        Ok(Self { data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: bad.len(),
            });
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let data =
            Array2::from_shape_vec((n, d), flat).map_err(|_| Error::Empty("embedding rows"))?;
        Self::new(data)
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.data.row(i)
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.data
    }
}

/// Per-entity top-k neighbors: indices, similarity scores (sorted
/// non-increasing) and softmax sampling probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct TopKNeighborTable {
    k: usize,
    indices: Array2<usize>,
    scores: Array2<f64>,
    probs: Array2<f64>,
}

impl TopKNeighborTable {
    /// Assembles a table from per-row `(neighbor, score)` lists that are
    /// already sorted best-first.
    pub(crate) fn from_sorted_rows(
        rows: Vec<Vec<(usize, f64)>>,
        k: usize,
        sharpness: f64,
    ) -> Result<Self> {
        let n = rows.len();
        let mut indices = Array2::zeros((n, k));
        let mut scores = Array2::zeros((n, k));
        let mut probs = Array2::zeros((n, k));
        for (i, row) in rows.iter().enumerate() {
            debug_assert_eq!(row.len(), k);
            let s: Vec<f64> = row.iter().map(|&(_, s)| s).collect();
            let p = temperature_softmax(ArrayView1::from(&s), sharpness)?;
            for (r, &(j, sc)) in row.iter().enumerate() {
                indices[[i, r]] = j;
                scores[[i, r]] = sc;
                probs[[i, r]] = p[r];
            }
        }
        Ok(Self {
            k,
            indices,
            scores,
            probs,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn rows(&self) -> usize {
        self.indices.nrows()
    }

    pub fn indices(&self, row: usize) -> ArrayView1<'_, usize> {
        self.indices.row(row)
    }

    pub fn scores(&self, row: usize) -> ArrayView1<'_, f64> {
        self.scores.row(row)
    }

    pub fn probs(&self, row: usize) -> ArrayView1<'_, f64> {
        self.probs.row(row)
    }
}

fn dot(u: ArrayView1<'_, f64>, v: ArrayView1<'_, f64>) -> f64 {
    u.dot(&v)
}

/// `u·v / (‖u‖‖v‖)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(u: ArrayView1<'_, f64>, v: ArrayView1<'_, f64>) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            actual: v.len(),
        });
    }
    let nu = dot(u, u).sqrt();
    let nv = dot(v, v).sqrt();
    if nu == 0.0 {
        return Err(Error::DegenerateVector(
            "first argument has zero norm".into(),
        ));
    }
    if nv == 0.0 {
        return Err(Error::DegenerateVector(
            "second argument has zero norm".into(),
        ));
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

pub fn l2_normalize_rows(e: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    let mut out = e.data.clone();
    for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        let norm = row.dot(&row).sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroNormRow { row: i });
        }
        row.mapv_inplace(|x| x / norm);
    }
    Ok(EmbeddingMatrix { data: out })
}

/// All-pairs cosine similarity. The result is exactly symmetric and its
/// diagonal is exactly 1.
pub fn pairwise_similarity(e: &EmbeddingMatrix) -> Result<Array2<f64>> {
    let unit = l2_normalize_rows(e)?;
    let n = unit.rows();
    let mut s = unit.data.dot(&unit.data.t());
    for i in 0..n {
        s[[i, i]] = 1.0;
        for j in (i + 1)..n {
            let v = s[[i, j]].clamp(-1.0, 1.0);
            s[[i, j]] = v;
            s[[j, i]] = v;
        }
    }
    Ok(s)
}

/// Softmax of `sharpness · scores`, stabilized by subtracting the maximum.
///
/// Larger sharpness concentrates mass on the most similar entries. A
/// sharpness of 5 is the setting used for class-level label similarities.
pub fn temperature_softmax(scores: ArrayView1<'_, f64>, sharpness: f64) -> Result<Array1<f64>> {
    if scores.is_empty() {
        return Err(Error::Empty("softmax scores"));
    }
    if !(sharpness > 0.0 && sharpness.is_finite()) {
        return Err(Error::out_of_range("sharpness", sharpness, "(0, inf)"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("softmax scores"));
    }
    let m = scores
        .iter()
        .map(|&s| sharpness * s)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out = scores.mapv(|s| (sharpness * s - m).exp());
    let z = out.sum();
    out.mapv_inplace(|v| v / z);
    Ok(out)
}

/// Total order used for neighbor ranking: higher score first, then lower
/// index.
pub(crate) fn rank_order(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// The `k` best `(index, score)` candidates, sorted best-first.
pub(crate) fn select_top_k(mut candidates: Vec<(usize, f64)>, k: usize) -> Vec<(usize, f64)> {
    if k < candidates.len() {
        candidates.select_nth_unstable_by(k - 1, rank_order);
        candidates.truncate(k);
    }
    candidates.sort_unstable_by(rank_order);
    candidates
}

/// Row-wise top-k over the off-diagonal entries of a square similarity
/// matrix.
pub fn topk_neighbors(
    similarity: ArrayView2<'_, f64>,
    k: usize,
    sharpness: f64,
) -> Result<TopKNeighborTable> {
    let n = similarity.nrows();
    if similarity.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: similarity.ncols(),
        });
    }
    if k < 1 || k + 1 > n {
        return Err(Error::out_of_range(
            "k",
            k,
            format!("[1, {}]", n.saturating_sub(1)),
        ));
    }
    let rows: Vec<Vec<(usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let cands = similarity
                .row(i)
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(j, &s)| (j, s))
                .collect();
            select_top_k(cands, k)
        })
        .collect();
    TopKNeighborTable::from_sorted_rows(rows, k, sharpness)
}
