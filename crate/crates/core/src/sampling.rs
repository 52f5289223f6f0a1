//! Negative-sampling distributions: uniform over other-class samples,
//! class-level SCNS (neighbor classes ranked by label-embedding similarity)
//! and instance-level SCNS (neighbor samples ranked by teacher
//! representation similarity).

use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;

use crate::embedding::{
    l2_normalize_rows, pairwise_similarity, select_top_k, topk_neighbors, EmbeddingMatrix,
    TopKNeighborTable,
};
use crate::error::{Error, Result};
use crate::format::fmt9;
use crate::stats::{chi_square_gof, ChiSquareReport};

/// Labels of a dataset together with the per-class member lists.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetIndex {
    labels: Vec<usize>,
    class_members: Vec<Vec<usize>>,
}

impl DatasetIndex {
    /// Builds the index with `max(label) + 1` classes.
    pub fn new(labels: Vec<usize>) -> Result<Self> {
        let classes = labels.iter().max().map_or(0, |m| m + 1);
        Self::with_classes(labels, classes)
    }

    /// Builds the index over a fixed class count; classes without samples
    /// get an empty member list.
    pub fn with_classes(labels: Vec<usize>, classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Empty("dataset labels"));
        }
        let mut class_members = vec![Vec::new(); classes];
        for (i, &y) in labels.iter().enumerate() {
            if y >= classes {
                return Err(Error::out_of_range("label", y, format!("[0, {classes})")));
            }
            class_members[y].push(i);
        }
        Ok(Self {
            labels,
            class_members,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_members.len()
    }

    pub fn label(&self, sample: usize) -> usize {
        self.labels[sample]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn members(&self, class: usize) -> &[usize] {
        &self.class_members[class]
    }

    fn check_sample(&self, sample: usize) -> Result<()> {
        if sample >= self.len() {
            return Err(Error::out_of_range(
                "sample index",
                sample,
                format!("[0, {})", self.len()),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SamplerKind {
    Uniform,
    ClassScns,
    InstanceScns,
}

impl SamplerKind {
    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::Uniform => "uniform",
            SamplerKind::ClassScns => "class",
            SamplerKind::InstanceScns => "instance",
        }
    }
}

/// Where a drawn negative came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    Uniform,
    /// Neighbor class `class`, at position `rank` of the anchor class row.
    Class {
        class: usize,
        rank: usize,
    },
    /// Neighbor sample at position `rank` of the anchor's row.
    Instance {
        rank: usize,
    },
}

/// An anchor-conditioned negative-sampling distribution.
#[derive(Debug, Clone)]
pub struct NegativeSamplingDistribution {
    kind: SamplerKind,
    table: Option<TopKNeighborTable>,
    index: DatasetIndex,
    /// Per-row sampling weights actually used for draws. For class SCNS
    /// these are the table probabilities with empty classes removed.
    row_weights: Vec<Option<(Vec<usize>, WeightedIndex<f64>, Vec<f64>)>>,
    warnings: Vec<String>,
}

impl NegativeSamplingDistribution {
    pub fn uniform(index: DatasetIndex) -> Self {
        Self {
            kind: SamplerKind::Uniform,
            table: None,
            index,
            row_weights: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn kind(&self) -> SamplerKind {
        self.kind
    }

    pub fn table(&self) -> Option<&TopKNeighborTable> {
        self.table.as_ref()
    }

    pub fn index(&self) -> &DatasetIndex {
        &self.index
    }

    /// Non-fatal issues found while building (e.g. empty neighbor classes).
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    fn table_row_for(&self, anchor: usize) -> usize {
        match self.kind {
            SamplerKind::ClassScns => self.index.label(anchor),
            _ => anchor,
        }
    }

    fn no_negatives(&self, anchor: usize) -> Error {
        Error::Sampling(format!(
            "anchor {anchor} (class {}) has no valid negatives",
            self.index.label(anchor)
        ))
    }

    /// Exact probability of drawing each sample as a negative for `anchor`,
    /// as `(sample, probability)` pairs sorted by sample index.
    pub fn marginal(&self, anchor: usize) -> Result<Vec<(usize, f64)>> {
        self.index.check_sample(anchor)?;
        let y = self.index.label(anchor);
        let mut out: Vec<(usize, f64)> = match self.kind {
            SamplerKind::Uniform => {
                let others = self.index.len() - self.index.members(y).len();
                if others == 0 {
                    return Err(self.no_negatives(anchor));
                }
                let p = 1.0 / others as f64;
                (0..self.index.len())
                    .filter(|&i| self.index.label(i) != y)
                    .map(|i| (i, p))
                    .collect()
            }
            SamplerKind::ClassScns => {
                let (classes, _, probs) = self.row_weights[y]
                    .as_ref()
                    .ok_or_else(|| self.no_negatives(anchor))?;
                classes
                    .iter()
                    .zip(probs)
                    .flat_map(|(&c, &p)| {
                        let members = self.index.members(c);
                        let share = p / members.len() as f64;
                        members.iter().map(move |&i| (i, share))
                    })
                    .collect()
            }
            SamplerKind::InstanceScns => {
                let (samples, _, probs) = self.row_weights[anchor]
                    .as_ref()
                    .ok_or_else(|| self.no_negatives(anchor))?;
                samples.iter().copied().zip(probs.iter().copied()).collect()
            }
        };
        out.sort_by_key(|&(i, _)| i);
        Ok(out)
    }

    /// One negative for `anchor` with its provenance.
    pub fn draw_one<R: Rng + ?Sized>(
        &self,
        anchor: usize,
        rng: &mut R,
    ) -> Result<(usize, Provenance)> {
        self.index.check_sample(anchor)?;
        let y = self.index.label(anchor);
        match self.kind {
            SamplerKind::Uniform => {
                if self.index.members(y).len() == self.index.len() {
                    return Err(self.no_negatives(anchor));
                }
                // Rejection keeps the draw exactly uniform over other-class
                // samples without materializing the candidate list.
                loop {
                    let i = rng.random_range(0..self.index.len());
                    if self.index.label(i) != y {
                        return Ok((i, Provenance::Uniform));
                    }
                }
            }
            SamplerKind::ClassScns | SamplerKind::InstanceScns => {
                let row = self.table_row_for(anchor);
                let (targets, weights, _) = self.row_weights[row]
                    .as_ref()
                    .ok_or_else(|| self.no_negatives(anchor))?;
                let slot = weights.sample(rng);
                let target = targets[slot];
                if self.kind == SamplerKind::InstanceScns {
                    return Ok((target, Provenance::Instance { rank: slot }));
                }
                let table = self.table.as_ref().expect("class table");
                let rank = table
                    .indices(row)
                    .iter()
                    .position(|&c| c == target)
                    .expect("effective class comes from the table row");
                let members = self.index.members(target);
                let i = members[rng.random_range(0..members.len())];
                Ok((
                    i,
                    Provenance::Class {
                        class: target,
                        rank,
                    },
                ))
            }
        }
    }

    /// Writes the neighbor table as CSV with columns
    /// `row_entity,rank,neighbor_entity,score,prob`.
    /// The uniform distribution has no table and writes only the header.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "row_entity,rank,neighbor_entity,score,prob")?;
        if let Some(table) = &self.table {
            for row in 0..table.rows() {
                for r in 0..table.k() {
                    writeln!(
                        out,
                        "{},{},{},{},{}",
                        row,
                        r,
                        table.indices(row)[r],
                        fmt9(table.scores(row)[r]),
                        fmt9(table.probs(row)[r])
                    )?;
                }
            }
        }
        Ok(())
    }
}

/// Class-level SCNS: for each class the `k` most similar other classes by
/// label-embedding cosine, weighted by a sharpness softmax. A negative is
/// drawn by picking a neighbor class from that row, then a member of that
/// class uniformly.
pub fn build_class_scns(
    label_embeddings: &EmbeddingMatrix,
    index: DatasetIndex,
    k: usize,
    sharpness: f64,
) -> Result<NegativeSamplingDistribution> {
    let classes = index.num_classes();
    if label_embeddings.rows() != classes {
        return Err(Error::DimensionMismatch {
            expected: classes,
            actual: label_embeddings.rows(),
        });
    }
    let sim = pairwise_similarity(label_embeddings)?;
    let table = topk_neighbors(sim.view(), k, sharpness)?;
    let mut warnings = Vec::new();
    let mut row_weights = Vec::with_capacity(classes);
    for w in 0..classes {
        let mut kept = Vec::new();
        let mut probs = Vec::new();
        for (r, &c) in table.indices(w).iter().enumerate() {
            if index.members(c).is_empty() {
                warnings.push(format!(
                    "class {w}: neighbor class {c} has no samples; its probability was redistributed"
                ));
            } else {
                kept.push(c);
                probs.push(table.probs(w)[r]);
            }
        }
        row_weights.push(weighted_row(kept, probs)?);
    }
    Ok(NegativeSamplingDistribution {
        kind: SamplerKind::ClassScns,
        table: Some(table),
        index,
        row_weights,
        warnings,
    })
}

/// Instance-level SCNS: for each sample the `k` most similar other-class
/// samples by cosine of the teacher representations.
pub fn build_instance_scns(
    teacher_reps: &EmbeddingMatrix,
    index: DatasetIndex,
    k: usize,
    sharpness: f64,
) -> Result<NegativeSamplingDistribution> {
    let n = index.len();
    if teacher_reps.rows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: teacher_reps.rows(),
        });
    }
    if k < 1 || k + 1 > n {
        return Err(Error::out_of_range(
            "k",
            k,
            format!("[1, {}]", n.saturating_sub(1)),
        ));
    }
    for i in 0..n {
        let available = n - index.members(index.label(i)).len();
        if available < k {
            return Err(Error::Sampling(format!(
                "sample {i} has only {available} other-class candidates for k = {k}"
            )));
        }
    }
    let unit = l2_normalize_rows(teacher_reps)?;
    let unit = unit.view();
    let labels = index.labels();
    let rows: Vec<Vec<(usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let anchor = unit.row(i);
            let cands = (0..n)
                .filter(|&j| labels[j] != labels[i])
                .map(|j| (j, anchor.dot(&unit.row(j)).clamp(-1.0, 1.0)))
                .collect();
            select_top_k(cands, k)
        })
        .collect();
    let table = TopKNeighborTable::from_sorted_rows(rows, k, sharpness)?;
    let row_weights = (0..n)
        .map(|i| weighted_row(table.indices(i).to_vec(), table.probs(i).to_vec()))
        .collect::<Result<Vec<_>>>()?;
    Ok(NegativeSamplingDistribution {
        kind: SamplerKind::InstanceScns,
        table: Some(table),
        index,
        row_weights,
        warnings: Vec::new(),
    })
}

type WeightedRow = Option<(Vec<usize>, WeightedIndex<f64>, Vec<f64>)>;

fn weighted_row(targets: Vec<usize>, probs: Vec<f64>) -> Result<WeightedRow> {
    let total: f64 = probs.iter().sum();
    if targets.is_empty() || total <= 0.0 {
        return Ok(None);
    }
    let probs: Vec<f64> = probs.iter().map(|p| p / total).collect();
    let weights = WeightedIndex::new(&probs)
        .map_err(|e| Error::Sampling(format!("invalid sampling weights: {e}")))?;
    Ok(Some((targets, weights, probs)))
}

/// `m` i.i.d. negatives (with replacement) for `anchor`.
pub fn draw_negatives<R: Rng + ?Sized>(
    dist: &NegativeSamplingDistribution,
    anchor: usize,
    m: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    Ok(draw_negatives_with_provenance(dist, anchor, m, rng)?
        .into_iter()
        .map(|(i, _)| i)
        .collect())
}

pub fn draw_negatives_with_provenance<R: Rng + ?Sized>(
    dist: &NegativeSamplingDistribution,
    anchor: usize,
    m: usize,
    rng: &mut R,
) -> Result<Vec<(usize, Provenance)>> {
    if m == 0 {
        return Err(Error::out_of_range("M", m, "[1, inf)"));
    }
    (0..m).map(|_| dist.draw_one(anchor, rng)).collect()
}

/// Anchor, same-class positive and `m` negatives.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveBatch {
    pub anchor: usize,
    pub positive: usize,
    pub negatives: Vec<usize>,
    pub provenance: Vec<Provenance>,
}

/// Draws the positive uniformly from the anchor's class (excluding the
/// anchor itself), then `m` negatives from `dist`.
pub fn compose_batch<R: Rng + ?Sized>(
    dist: &NegativeSamplingDistribution,
    anchor: usize,
    m: usize,
    rng: &mut R,
) -> Result<ContrastiveBatch> {
    let index = dist.index();
    index.check_sample(anchor)?;
    let members = index.members(index.label(anchor));
    if members.len() < 2 {
        return Err(Error::Sampling(format!(
            "anchor {anchor} is the only member of class {}; no positive exists",
            index.label(anchor)
        )));
    }
    let own = members
        .iter()
        .position(|&i| i == anchor)
        .expect("anchor belongs to its class");
    let mut slot = rng.random_range(0..members.len() - 1);
    if slot >= own {
        slot += 1;
    }
    let positive = members[slot];
    let (negatives, provenance) = draw_negatives_with_provenance(dist, anchor, m, rng)?
        .into_iter()
        .unzip();
    Ok(ContrastiveBatch {
        anchor,
        positive,
        negatives,
        provenance,
    })
}

/// Empirical check of a sampler against its declared marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerAudit {
    pub draws: u64,
    /// Draws that landed in the anchor's own class.
    pub same_class: u64,
    /// Chi-square statistics and degrees of freedom pooled over anchors.
    pub chi_square: ChiSquareReport,
}

impl SamplerAudit {
    pub fn passes(&self, significance: f64) -> bool {
        self.same_class == 0 && self.chi_square.passes(significance)
    }
}

/// Draws `draws_per_anchor` negatives for each anchor and tests the counts
/// against [`NegativeSamplingDistribution::marginal`].
pub fn audit_sampler<R: Rng + ?Sized>(
    dist: &NegativeSamplingDistribution,
    anchors: &[usize],
    draws_per_anchor: u64,
    rng: &mut R,
) -> Result<SamplerAudit> {
    if anchors.is_empty() {
        return Err(Error::Empty("audit anchors"));
    }
    let index = dist.index();
    let mut reports = Vec::with_capacity(anchors.len());
    let mut same_class = 0;
    for &anchor in anchors {
        let marginal = dist.marginal(anchor)?;
        let mut slot = vec![usize::MAX; index.len()];
        for (k, &(i, _)) in marginal.iter().enumerate() {
            slot[i] = k;
        }
        let mut counts = vec![0u64; marginal.len()];
        for _ in 0..draws_per_anchor {
            let (i, _) = dist.draw_one(anchor, rng)?;
            if index.label(i) == index.label(anchor) {
                same_class += 1;
            } else if slot[i] == usize::MAX {
                return Err(Error::Sampling(format!(
                    "anchor {anchor} drew sample {i} outside its declared support"
                )));
            } else {
                counts[slot[i]] += 1;
            }
        }
        let probs: Vec<f64> = marginal.iter().map(|&(_, p)| p).collect();
        if probs.len() >= 2 {
            reports.push(chi_square_gof(&counts, &probs)?);
        }
    }
    Ok(SamplerAudit {
        draws: draws_per_anchor * anchors.len() as u64,
        same_class,
        chi_square: ChiSquareReport::pooled(&reports)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array2};
    use rand_distr::StandardNormal;

    fn two_by_two() -> DatasetIndex {
        DatasetIndex::new(vec![0, 0, 1, 1]).unwrap()
    }

    #[test]
    fn audit_pools_anchors() {
        let labels: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let dist = NegativeSamplingDistribution::uniform(DatasetIndex::new(labels).unwrap());
        let mut rng = stream_rng(21, 0);
        let a = audit_sampler(&dist, &[0, 1, 2], 20_000, &mut rng).unwrap();
        assert_eq!(a.draws, 60_000);
        assert_eq!(a.same_class, 0);
        assert_eq!(a.chi_square.dof, 3 * 19);
        assert!(a.passes(0.01), "{a:?}");
        assert!(audit_sampler(&dist, &[], 10, &mut rng).is_err());
    }

    #[test]
    fn uniform_single_candidate() {
        let dist = NegativeSamplingDistribution::uniform(DatasetIndex::new(vec![0, 1]).unwrap());
        let mut rng = stream_rng(1, 0);
        assert_eq!(
            draw_negatives(&dist, 0, 3, &mut rng).unwrap(),
            vec![1, 1, 1]
        );
        assert!(draw_negatives(&dist, 0, 0, &mut rng).is_err());
    }

    #[test]
    fn uniform_without_other_classes_fails() {
        let dist = NegativeSamplingDistribution::uniform(DatasetIndex::new(vec![0, 0]).unwrap());
        let mut rng = stream_rng(1, 0);
        assert!(matches!(
            draw_negatives(&dist, 0, 1, &mut rng),
            Err(Error::Sampling(_))
        ));
    }

    #[test]
    fn class_scns_two_classes() {
        let emb = EmbeddingMatrix::new(array![[1.0, 0.2], [0.3, 1.0]]).unwrap();
        let dist = build_class_scns(&emb, two_by_two(), 1, 5.0).unwrap();
        let t = dist.table().unwrap();
        assert_eq!(t.indices(0).to_vec(), vec![1]);
        assert_eq!(t.probs(0)[0], 1.0);
        assert_eq!(t.indices(1).to_vec(), vec![0]);
        assert!(build_class_scns(&emb, two_by_two(), 2, 5.0).is_err());
    }

    #[test]
    fn class_scns_prefers_semantic_cluster() {
        // Two "tree" labels close together, two "vehicle" labels close together.
        let emb = EmbeddingMatrix::new(array![
            [1.0, 0.1, 0.0],
            [0.9, 0.2, 0.1],
            [0.0, 1.0, 0.1],
            [0.1, 0.9, 0.3]
        ])
        .unwrap();
        let index = DatasetIndex::new(vec![0, 1, 2, 3, 0, 1, 2, 3]).unwrap();
        let dist = build_class_scns(&emb, index, 3, 5.0).unwrap();
        let t = dist.table().unwrap();
        assert_eq!(t.indices(0)[0], 1);
        assert!(t.probs(0)[0] > t.probs(0)[1]);
        assert_eq!(t.indices(2)[0], 3);
    }

    #[test]
    fn class_scns_skips_empty_neighbor() {
        let emb = EmbeddingMatrix::new(array![[1.0, 0.0], [0.9, 0.1], [0.5, 0.5]]).unwrap();
        // class 1 has no samples
        let index = DatasetIndex::with_classes(vec![0, 0, 2, 2], 3).unwrap();
        let dist = build_class_scns(&emb, index, 2, 5.0).unwrap();
        assert_eq!(dist.warnings().len(), 2);
        let mut rng = stream_rng(3, 0);
        for _ in 0..200 {
            let n = draw_negatives(&dist, 0, 1, &mut rng).unwrap()[0];
            assert_eq!(dist.index().label(n), 2);
        }
        let m = dist.marginal(0).unwrap();
        let total: f64 = m.iter().map(|p| p.1).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn class_scns_with_certain_neighbor() {
        let emb = EmbeddingMatrix::new(array![[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let index = DatasetIndex::new(vec![0, 0, 1, 1, 1]).unwrap();
        let dist = build_class_scns(&emb, index, 1, 5.0).unwrap();
        let mut rng = stream_rng(4, 0);
        let draws = draw_negatives_with_provenance(&dist, 0, 50, &mut rng).unwrap();
        for (i, p) in draws {
            assert!(i >= 2);
            assert_eq!(p, Provenance::Class { class: 1, rank: 0 });
        }
    }

    #[test]
    fn class_scns_frequencies_match_table() {
        let mut rng = stream_rng(5, 0);
        let emb = Array2::from_shape_fn((5, 4), |_| rng.sample::<f64, _>(StandardNormal));
        let emb = EmbeddingMatrix::new(emb).unwrap();
        let labels: Vec<usize> = (0..25).map(|i| i % 5).collect();
        let dist = build_class_scns(&emb, DatasetIndex::new(labels).unwrap(), 2, 5.0).unwrap();
        let anchor = 0;
        let row = dist.table().unwrap().indices(0).to_vec();
        let probs = dist.table().unwrap().probs(0).to_vec();
        let mut counts = [0u64; 2];
        for _ in 0..100_000 {
            let (_, p) = dist.draw_one(anchor, &mut rng).unwrap();
            match p {
                Provenance::Class { class, rank } => {
                    assert_eq!(row[rank], class);
                    counts[rank] += 1;
                }
                _ => unreachable!(),
            }
        }
        let r = chi_square_gof(&counts, &probs).unwrap();
        assert!(r.p_value > 0.01, "{r:?}");
    }

    #[test]
    fn instance_scns_nearest_other_class() {
        let reps =
            EmbeddingMatrix::new(array![[1.0, 0.0], [0.0, 1.0], [0.9, 0.2], [0.1, 1.0]]).unwrap();
        let index = DatasetIndex::new(vec![0, 1, 1, 0]).unwrap();
        let dist = build_instance_scns(&reps, index, 1, 5.0).unwrap();
        let t = dist.table().unwrap();
        assert_eq!(t.indices(0)[0], 2);
        assert_eq!(t.indices(1)[0], 3);
        assert_eq!(t.indices(2)[0], 0);
        assert_eq!(t.indices(3)[0], 1);
    }

    #[test]
    fn instance_scns_full_width_is_softmax_over_all_negatives() {
        let reps = EmbeddingMatrix::new(array![
            [1.0, 0.0],
            [0.8, 0.6],
            [0.0, 1.0],
            [-0.6, 0.8],
            [-1.0, 0.1]
        ])
        .unwrap();
        let four =
            EmbeddingMatrix::new(reps.view().slice(ndarray::s![..4, ..]).to_owned()).unwrap();
        let index = DatasetIndex::new(vec![0, 0, 1, 1]).unwrap();
        let dist = build_instance_scns(&four, index, 2, 2.0).unwrap();
        let m = dist.marginal(0).unwrap();
        assert_eq!(m.iter().map(|p| p.0).collect::<Vec<_>>(), vec![2, 3]);
        let cos: Vec<f64> = [2, 3]
            .iter()
            .map(|&j| crate::embedding::cosine_similarity(reps.row(0), reps.row(j)).unwrap())
            .collect();
        let z: f64 = cos.iter().map(|c| (2.0 * c).exp()).sum();
        for (k, c) in cos.iter().enumerate() {
            assert_abs_diff_eq!(m[k].1, (2.0 * c).exp() / z, epsilon = 1e-12);
        }
        // k larger than the other-class pool for samples of class 1
        let index = DatasetIndex::new(vec![0, 0, 1, 1, 1]).unwrap();
        let err = build_instance_scns(&reps, index, 3, 2.0)
            .map(|_| ())
            .unwrap_err();
        assert!(err.to_string().contains("sample 2"), "{err}");
    }

    #[test]
    fn instance_scns_matches_brute_force() {
        let mut rng = stream_rng(8, 0);
        let labels: Vec<usize> = (0..50).map(|i| i % 3).collect();
        let reps = Array2::from_shape_fn((50, 4), |(i, _)| {
            labels[i] as f64 + rng.sample::<f64, _>(StandardNormal)
        });
        let reps = EmbeddingMatrix::new(reps).unwrap();
        let dist =
            build_instance_scns(&reps, DatasetIndex::new(labels.clone()).unwrap(), 5, 5.0).unwrap();
        let t = dist.table().unwrap();
        for i in 0..50 {
            let mut c: Vec<(usize, f64)> = (0..50)
                .filter(|&j| labels[j] != labels[i])
                .map(|j| {
                    (
                        j,
                        crate::embedding::cosine_similarity(reps.row(i), reps.row(j)).unwrap(),
                    )
                })
                .collect();
            c.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            let expect: Vec<usize> = c.iter().take(5).map(|p| p.0).collect();
            assert_eq!(t.indices(i).to_vec(), expect);
            for r in 0..5 {
                assert_abs_diff_eq!(t.scores(i)[r], c[r].1, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn compose_batch_small_class_positive() {
        let index = DatasetIndex::new(vec![0, 0, 1, 1, 1, 1, 1]).unwrap();
        let dist = NegativeSamplingDistribution::uniform(index);
        let mut rng = stream_rng(9, 0);
        for _ in 0..100 {
            let b = compose_batch(&dist, 0, 3, &mut rng).unwrap();
            assert_eq!(b.positive, 1);
            assert_eq!(b.negatives.len(), 3);
        }
        let singleton =
            NegativeSamplingDistribution::uniform(DatasetIndex::new(vec![0, 1, 1]).unwrap());
        assert!(compose_batch(&singleton, 0, 1, &mut rng).is_err());
    }

    #[test]
    fn composed_batches_respect_labels() {
        let mut rng = stream_rng(10, 0);
        let labels: Vec<usize> = (0..40).map(|i| i % 4).collect();
        let reps = Array2::from_shape_fn((40, 3), |_| rng.sample::<f64, _>(StandardNormal));
        let index = DatasetIndex::new(labels.clone()).unwrap();
        let dist =
            build_instance_scns(&EmbeddingMatrix::new(reps).unwrap(), index, 4, 5.0).unwrap();
        for _ in 0..10_000 {
            let a = rng.random_range(0..40);
            let b = compose_batch(&dist, a, 4, &mut rng).unwrap();
            assert_eq!(labels[b.positive], labels[a]);
            assert_ne!(b.positive, a);
            assert!(b
                .negatives
                .iter()
                .all(|&n| labels[n] != labels[a] && n != a));
        }
    }

    #[test]
    fn same_seed_same_draws() {
        let index = DatasetIndex::new((0..30).map(|i| i % 3).collect()).unwrap();
        let dist = NegativeSamplingDistribution::uniform(index);
        let a = draw_negatives(&dist, 4, 100, &mut stream_rng(77, 2)).unwrap();
        let b = draw_negatives(&dist, 4, 100, &mut stream_rng(77, 2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn csv_layout() {
        let emb = EmbeddingMatrix::new(array![[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let dist = build_class_scns(&emb, two_by_two(), 1, 5.0).unwrap();
        let mut buf = Vec::new();
        dist.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "row_entity,rank,neighbor_entity,score,prob\n0,0,1,0,1.00000000\n1,0,0,0,1.00000000\n"
        );
    }
}
