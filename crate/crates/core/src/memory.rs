//! Momentum value table plus FIFO feature queue for contrastive NCE.

use std::collections::VecDeque;
use std::io::Write;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::format::fmt9;
use crate::losses::LossEvaluation;

/// Tolerance on the norm of query vectors.
pub const QUERY_NORM_TOLERANCE: f64 = 1e-6;
/// Tolerance on the norm of stored rows.
pub const STORED_NORM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastMemory {
    values: Array2<f64>,
    queue: VecDeque<Array1<f64>>,
    capacity: usize,
    gamma: f64,
    tau: f64,
}

fn check_params(n_v: usize, n_q: usize, d: usize, gamma: f64, tau: f64) -> Result<()> {
    if n_v == 0 {
        return Err(Error::out_of_range("N_v", n_v, ">= 1"));
    }
    if n_q == 0 {
        return Err(Error::out_of_range("N_q", n_q, ">= 1"));
    }
    if d == 0 {
        return Err(Error::out_of_range("d_l", d, ">= 1"));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::out_of_range("gamma", gamma, "[0, 1]"));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::out_of_range("tau", tau, "(0, inf)"));
    }
    Ok(())
}

fn check_unit(z: ArrayView1<'_, f64>, tolerance: f64) -> Result<()> {
    let norm = z.dot(&z).sqrt();
    if (norm - 1.0).abs() > tolerance || !norm.is_finite() {
        return Err(Error::NotUnitNorm { norm, tolerance });
    }
    Ok(())
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

impl ContrastMemory {
    /// `N_v` uniformly random unit rows and an empty queue of capacity `N_q`.
    pub fn init<R: Rng + ?Sized>(
        n_v: usize,
        n_q: usize,
        d: usize,
        gamma: f64,
        tau: f64,
        rng: &mut R,
    ) -> Result<Self> {
        check_params(n_v, n_q, d, gamma, tau)?;
        let mut values = Array2::zeros((n_v, d));
        for mut row in values.rows_mut() {
            loop {
                row.mapv_inplace(|_| rng.sample::<f64, _>(StandardNormal));
                let n = row.dot(&row).sqrt();
                if n > 1e-12 {
                    row.mapv_inplace(|x| x / n);
                    break;
                }
            }
        }
        Ok(Self {
            values,
            queue: VecDeque::with_capacity(n_q),
            capacity: n_q,
            gamma,
            tau,
        })
    }

    /// Builds a memory from explicit contents; `queue` is ordered oldest first.
    pub fn from_parts(
        values: Array2<f64>,
        queue: Vec<Array1<f64>>,
        capacity: usize,
        gamma: f64,
        tau: f64,
    ) -> Result<Self> {
        check_params(values.nrows(), capacity, values.ncols(), gamma, tau)?;
        if queue.len() > capacity {
            return Err(Error::out_of_range(
                "queue length",
                queue.len(),
                format!("<= {capacity}"),
            ));
        }
        for row in values.rows() {
            check_unit(row, STORED_NORM_TOLERANCE)?;
        }
        for u in &queue {
            if u.len() != values.ncols() {
                return Err(Error::DimensionMismatch {
                    expected: values.ncols(),
                    actual: u.len(),
                });
            }
            check_unit(u.view(), STORED_NORM_TOLERANCE)?;
        }
        Ok(Self {
            values,
            queue: queue.into(),
            capacity,
            gamma,
            tau,
        })
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn num_values(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    /// Queue entries, oldest first.
    pub fn queue(&self) -> impl Iterator<Item = ArrayView1<'_, f64>> {
        self.queue.iter().map(|u| u.view())
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    fn check_query(&self, z: ArrayView1<'_, f64>) -> Result<()> {
        if z.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: z.len(),
            });
        }
        check_unit(z, QUERY_NORM_TOLERANCE)
    }

    fn scores(&self, z: ArrayView1<'_, f64>) -> (Array1<f64>, Array1<f64>, f64) {
        let sv = self.values.dot(&z) / self.tau;
        let sq: Array1<f64> = self.queue.iter().map(|u| u.dot(&z) / self.tau).collect();
        let all: Vec<f64> = sv.iter().chain(sq.iter()).copied().collect();
        let lse = log_sum_exp(&all);
        (sv, sq, lse)
    }

    /// All value-row and queue-slot probabilities `(p, q)` for query `z`.
    pub fn probabilities(&self, z: ArrayView1<'_, f64>) -> Result<(Array1<f64>, Array1<f64>)> {
        self.check_query(z)?;
        let (sv, sq, lse) = self.scores(z);
        Ok((sv.mapv(|s| (s - lse).exp()), sq.mapv(|s| (s - lse).exp())))
    }

    pub fn positive_prob(&self, z: ArrayView1<'_, f64>, i: usize) -> Result<f64> {
        self.check_row(i)?;
        self.check_query(z)?;
        let (sv, _, lse) = self.scores(z);
        Ok((sv[i] - lse).exp())
    }

    pub fn negative_prob(&self, z: ArrayView1<'_, f64>, n: usize) -> Result<f64> {
        if n >= self.queue.len() {
            return Err(Error::out_of_range(
                "queue slot",
                n,
                format!("[0, {})", self.queue.len()),
            ));
        }
        self.check_query(z)?;
        let (_, sq, lse) = self.scores(z);
        Ok((sq[n] - lse).exp())
    }

    fn check_row(&self, i: usize) -> Result<()> {
        if i >= self.num_values() {
            return Err(Error::out_of_range(
                "value row",
                i,
                format!("[0, {})", self.num_values()),
            ));
        }
        Ok(())
    }

    /// `−log p_i` without validating `z`; for finite-difference probes
    /// away from the unit sphere.
    pub fn nce_objective(&self, z: ArrayView1<'_, f64>, i: usize) -> f64 {
        let (sv, _, lse) = self.scores(z);
        lse - sv[i]
    }

    /// `−log p_i` and its gradient with respect to `z` (key `"z"`):
    /// `−(1/τ)[(1 − p_i)v_i − Σ_{j≠i} p_j v_j − Σ_k q_k u_k]`.
    pub fn nce_loss_and_grad(&self, z: ArrayView1<'_, f64>, i: usize) -> Result<LossEvaluation> {
        self.check_row(i)?;
        self.check_query(z)?;
        let (sv, sq, lse) = self.scores(z);
        let p = sv.mapv(|s| (s - lse).exp());
        let mut expected = self.values.t().dot(&p);
        for (u, s) in self.queue.iter().zip(sq.iter()) {
            expected.scaled_add((s - lse).exp(), u);
        }
        let grad = (expected - &self.values.row(i)) / self.tau;
        Ok(LossEvaluation::new(lse - sv[i]).with_vector("z", grad))
    }

    /// `v_i ← normalize(γ·v_i + (1 − γ)·z)`.
    pub fn momentum_update(&mut self, i: usize, z: ArrayView1<'_, f64>) -> Result<()> {
        self.check_row(i)?;
        self.check_query(z)?;
        let mut row = self.values.row_mut(i);
        let mixed = &row * self.gamma + &z * (1.0 - self.gamma);
        let norm = mixed.dot(&mixed).sqrt();
        if norm < 1e-12 {
            return Err(Error::DegenerateVector(format!(
                "momentum update of row {i} cancels to zero"
            )));
        }
        row.assign(&(mixed / norm));
        Ok(())
    }

    /// Appends `z`, evicting the oldest entry when the queue is full.
    pub fn enqueue(&mut self, z: ArrayView1<'_, f64>) -> Result<()> {
        self.check_query(z)?;
        if self.queue.len() == self.capacity {
            self.queue.pop_front();
        }
        self.queue.push_back(z.to_owned());
        Ok(())
    }

    /// CSV dump: `kind,slot,x0..x{d-1}` with `V` rows first, then queue
    /// slots oldest first.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header: Vec<String> = (0..self.dim()).map(|j| format!("x{j}")).collect();
        writeln!(w, "kind,slot,{}", header.join(","))?;
        let rows = self
            .values
            .rows()
            .into_iter()
            .map(|r| ("V", r))
            .chain(self.queue.iter().map(|u| ("Q", u.view())));
        let mut slot = [0usize; 2];
        for (kind, r) in rows {
            let s = &mut slot[usize::from(kind == "Q")];
            let vals: Vec<String> = r.iter().map(|&x| fmt9(x)).collect();
            writeln!(w, "{kind},{s},{}", vals.join(","))?;
            *s += 1;
        }
        Ok(())
    }
}
