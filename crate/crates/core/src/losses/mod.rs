//! Training objectives. Every loss returns its value together with the
//! gradient with respect to each named representation input.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayD, ArrayView1, ArrayView2, Ix1, Ix2};

use crate::error::{Error, Result};

mod alignment;
mod classification;
mod contrastive;
mod correlation;
pub mod gradcheck;
mod mixup;

pub use alignment::{centered_alignment, triplet_cka_loss, Kernel};
pub use classification::{cross_entropy, kd_combined, kld, log_softmax, softmax};
pub use contrastive::infonce;
pub use correlation::{pearson, pearson_triplet_loss};
pub use mixup::{latent_mixup_kld, mixup, mixup_kld, MixupDraw};

/// A scalar loss and its gradients keyed by input name.
#[derive(Debug, Clone, PartialEq)]
pub struct LossEvaluation {
    pub value: f64,
    grads: BTreeMap<String, ArrayD<f64>>,
}

impl LossEvaluation {
    pub fn new(value: f64) -> Self {
        Self {
            value,
            grads: BTreeMap::new(),
        }
    }

    pub fn with_vector(mut self, name: &str, grad: Array1<f64>) -> Self {
        self.grads.insert(name.to_string(), grad.into_dyn());
        self
    }

    pub fn with_matrix(mut self, name: &str, grad: Array2<f64>) -> Self {
        self.grads.insert(name.to_string(), grad.into_dyn());
        self
    }

    pub fn grad(&self, name: &str) -> Option<&ArrayD<f64>> {
        self.grads.get(name)
    }

    /// Gradient of a vector input. Panics if `name` is absent or not 1-D.
    pub fn vector(&self, name: &str) -> ArrayView1<'_, f64> {
        self.grads
            .get(name)
            .unwrap_or_else(|| panic!("no gradient named {name}"))
            .view()
            .into_dimensionality::<Ix1>()
            .expect("vector gradient")
    }

    /// Gradient of a matrix input. Panics if `name` is absent or not 2-D.
    pub fn matrix(&self, name: &str) -> ArrayView2<'_, f64> {
        self.grads
            .get(name)
            .unwrap_or_else(|| panic!("no gradient named {name}"))
            .view()
            .into_dimensionality::<Ix2>()
            .expect("matrix gradient")
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.grads.keys().map(String::as_str)
    }

    /// Multiplies the value and every gradient by `factor`.
    pub fn scaled(mut self, factor: f64) -> Self {
        self.value *= factor;
        for g in self.grads.values_mut() {
            g.mapv_inplace(|x| x * factor);
        }
        self
    }

    /// Sums two evaluations; gradients with the same name are added.
    pub fn combine(mut self, other: LossEvaluation) -> Result<Self> {
        self.value += other.value;
        for (name, g) in other.grads {
            match self.grads.get_mut(&name) {
                Some(existing) => {
                    if existing.shape() != g.shape() {
                        return Err(Error::DimensionMismatch {
                            expected: existing.len(),
                            actual: g.len(),
                        });
                    }
                    *existing += &g;
                }
                None => {
                    self.grads.insert(name, g);
                }
            }
        }
        Ok(self)
    }
}

pub(crate) fn check_same_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            expected: a,
            actual: b,
        });
    }
    Ok(())
}

pub(crate) fn check_temperature(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::out_of_range("tau", tau, "(0, inf)"))
    }
}

/// `max(0, x)` with subgradient 0 at the kink.
pub(crate) fn hinge(x: f64) -> (f64, f64) {
    if x > 0.0 {
        (x, 1.0)
    } else {
        (0.0, 0.0)
    }
}
