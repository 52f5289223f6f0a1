//! Multilayer perceptron encoder with a classifier head and an
//! L2-normalized metric head, backpropagated by hand.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;

use scns_core::Error as CoreError;

use crate::error::Result;

/// Affine layer `y = x·W + b` with `W` stored `inputs × outputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    /// Weights and bias uniform in `±1/√inputs`.
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        Self {
            weights: Array2::from_shape_fn((inputs, outputs), |_| rng.random_range(-bound..=bound)),
            bias: Array1::from_shape_fn(outputs, |_| rng.random_range(-bound..=bound)),
        }
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weights: Array2::zeros((inputs, outputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        x.dot(&self.weights) + &self.bias
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub classes: usize,
    pub proj_dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpEncoder {
    /// Rectified hidden layers.
    pub hidden: Vec<Dense>,
    /// Logits from the last hidden features.
    pub classifier: Dense,
    /// Metric-head projection, normalized to unit length after the affine map.
    pub projector: Dense,
}

/// Cached activations of one forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    /// Input to each hidden layer.
    layer_inputs: Vec<Array2<f64>>,
    /// Pre-activation of each hidden layer.
    pre: Vec<Array2<f64>>,
    /// Last hidden features `h_L`.
    pub features: Array2<f64>,
    pub logits: Array2<f64>,
    /// Row norms of the projection before normalization.
    proj_norms: Array1<f64>,
    /// Unit-norm metric features; zero rows where the projection vanished.
    pub z: Array2<f64>,
}

/// Parameter gradients in layer order: hidden layers, classifier, projector.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zeros_like(encoder: &MlpEncoder) -> Self {
        Self {
            layers: encoder
                .layers()
                .map(|l| Dense::zeros(l.inputs(), l.outputs()))
                .collect(),
        }
    }

    pub fn classifier_mut(&mut self) -> &mut Dense {
        let n = self.layers.len();
        &mut self.layers[n - 2]
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights += &b.weights;
            a.bias += &b.bias;
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
            .collect()
    }
}

impl MlpEncoder {
    pub fn new<R: Rng + ?Sized>(arch: &Architecture, rng: &mut R) -> Self {
        let mut hidden = Vec::with_capacity(arch.hidden.len());
        let mut width = arch.input;
        for &h in &arch.hidden {
            hidden.push(Dense::new(width, h, rng));
            width = h;
        }
        let classifier = Dense::new(width, arch.classes, rng);
        let projector = Dense::new(width, arch.proj_dim, rng);
        Self {
            hidden,
            classifier,
            projector,
        }
    }

    /// Assembles an encoder from layers, checking that dimensions chain.
    pub fn from_layers(hidden: Vec<Dense>, classifier: Dense, projector: Dense) -> Result<Self> {
        let mut width = None;
        for l in &hidden {
            if let Some(w) = width {
                if l.inputs() != w {
                    return Err(CoreError::DimensionMismatch {
                        expected: w,
                        actual: l.inputs(),
                    }
                    .into());
                }
            }
            width = Some(l.outputs());
        }
        for head in [&classifier, &projector] {
            if let Some(w) = width {
                if head.inputs() != w {
                    return Err(CoreError::DimensionMismatch {
                        expected: w,
                        actual: head.inputs(),
                    }
                    .into());
                }
            }
        }
        if classifier.inputs() != projector.inputs() {
            return Err(CoreError::DimensionMismatch {
                expected: classifier.inputs(),
                actual: projector.inputs(),
            }
            .into());
        }
        let enc = Self {
            hidden,
            classifier,
            projector,
        };
        if enc.layers().any(|l| {
            l.weights
                .iter()
                .chain(l.bias.iter())
                .any(|x| !x.is_finite())
        }) {
            return Err(CoreError::NonFinite("encoder parameters").into());
        }
        Ok(enc)
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            input: self.input_dim(),
            hidden: self.hidden.iter().map(Dense::outputs).collect(),
            classes: self.classifier.outputs(),
            proj_dim: self.projector.outputs(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.hidden.first().unwrap_or(&self.classifier).inputs()
    }

    pub fn num_classes(&self) -> usize {
        self.classifier.outputs()
    }

    pub fn feature_dim(&self) -> usize {
        self.classifier.inputs()
    }

    pub fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.hidden
            .iter()
            .chain([&self.classifier, &self.projector])
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.hidden
            .iter_mut()
            .chain([&mut self.classifier, &mut self.projector])
    }

    pub fn num_params(&self) -> usize {
        self.layers().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        self.layers()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    pub fn set_params_flat(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.num_params(), "parameter count");
        let mut it = params.iter();
        for l in self.layers_mut() {
            for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *w = *it.next().expect("length checked");
            }
        }
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<Forward> {
        if x.ncols() != self.input_dim() {
            return Err(CoreError::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.ncols(),
            }
            .into());
        }
        let mut layer_inputs = Vec::with_capacity(self.hidden.len());
        let mut pre = Vec::with_capacity(self.hidden.len());
        let mut h = x.to_owned();
        for layer in &self.hidden {
            let a = layer.forward(h.view());
            layer_inputs.push(h);
            h = a.mapv(|v| v.max(0.0));
            pre.push(a);
        }
        let logits = self.classifier.forward(h.view());
        let mut z = self.projector.forward(h.view());
        let proj_norms = z.map_axis(Axis(1), |r| r.dot(&r).sqrt());
        Zip::from(z.rows_mut())
            .and(&proj_norms)
            .for_each(|mut r, &n| {
                if n > 0.0 {
                    r.mapv_inplace(|v| v / n);
                } else {
                    r.fill(0.0);
                }
            });
        Ok(Forward {
            layer_inputs,
            pre,
            features: h,
            logits,
            proj_norms,
            z,
        })
    }

    /// Logits only.
    pub fn logits(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(self.forward(x)?.logits)
    }

    /// Parameter gradients given upstream gradients on the logits, the
    /// normalized metric features and (optionally) the last hidden features.
    pub fn backward(
        &self,
        fwd: &Forward,
        d_logits: ArrayView2<'_, f64>,
        d_z: Option<ArrayView2<'_, f64>>,
        d_features: Option<ArrayView2<'_, f64>>,
    ) -> Gradients {
        let mut grads = Vec::with_capacity(self.hidden.len() + 2);
        let h = &fwd.features;
        let classifier = Dense {
            weights: h.t().dot(&d_logits),
            bias: d_logits.sum_axis(Axis(0)),
        };
        let mut d_h = d_logits.dot(&self.classifier.weights.t());
        let projector = match d_z {
            Some(d_z) => {
                // d/dp of p/‖p‖ applied to d_z: (d_z − z (z·d_z)) / ‖p‖.
                let mut d_p = d_z.to_owned();
                Zip::from(d_p.rows_mut())
                    .and(fwd.z.rows())
                    .and(&fwd.proj_norms)
                    .for_each(|mut g, z, &n| {
                        if n > 0.0 {
                            let dot = z.dot(&g);
                            Zip::from(&mut g)
                                .and(&z)
                                .for_each(|g, &z| *g = (*g - z * dot) / n);
                        } else {
                            g.fill(0.0);
                        }
                    });
                d_h += &d_p.dot(&self.projector.weights.t());
                Dense {
                    weights: h.t().dot(&d_p),
                    bias: d_p.sum_axis(Axis(0)),
                }
            }
            None => Dense::zeros(self.projector.inputs(), self.projector.outputs()),
        };
        if let Some(d_f) = d_features {
            d_h += &d_f;
        }
        for (i, layer) in self.hidden.iter().enumerate().rev() {
            Zip::from(&mut d_h).and(&fwd.pre[i]).for_each(|g, &a| {
                if a <= 0.0 {
                    *g = 0.0;
                }
            });
            grads.push(Dense {
                weights: fwd.layer_inputs[i].t().dot(&d_h),
                bias: d_h.sum_axis(Axis(0)),
            });
            if i > 0 {
                d_h = d_h.dot(&layer.weights.t());
            }
        }
        grads.reverse();
        grads.push(classifier);
        grads.push(projector);
        Gradients { layers: grads }
    }
}

/// Index of the largest logit per row; ties go to the lowest class id.
pub fn argmax_rows(logits: ArrayView2<'_, f64>) -> Vec<usize> {
    logits
        .rows()
        .into_iter()
        .map(|r| {
            let mut best = 0;
            for (j, &v) in r.iter().enumerate() {
                if v > r[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// SGD with momentum and decoupled-from-nothing (L2) weight decay:
/// `v ← μv + (g + λθ)`, `θ ← θ − lr·v`.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Gradients,
}

impl Sgd {
    pub fn new(encoder: &MlpEncoder, momentum: f64, weight_decay: f64) -> Self {
        Self {
            momentum,
            weight_decay,
            velocity: Gradients::zeros_like(encoder),
        }
    }

    pub fn step(&mut self, encoder: &mut MlpEncoder, grads: &Gradients, lr: f64) {
        let (mu, wd) = (self.momentum, self.weight_decay);
        for ((param, grad), vel) in encoder
            .layers_mut()
            .zip(&grads.layers)
            .zip(&mut self.velocity.layers)
        {
            Zip::from(&mut param.weights)
                .and(&grad.weights)
                .and(&mut vel.weights)
                .for_each(|p, &g, v| {
                    *v = mu * *v + g + wd * *p;
                    *p -= lr * *v;
                });
            Zip::from(&mut param.bias)
                .and(&grad.bias)
                .and(&mut vel.bias)
                .for_each(|p, &g, v| {
                    *v = mu * *v + g + wd * *p;
                    *p -= lr * *v;
                });
        }
    }
}
