use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::dropout::DropoutMask;
use super::tensor::Tensor2;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

/// `y = act(x · W + b)` with `W` stored `in_dim × out_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub(crate) weights: Tensor2,
    pub(crate) biases: Tensor2,
    pub(crate) activation: Activation,
}

impl DenseLayer {
    pub fn new(weights: Tensor2, biases: Tensor2, activation: Activation) -> Result<Self> {
        if biases.rows() != 1 || biases.cols() != weights.cols() {
            return Err(Error::mismatch("DenseLayer biases", weights.cols(), biases.cols()));
        }
        Ok(Self {
            weights,
            biases,
            activation,
        })
    }

    /// He-uniform weights for ReLU layers, Xavier-uniform for identity layers; zero biases.
    pub fn init<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut R) -> Self {
        let limit = match activation {
            Activation::Relu => (6.0 / in_dim as f64).sqrt(),
            Activation::Identity => (6.0 / (in_dim + out_dim) as f64).sqrt(),
        };
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite init limit");
        let w = (0..in_dim * out_dim).map(|_| dist.sample(rng)).collect();
        Self {
            weights: Tensor2::from_vec(in_dim, out_dim, w).expect("sized above"),
            biases: Tensor2::zeros(1, out_dim),
            activation,
        }
    }

    #[inline]
    pub fn in_dim(&self) -> usize {
        self.weights.rows()
    }

    #[inline]
    pub fn out_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn weights(&self) -> &Tensor2 {
        &self.weights
    }

    pub fn biases(&self) -> &Tensor2 {
        &self.biases
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights_mut(&mut self) -> &mut Tensor2 {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut Tensor2 {
        &mut self.biases
    }
}

/// Adam first/second moment accumulators, one pair per parameter tensor.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdamState {
    pub(crate) step: u64,
    pub(crate) moments: Vec<LayerMoments>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LayerMoments {
    pub(crate) m_w: Vec<f64>,
    pub(crate) v_w: Vec<f64>,
    pub(crate) m_b: Vec<f64>,
    pub(crate) v_b: Vec<f64>,
}

impl AdamState {
    pub fn step(&self) -> u64 {
        self.step
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

/// A chain of dense layers plus its optimizer state.
#[derive(Debug, Clone)]
pub struct NetworkParameters {
    layers: Vec<DenseLayer>,
    optimizer: AdamState,
    rng_seed: u64,
    id: u64,
    version: u64,
}

impl PartialEq for NetworkParameters {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers && self.optimizer == other.optimizer && self.rng_seed == other.rng_seed
    }
}

/// Activations saved by [`NetworkParameters::forward_cached`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    net_id: u64,
    version: u64,
    /// Per layer: the input after masking and scaling, i.e. what multiplied `W`.
    inputs: Vec<Tensor2>,
    pre_activations: Vec<Tensor2>,
    masks: Option<Vec<DropoutMask>>,
}

impl ForwardCache {
    pub fn batch_rows(&self) -> usize {
        self.inputs.first().map_or(0, Tensor2::rows)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients {
    pub weights: Tensor2,
    pub biases: Tensor2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradients>,
}

impl Gradients {
    pub fn zeros_like(net: &NetworkParameters) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGradients {
                    weights: Tensor2::zeros(l.in_dim(), l.out_dim()),
                    biases: Tensor2::zeros(1, l.out_dim()),
                })
                .collect(),
        }
    }

    pub fn check_finite(&self) -> Result<()> {
        for (i, l) in self.layers.iter().enumerate() {
            l.weights.check_finite(&format!("weight gradient of layer {i}"))?;
            l.biases.check_finite(&format!("bias gradient of layer {i}"))?;
        }
        Ok(())
    }

    /// Iterates over every scalar gradient in parameter order.
    pub fn flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.data().iter().chain(l.biases.data()).copied())
    }
}

/// Gradients with respect to the parameters and the network input.
#[derive(Debug, Clone)]
pub struct Backprop {
    pub params: Gradients,
    pub input: Tensor2,
}

impl NetworkParameters {
    /// Fully connected chain with ReLU hidden layers and an identity output layer.
    /// `widths` lists every layer boundary, e.g. `[4, 64, 64, 8]`.
    pub fn mlp(widths: &[usize], seed: u64) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::InvalidArgument(format!("invalid layer widths {widths:?}")));
        }
        let mut rng = rng::seeded(seed);
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n {
                    Activation::Identity
                } else {
                    Activation::Relu
                };
                DenseLayer::init(widths[i], widths[i + 1], act, &mut rng)
            })
            .collect();
        Self::from_layers(layers, seed)
    }

    pub fn from_layers(layers: Vec<DenseLayer>, rng_seed: u64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::mismatch("layer chain", pair[0].out_dim(), pair[1].in_dim()));
            }
        }
        Ok(Self {
            optimizer: fresh_state(&layers),
            layers,
            rng_seed,
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            version: 0,
        })
    }

    pub(crate) fn with_optimizer(mut self, optimizer: AdamState) -> Result<Self> {
        if optimizer.moments.len() != self.layers.len() {
            return Err(Error::mismatch(
                "optimizer state",
                self.layers.len(),
                optimizer.moments.len(),
            ));
        }
        self.optimizer = optimizer;
        Ok(self)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    /// Mutable access for tests and tools; invalidates outstanding caches.
    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        self.version += 1;
        &mut self.layers
    }

    pub fn optimizer_state(&self) -> &AdamState {
        &self.optimizer
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// Width of each layer's input, i.e. the mask widths `forward` expects.
    pub fn input_widths(&self) -> Vec<usize> {
        self.layers.iter().map(DenseLayer::in_dim).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.in_dim() * l.out_dim() + l.out_dim()).sum()
    }

    pub fn forward(&self, input: &Tensor2, masks: Option<&[DropoutMask]>) -> Result<Tensor2> {
        self.run(input, masks, false).map(|(out, _)| out)
    }

    pub fn forward_cached(&self, input: &Tensor2, masks: Option<&[DropoutMask]>) -> Result<(Tensor2, ForwardCache)> {
        let (out, cache) = self.run(input, masks, true)?;
        Ok((out, cache.expect("cache requested")))
    }

    fn run(
        &self,
        input: &Tensor2,
        masks: Option<&[DropoutMask]>,
        keep: bool,
    ) -> Result<(Tensor2, Option<ForwardCache>)> {
        if input.cols() != self.in_dim() {
            return Err(Error::mismatch("network input", self.in_dim(), input.cols()));
        }
        if let Some(masks) = masks {
            if masks.len() != self.layers.len() {
                return Err(Error::mismatch("mask count", self.layers.len(), masks.len()));
            }
            for (m, l) in masks.iter().zip(&self.layers) {
                m.check_shape(input.rows(), l.in_dim())?;
            }
        }

        let mut inputs = Vec::new();
        let mut pre_acts = Vec::new();
        let mut x = input.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            if let Some(masks) = masks {
                masks[i].apply(x.data_mut());
            }
            let mut z = x.matmul(&layer.weights)?;
            z.add_row(&layer.biases)?;
            let mut a = z.clone();
            if layer.activation == Activation::Relu {
                a.map_inplace(|v| v.max(0.0));
            }
            if keep {
                inputs.push(x);
                pre_acts.push(z);
            }
            x = a;
        }
        x.check_finite("network forward output")?;

        let cache = keep.then(|| ForwardCache {
            net_id: self.id,
            version: self.version,
            inputs,
            pre_activations: pre_acts,
            masks: masks.map(<[DropoutMask]>::to_vec),
        });
        Ok((x, cache))
    }

    /// Reverse pass for a scalar loss whose gradient with respect to the
    /// network output is `grad_output`.
    pub fn backward(&self, grad_output: &Tensor2, cache: &ForwardCache) -> Result<Backprop> {
        if cache.net_id != self.id || cache.version != self.version || cache.inputs.len() != self.layers.len() {
            return Err(Error::StaleCache);
        }
        if grad_output.rows() != cache.batch_rows() || grad_output.cols() != self.out_dim() {
            return Err(Error::mismatch("output gradient", self.out_dim(), grad_output.cols()));
        }

        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = grad_output.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            if layer.activation == Activation::Relu {
                let z = &cache.pre_activations[i];
                for (gv, &zv) in g.data_mut().iter_mut().zip(z.data()) {
                    if zv <= 0.0 {
                        *gv = 0.0;
                    }
                }
            }
            let dw = cache.inputs[i].t_matmul(&g)?;
            let db = g.sum_rows();
            let mut gx = g.matmul_t(&layer.weights)?;
            if let Some(masks) = &cache.masks {
                masks[i].apply(gx.data_mut());
            }
            grads.push(LayerGradients {
                weights: dw,
                biases: db,
            });
            g = gx;
        }
        grads.reverse();
        let params = Gradients { layers: grads };
        params.check_finite()?;
        g.check_finite("input gradient")?;
        Ok(Backprop { params, input: g })
    }

    /// One Adam update (β₁ = 0.9, β₂ = 0.999, ε = 1e-8).
    pub fn optimizer_step(&mut self, grads: &Gradients, learning_rate: f64) -> Result<()> {
        if grads.layers.len() != self.layers.len() {
            return Err(Error::mismatch(
                "gradient layers",
                self.layers.len(),
                grads.layers.len(),
            ));
        }
        for (l, g) in self.layers.iter().zip(&grads.layers) {
            if g.weights.rows() != l.in_dim() || g.weights.cols() != l.out_dim() || g.biases.cols() != l.out_dim() {
                return Err(Error::mismatch(
                    "gradient shape",
                    l.in_dim() * l.out_dim(),
                    g.weights.data().len(),
                ));
            }
        }
        grads.check_finite()?;
        if !(learning_rate.is_finite() && learning_rate > 0.0) {
            return Err(Error::InvalidArgument(format!("learning rate {learning_rate}")));
        }

        self.optimizer.step += 1;
        let t = self.optimizer.step as i32;
        let bc1 = 1.0 - ADAM_BETA1.powi(t);
        let bc2 = 1.0 - ADAM_BETA2.powi(t);
        let step_size = learning_rate / bc1;
        for ((layer, g), mom) in self
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.optimizer.moments)
        {
            adam_update(
                layer.weights.data_mut(),
                g.weights.data(),
                &mut mom.m_w,
                &mut mom.v_w,
                step_size,
                bc2,
            );
            adam_update(
                layer.biases.data_mut(),
                g.biases.data(),
                &mut mom.m_b,
                &mut mom.v_b,
                step_size,
                bc2,
            );
        }
        self.version += 1;
        Ok(())
    }
}

fn adam_update(params: &mut [f64], grads: &[f64], m: &mut [f64], v: &mut [f64], step_size: f64, bc2: f64) {
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(m.iter_mut()).zip(v.iter_mut()) {
        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
        *p -= step_size * *m / ((*v / bc2).sqrt() + ADAM_EPS);
    }
}

fn fresh_state(layers: &[DenseLayer]) -> AdamState {
    AdamState {
        step: 0,
        moments: layers
            .iter()
            .map(|l| {
                let nw = l.in_dim() * l.out_dim();
                let nb = l.out_dim();
                LayerMoments {
                    m_w: vec![0.0; nw],
                    v_w: vec![0.0; nw],
                    m_b: vec![0.0; nb],
                    v_b: vec![0.0; nb],
                }
            })
            .collect(),
    }
}
