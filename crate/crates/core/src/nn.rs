//! Fully connected networks with tanh hidden layers, hand-written backprop and Adam.
//!
//! Inputs are batched row-wise: a batch of `B` samples is a `B × in` matrix.
//! Layer `l` holds a weight matrix of shape `sizes[l+1] × sizes[l]`.

use ndarray::{Array, Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Linear,
}

impl Activation {
    fn code(self) -> u64 {
        match self {
            Activation::Tanh => 0,
            Activation::Linear => 1,
        }
    }

    fn from_code(code: u64) -> Option<Self> {
        match code {
            0 => Some(Activation::Tanh),
            1 => Some(Activation::Linear),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
    output_activation: Activation,
}

/// Per-layer gradients, shaped like the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl MlpGrads {
    pub fn scale(&mut self, c: f64) {
        self.weights.iter_mut().for_each(|w| *w *= c);
        self.biases.iter_mut().for_each(|b| *b *= c);
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b.iter()))
    }
}

/// Post-activation values of every layer, input included.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    activations: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.activations
            .last()
            .expect("cache holds at least the input")
    }
}

impl Mlp {
    /// Network with weights and biases uniform in ±1/√fan_in.
    pub fn new<R: Rng + ?Sized>(
        layer_sizes: &[usize],
        output_activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes, output_activation)?;
        for (w, b) in net.weights.iter_mut().zip(net.biases.iter_mut()) {
            let bound = 1.0 / (w.ncols() as f64).sqrt();
            w.iter_mut().for_each(|x| *x = rng.gen_range(-bound..bound));
            b.iter_mut().for_each(|x| *x = rng.gen_range(-bound..bound));
        }
        Ok(net)
    }

    pub fn zeros(layer_sizes: &[usize], output_activation: Activation) -> Result<Self> {
        if layer_sizes.is_empty() || layer_sizes.contains(&0) {
            return Err(Error::Domain(format!(
                "layer sizes must be non-empty and positive, got {layer_sizes:?}"
            )));
        }
        let weights = layer_sizes
            .windows(2)
            .map(|w| Array2::zeros((w[1], w[0])))
            .collect();
        let biases = layer_sizes[1..].iter().map(|&s| Array1::zeros(s)).collect();
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            output_activation,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn output_activation(&self) -> Activation {
        self.output_activation
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Array1<f64>] {
        &mut self.biases
    }

    /// All parameters in checkpoint order: per layer, row-major weights then biases.
    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b.iter()))
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| w.iter_mut().chain(b.iter_mut()))
    }

    pub fn count_params(&self) -> usize {
        count_params(&self.layer_sizes)
    }

    pub fn zero_grads(&self) -> MlpGrads {
        MlpGrads {
            weights: self
                .weights
                .iter()
                .map(|w| Array2::zeros(w.raw_dim()))
                .collect(),
            biases: self
                .biases
                .iter()
                .map(|b| Array1::zeros(b.raw_dim()))
                .collect(),
        }
    }

    fn activation_of(&self, layer: usize) -> Activation {
        if layer + 1 == self.num_layers() {
            self.output_activation
        } else {
            Activation::Tanh
        }
    }

    pub fn forward(&self, input: ArrayView2<f64>) -> Result<ForwardCache> {
        check_dim("network input", self.input_dim(), input.ncols())?;
        let mut activations = Vec::with_capacity(self.num_layers() + 1);
        activations.push(input.to_owned());
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = activations[l].dot(&w.t());
            z += b;
            if self.activation_of(l) == Activation::Tanh {
                z.mapv_inplace(f64::tanh);
            }
            activations.push(z);
        }
        Ok(ForwardCache { activations })
    }

    pub fn predict(&self, input: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward(input)?.activations.pop().unwrap())
    }

    /// Single-sample forward pass.
    pub fn predict_one(&self, input: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, input.len()), input)
            .map_err(|e| Error::Domain(e.to_string()))?;
        Ok(self.predict(view)?.into_raw_vec_and_offset().0)
    }

    /// Gradients of a scalar objective given its gradient w.r.t. the network output.
    /// Parameter gradients are summed over the batch; the input gradient is per row.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        output_grad: ArrayView2<f64>,
    ) -> Result<(MlpGrads, Array2<f64>)> {
        check_dim(
            "cached layers",
            self.num_layers() + 1,
            cache.activations.len(),
        )?;
        let out = cache.output();
        check_dim("output gradient rows", out.nrows(), output_grad.nrows())?;
        check_dim("output gradient cols", out.ncols(), output_grad.ncols())?;

        let mut grads = MlpGrads {
            weights: Vec::with_capacity(self.num_layers()),
            biases: Vec::with_capacity(self.num_layers()),
        };
        let mut delta = output_grad.to_owned();
        for l in (0..self.num_layers()).rev() {
            if self.activation_of(l) == Activation::Tanh {
                Zip::from(&mut delta)
                    .and(&cache.activations[l + 1])
                    .for_each(|d, &a| *d *= 1.0 - a * a);
            }
            grads.weights.push(delta.t().dot(&cache.activations[l]));
            grads.biases.push(delta.sum_axis(Axis(0)));
            delta = delta.dot(&self.weights[l]);
        }
        grads.weights.reverse();
        grads.biases.reverse();
        Ok((grads, delta))
    }

    fn check_same_shape(&self, other: &Mlp) -> Result<()> {
        if self.layer_sizes != other.layer_sizes {
            return Err(Error::Domain(format!(
                "network shapes differ: {:?} vs {:?}",
                self.layer_sizes, other.layer_sizes
            )));
        }
        Ok(())
    }

    /// Polyak averaging: self ← τ·source + (1−τ)·self.
    pub fn soft_update_from(&mut self, source: &Mlp, tau: f64) -> Result<()> {
        self.check_same_shape(source)?;
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::Domain(format!("tau must lie in [0, 1], got {tau}")));
        }
        if tau == 1.0 {
            self.clone_from(source);
            return Ok(());
        }
        let keep = 1.0 - tau;
        for (t, s) in self.weights.iter_mut().zip(&source.weights) {
            Zip::from(t)
                .and(s)
                .for_each(|t, &s| *t = tau * s + keep * *t);
        }
        for (t, s) in self.biases.iter_mut().zip(&source.biases) {
            Zip::from(t)
                .and(s)
                .for_each(|t, &s| *t = tau * s + keep * *t);
        }
        Ok(())
    }

    /// Euclidean distance between two parameter vectors.
    pub fn param_distance(&self, other: &Mlp) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self
            .params()
            .zip(other.params())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt())
    }

    pub fn header_bytes(&self) -> usize {
        8 * (2 + self.layer_sizes.len())
    }

    /// Little-endian dump: layer count, layer sizes, output activation code, then
    /// per layer the row-major weights followed by the biases as f64.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.header_bytes() + 8 * self.count_params());
        out.extend_from_slice(&(self.layer_sizes.len() as u64).to_le_bytes());
        for &s in &self.layer_sizes {
            out.extend_from_slice(&(s as u64).to_le_bytes());
        }
        out.extend_from_slice(&self.output_activation.code().to_le_bytes());
        for p in self.params() {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    /// Parses one network from the front of `bytes`, returning it and the bytes consumed.
    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, usize)> {
        let mut cursor = 0usize;
        let mut next = |bytes: &[u8]| -> Result<[u8; 8]> {
            let chunk = bytes
                .get(cursor..cursor + 8)
                .ok_or_else(|| Error::Domain("truncated network checkpoint".into()))?;
            cursor += 8;
            Ok(chunk.try_into().unwrap())
        };
        let count = u64::from_le_bytes(next(bytes)?) as usize;
        if count == 0 || count > 1 << 16 {
            return Err(Error::Domain(format!("implausible layer count {count}")));
        }
        let sizes = (0..count)
            .map(|_| Ok(u64::from_le_bytes(next(bytes)?) as usize))
            .collect::<Result<Vec<_>>>()?;
        let activation = Activation::from_code(u64::from_le_bytes(next(bytes)?))
            .ok_or_else(|| Error::Domain("unknown activation code".into()))?;
        let mut net = Mlp::zeros(&sizes, activation)?;
        let needed = 8 * net.count_params();
        if bytes.len() < cursor + needed {
            return Err(Error::Domain("truncated network checkpoint".into()));
        }
        let body = &bytes[cursor..cursor + needed];
        for (p, chunk) in net.params_mut().zip(body.chunks_exact(8)) {
            *p = f64::from_le_bytes(chunk.try_into().unwrap());
        }
        Ok((net, cursor + needed))
    }
}

/// Σ_l (sizes[l]·sizes[l+1] + sizes[l+1]).
pub fn count_params(layer_sizes: &[usize]) -> usize {
    layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// Adam with bias correction and inverse-time learning-rate decay
/// lr_t = base_lr / (1 + decay·t).
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m_weights: Vec<Array2<f64>>,
    v_weights: Vec<Array2<f64>>,
    m_biases: Vec<Array1<f64>>,
    v_biases: Vec<Array1<f64>>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub base_lr: f64,
    pub decay: f64,
}

impl AdamState {
    pub fn new(params: &Mlp, base_lr: f64, decay: f64) -> Self {
        let zeros = params.zero_grads();
        Self {
            m_weights: zeros.weights.clone(),
            v_weights: zeros.weights,
            m_biases: zeros.biases.clone(),
            v_biases: zeros.biases,
            step_count: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            base_lr,
            decay,
        }
    }

    /// Learning rate applied by the next step.
    pub fn learning_rate(&self) -> f64 {
        self.base_lr / (1.0 + self.decay * self.step_count as f64)
    }

    pub fn moments(&self) -> impl Iterator<Item = (&f64, &f64)> {
        let first = self
            .m_weights
            .iter()
            .zip(&self.m_biases)
            .flat_map(|(w, b)| w.iter().chain(b.iter()));
        let second = self
            .v_weights
            .iter()
            .zip(&self.v_biases)
            .flat_map(|(w, b)| w.iter().chain(b.iter()));
        first.zip(second)
    }

    /// One descent step on `params` along `grads`.
    pub fn step(&mut self, params: &mut Mlp, grads: &MlpGrads) -> Result<()> {
        check_dim("adam layers", self.m_weights.len(), params.num_layers())?;
        check_dim("gradient layers", params.num_layers(), grads.weights.len())?;
        for l in 0..params.num_layers() {
            if grads.weights[l].dim() != params.weights[l].dim()
                || grads.biases[l].dim() != params.biases[l].dim()
                || self.m_weights[l].dim() != params.weights[l].dim()
            {
                return Err(Error::Domain(format!(
                    "gradient shape mismatch at layer {l}"
                )));
            }
        }

        let t = (self.step_count + 1) as i32;
        let rule = AdamRule {
            lr: self.learning_rate(),
            b1: self.beta1,
            b2: self.beta2,
            eps: self.epsilon,
            c1: 1.0 - self.beta1.powi(t),
            c2: 1.0 - self.beta2.powi(t),
        };
        for l in 0..params.num_layers() {
            rule.apply(
                &mut params.weights[l],
                &mut self.m_weights[l],
                &mut self.v_weights[l],
                &grads.weights[l],
            );
            rule.apply(
                &mut params.biases[l],
                &mut self.m_biases[l],
                &mut self.v_biases[l],
                &grads.biases[l],
            );
        }
        self.step_count += 1;
        Ok(())
    }
}

#[derive(Clone, Copy)]
struct AdamRule {
    lr: f64,
    b1: f64,
    b2: f64,
    eps: f64,
    c1: f64,
    c2: f64,
}

impl AdamRule {
    #[inline]
    fn update(&self, p: &mut f64, m: &mut f64, v: &mut f64, g: f64) {
        *m = self.b1 * *m + (1.0 - self.b1) * g;
        *v = self.b2 * *v + (1.0 - self.b2) * g * g;
        let m_hat = *m / self.c1;
        let v_hat = *v / self.c2;
        *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
    }

    fn apply<D: ndarray::Dimension>(
        &self,
        p: &mut Array<f64, D>,
        m: &mut Array<f64, D>,
        v: &mut Array<f64, D>,
        g: &Array<f64, D>,
    ) {
        if let (Some(ps), Some(ms), Some(vs), Some(gs)) = (
            p.as_slice_mut(),
            m.as_slice_mut(),
            v.as_slice_mut(),
            g.as_slice(),
        ) {
            for (((p, m), v), &g) in ps.iter_mut().zip(ms).zip(vs).zip(gs) {
                self.update(p, m, v, g);
            }
        } else {
            Zip::from(p)
                .and(m)
                .and(v)
                .and(g)
                .for_each(|p, m, v, &g| self.update(p, m, v, g));
        }
    }
}
