//! Feed-forward classifier with hand-written backpropagation.
//!
//! Every layer is affine, `z = x Wᵀ + b` with `W` stored `out × in`. Hidden
//! layers apply the configured activation; the last layer emits logits and
//! the caller applies [`softmax`](super::softmax) to obtain class
//! probabilities.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::prob::softmax_vec;
use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu => z.max(T::zero()),
            Activation::Identity => z,
        }
    }

    #[inline]
    fn derivative<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Identity => T::one(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer<T> {
    /// `out × in`.
    pub weights: Matrix<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Layer<T> {
    pub fn new(weights: Matrix<T>, bias: Vec<T>) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::config(format!(
                "bias has {} entries but weight matrix has {} rows",
                bias.len(),
                weights.rows()
            )));
        }
        Ok(Self { weights, bias })
    }

    pub fn zeros(input_dim: usize, output_dim: usize) -> Self {
        Self { weights: Matrix::zeros(output_dim, input_dim), bias: vec![T::zero(); output_dim] }
    }

    #[inline]
    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    #[inline]
    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }
}

/// Network parameters. The same type carries gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams<T> {
    layers: Vec<Layer<T>>,
    hidden_activation: Activation,
}

impl<T: Scalar> MlpParams<T> {
    pub fn new(layers: Vec<Layer<T>>, hidden_activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("network needs at least one layer"));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::config(format!(
                    "layer {i} emits {} values but layer {} expects {}",
                    pair[0].output_dim(),
                    i + 1,
                    pair[1].input_dim()
                )));
            }
        }
        Ok(Self { layers, hidden_activation })
    }

    /// All-zero network with layer widths `dims = [input, hidden.., classes]`.
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::config("need at least input and output dimensions"));
        }
        let layers = dims.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        Self::new(layers, Activation::Relu)
    }

    /// He-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        let mut params = Self::zeros(dims)?;
        for layer in &mut params.layers {
            let bound = (6.0 / layer.input_dim().max(1) as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bounds");
            for w in layer.weights.as_mut_slice() {
                *w = T::of(dist.sample(rng));
            }
        }
        Ok(params)
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden_activation
    }

    pub fn with_hidden_activation(mut self, activation: Activation) -> Self {
        self.hidden_activation = activation;
        self
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    /// Widths `[input, hidden.., output]`.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim()).chain(self.layers.iter().map(Layer::output_dim)).collect()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(|l| Layer::zeros(l.input_dim(), l.output_dim())).collect(),
            hidden_activation: self.hidden_activation,
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.as_slice().len() + l.bias.len()).sum()
    }

    /// Weight and bias buffers in a fixed order: layer 0 weights, layer 0 bias, layer 1 weights, ...
    pub fn buffers(&self) -> impl Iterator<Item = &[T]> + '_ {
        self.layers.iter().flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
    }

    pub fn buffers_mut(&mut self) -> impl Iterator<Item = &mut [T]> + '_ {
        self.layers.iter_mut().flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
    }

    pub fn is_finite(&self) -> bool {
        self.buffers().all(|b| b.iter().all(|x| x.is_finite()))
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.dims() == other.dims()
    }

    pub fn cast<U: Scalar>(&self) -> MlpParams<U> {
        MlpParams {
            layers: self
                .layers
                .iter()
                .map(|l| Layer { weights: l.weights.cast(), bias: l.bias.iter().map(|&b| U::of(b.as_f64())).collect() })
                .collect(),
            hidden_activation: self.hidden_activation,
        }
    }
}

/// Everything [`backward`] needs from a matching [`forward`] call.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    dims: Vec<usize>,
    input: Matrix<T>,
    /// Pre-activations per layer; the last entry holds the logits.
    pre: Vec<Matrix<T>>,
    /// Post-activations of each hidden layer.
    hidden: Vec<Matrix<T>>,
}

impl<T: Scalar> ForwardCache<T> {
    pub fn logits(&self) -> &Matrix<T> {
        &self.pre[self.pre.len() - 1]
    }

    /// Output of the last hidden layer, or `None` for a single-layer network.
    pub fn penultimate(&self) -> Option<&Matrix<T>> {
        self.hidden.last()
    }

    pub fn batch_size(&self) -> usize {
        self.input.rows()
    }
}

fn affine<T: Scalar>(input: &Matrix<T>, layer: &Layer<T>) -> Result<Matrix<T>> {
    let mut z = input.matmul_transposed(&layer.weights)?;
    for r in 0..z.rows() {
        for (v, &b) in z.row_mut(r).iter_mut().zip(&layer.bias) {
            *v = *v + b;
        }
    }
    Ok(z)
}

/// Runs the batch through the network and returns the logits with the cache.
pub fn forward<T: Scalar>(params: &MlpParams<T>, batch: &Matrix<T>) -> Result<(Matrix<T>, ForwardCache<T>)> {
    if batch.cols() != params.input_dim() {
        return Err(Error::config(format!(
            "batch has {} features but the network expects {}",
            batch.cols(),
            params.input_dim()
        )));
    }
    let n_layers = params.layers.len();
    let mut pre = Vec::with_capacity(n_layers);
    let mut hidden = Vec::with_capacity(n_layers - 1);
    for (i, layer) in params.layers.iter().enumerate() {
        let input = if i == 0 { batch } else { &hidden[i - 1] };
        let z = affine(input, layer)?;
        if i + 1 < n_layers {
            hidden.push(z.map(|v| params.hidden_activation.apply(v)));
        }
        pre.push(z);
    }
    let cache = ForwardCache { dims: params.dims(), input: batch.clone(), pre, hidden };
    Ok((cache.logits().clone(), cache))
}

/// Backpropagates `∂L/∂P`, the loss gradient with respect to the softmax
/// probabilities of each sample, to the network parameters.
///
/// Any batch reduction (e.g. the mean) must already be folded into the rows
/// of `dloss_dprobs`.
pub fn backward<T: Scalar>(
    params: &MlpParams<T>,
    cache: &ForwardCache<T>,
    dloss_dprobs: &Matrix<T>,
) -> Result<MlpParams<T>> {
    let logits = cache.logits();
    if dloss_dprobs.rows() != logits.rows() || dloss_dprobs.cols() != logits.cols() {
        return Err(Error::Internal(format!(
            "loss gradient is {}x{} but the cached logits are {}x{}",
            dloss_dprobs.rows(),
            dloss_dprobs.cols(),
            logits.rows(),
            logits.cols()
        )));
    }
    // Softmax Jacobian: ∂L/∂z_i = p_i (g_i - <g, p>)
    let mut dlogits = Matrix::zeros(logits.rows(), logits.cols());
    for r in 0..logits.rows() {
        let p = softmax_vec(logits.row(r));
        let g = dloss_dprobs.row(r);
        let gp = dot(g, &p);
        for ((d, &pi), &gi) in dlogits.row_mut(r).iter_mut().zip(&p).zip(g) {
            *d = pi * (gi - gp);
        }
    }
    backward_logits(params, cache, &dlogits)
}

/// Backpropagates `∂L/∂logits` to the parameters.
pub fn backward_logits<T: Scalar>(
    params: &MlpParams<T>,
    cache: &ForwardCache<T>,
    dloss_dlogits: &Matrix<T>,
) -> Result<MlpParams<T>> {
    if cache.dims != params.dims() {
        return Err(Error::Internal(format!(
            "cache was produced by a {:?} network, got {:?}",
            cache.dims,
            params.dims()
        )));
    }
    let logits = cache.logits();
    if dloss_dlogits.rows() != logits.rows() || dloss_dlogits.cols() != logits.cols() {
        return Err(Error::Internal("logit gradient does not match cached logits".into()));
    }
    let mut grads = params.zeros_like();
    let mut delta = dloss_dlogits.clone();
    for i in (0..params.layers.len()).rev() {
        let input = if i == 0 { &cache.input } else { &cache.hidden[i - 1] };
        let grad_layer = &mut grads.layers[i];
        grad_layer.weights = delta.transpose_matmul(input)?;
        for r in 0..delta.rows() {
            for (gb, &d) in grad_layer.bias.iter_mut().zip(delta.row(r)) {
                *gb = *gb + d;
            }
        }
        if i > 0 {
            let mut upstream = delta.matmul(&params.layers[i].weights)?;
            let z_prev = &cache.pre[i - 1];
            for (u, &z) in upstream.as_mut_slice().iter_mut().zip(z_prev.as_slice()) {
                *u = *u * params.hidden_activation.derivative(z);
            }
            delta = upstream;
        }
    }
    Ok(grads)
}

/// Softmax probabilities for every row of `batch`.
pub fn predict<T: Scalar>(params: &MlpParams<T>, batch: &Matrix<T>) -> Result<Matrix<T>> {
    let (mut logits, _) = forward(params, batch)?;
    for r in 0..logits.rows() {
        let p = softmax_vec(logits.row(r));
        logits.row_mut(r).copy_from_slice(&p);
    }
    Ok(logits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    #[test]
    fn zero_network_gives_zero_logits() {
        let params = MlpParams::<f64>::zeros(&[3, 2]).unwrap();
        let batch = Matrix::from_rows(&[vec![1.0, -2.0, 3.0], vec![0.5, 0.5, 0.5]]).unwrap();
        let (logits, _) = forward(&params, &batch).unwrap();
        assert!(logits.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let layer = Layer::new(Matrix::identity(2), vec![0.0, 0.0]).unwrap();
        let params = MlpParams::new(vec![layer], Activation::Relu).unwrap();
        let (logits, _) = forward(&params, &Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap()).unwrap();
        assert_eq!(logits.as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn layer_dimensions_must_chain() {
        let a = Layer::<f64>::zeros(3, 4);
        let b = Layer::<f64>::zeros(5, 2);
        assert!(matches!(MlpParams::new(vec![a, b], Activation::Relu), Err(Error::Config(_))));
    }

    #[test]
    fn input_width_mismatch_is_config_error() {
        let params = MlpParams::<f64>::zeros(&[3, 2]).unwrap();
        assert!(matches!(forward(&params, &Matrix::zeros(1, 4)), Err(Error::Config(_))));
    }

    #[test]
    fn zero_loss_gradient_gives_zero_parameter_gradient() {
        let mut rng = stream(7, Stream::ParamInit);
        let params = MlpParams::<f64>::init(&[4, 6, 3], &mut rng).unwrap();
        let batch = Matrix::from_rows(&[vec![0.1, -0.3, 0.7, 1.1], vec![-1.0, 0.2, 0.0, 0.4]]).unwrap();
        let (_, cache) = forward(&params, &batch).unwrap();
        let grads = backward(&params, &cache, &Matrix::zeros(2, 3)).unwrap();
        assert!(grads.buffers().all(|b| b.iter().all(|&g| g == 0.0)));
    }

    #[test]
    fn mismatched_cache_is_internal_error() {
        let mut rng = stream(1, Stream::ParamInit);
        let a = MlpParams::<f64>::init(&[2, 4, 2], &mut rng).unwrap();
        let b = MlpParams::<f64>::init(&[2, 3, 2], &mut rng).unwrap();
        let (_, cache) = forward(&a, &Matrix::zeros(1, 2)).unwrap();
        assert!(matches!(backward(&b, &cache, &Matrix::zeros(1, 2)), Err(Error::Internal(_))));
        assert!(matches!(backward(&a, &cache, &Matrix::zeros(2, 2)), Err(Error::Internal(_))));
    }

    #[test]
    fn forward_is_bitwise_repeatable() {
        let mut rng = stream(3, Stream::ParamInit);
        let params = MlpParams::<f64>::init(&[5, 8, 8, 4], &mut rng).unwrap();
        let batch = Matrix::from_vec(3, 5, (0..15).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let (a, _) = forward(&params, &batch).unwrap();
        let (b, _) = forward(&params, &batch).unwrap();
        assert_eq!(
            a.as_slice().iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            b.as_slice().iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
    }
}
