use super::mlp::MlpParams;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One SGD update: `p ← p − lr·(g + weight_decay·p)`. Biases are not decayed.
///
/// The parameters are left untouched when the gradient contains a non-finite
/// value.
pub fn sgd_step<T: Scalar>(params: &mut MlpParams<T>, grads: &MlpParams<T>, lr: T, weight_decay: T) -> Result<()> {
    if lr < T::zero() || !lr.is_finite() {
        return Err(Error::config(format!("learning rate must be finite and non-negative, got {lr}")));
    }
    if weight_decay < T::zero() || !weight_decay.is_finite() {
        return Err(Error::config(format!("weight decay must be finite and non-negative, got {weight_decay}")));
    }
    if !params.same_shape(grads) {
        return Err(Error::Internal(format!(
            "gradient shape {:?} does not match parameters {:?}",
            grads.dims(),
            params.dims()
        )));
    }
    if !grads.is_finite() {
        return Err(Error::Divergence("non-finite gradient passed to sgd_step".into()));
    }
    for (layer, grad) in params.layers_mut().iter_mut().zip(grads.layers()) {
        for (w, &g) in layer.weights.as_mut_slice().iter_mut().zip(grad.weights.as_slice()) {
            *w = *w - lr * (g + weight_decay * *w);
        }
        for (b, &g) in layer.bias.iter_mut().zip(&grad.bias) {
            *b = *b - lr * g;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Activation;
    use crate::numeric::{Layer, Matrix};

    fn scalar_net(w: f64, b: f64) -> MlpParams<f64> {
        let layer = Layer::new(Matrix::from_vec(1, 1, vec![w]).unwrap(), vec![b]).unwrap();
        MlpParams::new(vec![layer], Activation::Relu).unwrap()
    }

    fn weight(p: &MlpParams<f64>) -> f64 {
        p.layers()[0].weights[(0, 0)]
    }

    #[test]
    fn zero_gradient_zero_decay_is_identity() {
        let mut p = scalar_net(1.25, -0.5);
        let before = p.clone();
        sgd_step(&mut p, &scalar_net(0.0, 0.0), 0.3, 0.0).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn plain_gradient_step() {
        let mut p = scalar_net(1.0, 1.0);
        sgd_step(&mut p, &scalar_net(1.0, 1.0), 0.1, 0.0).unwrap();
        assert!((weight(&p) - 0.9).abs() < 1e-15);
        assert!((p.layers()[0].bias[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn decay_shrinks_weights_but_not_biases() {
        let mut p = scalar_net(1.0, 1.0);
        sgd_step(&mut p, &scalar_net(0.0, 0.0), 0.1, 0.5).unwrap();
        // 1 - 0.1 * 0.5 * 1
        assert!((weight(&p) - 0.95).abs() < 1e-15);
        assert_eq!(p.layers()[0].bias[0], 1.0);
    }

    #[test]
    fn non_finite_gradient_aborts_without_mutation() {
        let mut p = scalar_net(1.0, 1.0);
        let err = sgd_step(&mut p, &scalar_net(f64::NAN, 0.0), 0.1, 0.0).unwrap_err();
        assert!(matches!(err, Error::Divergence(_)));
        assert_eq!(weight(&p), 1.0);
    }

    #[test]
    fn rejects_negative_rate() {
        let mut p = scalar_net(1.0, 1.0);
        assert!(sgd_step(&mut p, &scalar_net(0.0, 0.0), -0.1, 0.0).is_err());
    }
}
