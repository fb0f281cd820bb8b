//! Central finite differences, used as the independent check on [`backward`](super::backward).

use super::mlp::MlpParams;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Smallest and largest perturbation accepted by [`finite_diff_gradient`].
pub const STEP_RANGE: (f64, f64) = (1e-7, 1e-3);

/// Approximates `∂loss/∂θ` for every parameter with `(f(θ+h) − f(θ−h)) / 2h`.
pub fn finite_diff_gradient<T, F>(loss: F, params: &MlpParams<T>, step: T) -> Result<MlpParams<T>>
where
    T: Scalar,
    F: Fn(&MlpParams<T>) -> T,
{
    let h = step.as_f64();
    if !(STEP_RANGE.0..=STEP_RANGE.1).contains(&h) {
        return Err(Error::config(format!("finite-difference step {h} outside [1e-7, 1e-3]")));
    }
    let mut probe = params.clone();
    let mut grads = params.zeros_like();
    let two_h = step + step;
    let n_buffers = params.buffers().count();
    for b in 0..n_buffers {
        let len = params.buffers().nth(b).map_or(0, <[T]>::len);
        for i in 0..len {
            let original = buffer(&probe, b)[i];
            buffer_mut(&mut probe, b)[i] = original + step;
            let up = loss(&probe);
            buffer_mut(&mut probe, b)[i] = original - step;
            let down = loss(&probe);
            buffer_mut(&mut probe, b)[i] = original;
            buffer_mut(&mut grads, b)[i] = (up - down) / two_h;
        }
    }
    Ok(grads)
}

/// Central difference of a scalar function of a vector.
pub fn finite_diff_vector<T, F>(f: F, at: &[T], step: T) -> Vec<T>
where
    T: Scalar,
    F: Fn(&[T]) -> T,
{
    let mut x = at.to_vec();
    let two_h = step + step;
    (0..at.len())
        .map(|i| {
            let original = x[i];
            x[i] = original + step;
            let up = f(&x);
            x[i] = original - step;
            let down = f(&x);
            x[i] = original;
            (up - down) / two_h
        })
        .collect()
}

/// `‖a − b‖₂ / max(‖a‖₂, ‖b‖₂)`, or zero when both are zero.
pub fn relative_error<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(&x, &y)| (x.as_f64() - y.as_f64()).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|&x| x.as_f64().powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|&x| x.as_f64().powi(2)).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// [`relative_error`] over all buffers of two parameter-shaped values.
pub fn params_relative_error<T: Scalar>(a: &MlpParams<T>, b: &MlpParams<T>) -> f64 {
    let fa: Vec<T> = a.buffers().flat_map(|s| s.iter().copied()).collect();
    let fb: Vec<T> = b.buffers().flat_map(|s| s.iter().copied()).collect();
    relative_error(&fa, &fb)
}

fn buffer<T: Scalar>(p: &MlpParams<T>, index: usize) -> &[T] {
    p.buffers().nth(index).expect("buffer index in range")
}

fn buffer_mut<T: Scalar>(p: &mut MlpParams<T>, index: usize) -> &mut [T] {
    p.buffers_mut().nth(index).expect("buffer index in range")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{Activation, Layer, Matrix};

    fn scalar_net(w: f64) -> MlpParams<f64> {
        let layer = Layer::new(Matrix::from_vec(1, 1, vec![w]).unwrap(), vec![0.0]).unwrap();
        MlpParams::new(vec![layer], Activation::Relu).unwrap()
    }

    fn w(p: &MlpParams<f64>) -> f64 {
        p.layers()[0].weights[(0, 0)]
    }

    #[test]
    fn quadratic_gradient() {
        let g = finite_diff_gradient(|p| 0.5 * w(p) * w(p), &scalar_net(3.0), 1e-4).unwrap();
        assert!((w(&g) - 3.0).abs() < 1e-8);
        assert_eq!(g.layers()[0].bias[0], 0.0);
    }

    #[test]
    fn linear_gradient() {
        let g = finite_diff_gradient(|p| 2.0 * w(p), &scalar_net(-1.5), 1e-5).unwrap();
        assert!((w(&g) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn step_out_of_range_is_rejected() {
        assert!(finite_diff_gradient(w, &scalar_net(0.0), 1e-2).is_err());
        assert!(finite_diff_gradient(w, &scalar_net(0.0), 1e-9).is_err());
    }

    #[test]
    fn relative_error_handles_zero() {
        assert_eq!(relative_error::<f64>(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert!((relative_error(&[1.0_f64, 0.0], &[1.1, 0.0]) - 0.1 / 1.1).abs() < 1e-15);
    }
}
