use super::{NnError, Parameter, Scalar, Tensor};

/// Mean of squared differences and its gradient w.r.t. `output`.
pub fn mse_loss<T: Scalar>(output: &Tensor<T>, target: &Tensor<T>) -> Result<(T, Tensor<T>), NnError> {
    if output.shape() != target.shape() {
        return Err(NnError::Shape(format!(
            "mse: output {:?} vs target {:?}",
            output.shape(),
            target.shape()
        )));
    }
    let count = T::from_usize(output.len()).unwrap();
    let two = T::lit(2.0);
    let mut grad = Tensor::zeros(output.shape());
    let mut total = T::zero();
    for ((g, &o), &t) in grad.data_mut().iter_mut().zip(output.data()).zip(target.data()) {
        let d = o - t;
        total = total + d * d;
        *g = two * d / count;
    }
    Ok((total / count, grad))
}

/// `alpha · Σ‖W‖²` over parameters with the decay flag; adds `2·alpha·W` to
/// each such gradient.
pub fn l2_penalty<'a, T: Scalar>(
    params: impl IntoIterator<Item = &'a mut Parameter<T>>,
    alpha: T,
) -> T {
    let two_alpha = alpha + alpha;
    let mut total = T::zero();
    for p in params.into_iter().filter(|p| p.decay) {
        total = total + p.value.sum_squares();
        for (g, &w) in p.grad.data_mut().iter_mut().zip(p.value.data()) {
            *g = *g + two_alpha * w;
        }
        p.touch_grad();
    }
    alpha * total
}

/// Penalty value only, without touching gradients.
pub fn l2_penalty_value<'a, T: Scalar>(params: impl IntoIterator<Item = &'a Parameter<T>>, alpha: T) -> T {
    alpha
        * params
            .into_iter()
            .filter(|p| p.decay)
            .map(|p| p.value.sum_squares())
            .sum::<T>()
}

/// Mean softmax cross-entropy over rows of `logits (N, K)` and its gradient.
pub fn softmax_cross_entropy<T: Scalar>(
    logits: &Tensor<T>,
    labels: &[usize],
) -> Result<(T, Tensor<T>), NnError> {
    let [n, k] = logits.shape()[..] else {
        return Err(NnError::Shape(format!("expected (N, K) logits, got {:?}", logits.shape())));
    };
    if labels.len() != n || labels.iter().any(|&l| l >= k) {
        return Err(NnError::Shape(format!(
            "{} labels for {n} rows of {k} classes",
            labels.len()
        )));
    }
    let count = T::from_usize(n).unwrap();
    let mut grad = Tensor::zeros(logits.shape());
    let mut total = T::zero();
    for (i, (row, g)) in logits.data().chunks(k).zip(grad.data_mut().chunks_mut(k)).enumerate() {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let sum: T = row.iter().map(|&v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        total = total + log_z - row[labels[i]];
        for (j, (gj, &v)) in g.iter_mut().zip(row).enumerate() {
            let p = (v - log_z).exp();
            *gj = (p - if j == labels[i] { T::one() } else { T::zero() }) / count;
        }
    }
    Ok((total / count, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{numeric_grad, random_tensor, relative_error};

    #[test]
    fn mse_examples() {
        let t = random_tensor::<f64>(&[2, 3], 1);
        assert_eq!(mse_loss(&t, &t).unwrap().0, 0.0);
        let shifted = t.map(|v| v + 0.5);
        assert!((mse_loss(&shifted, &t).unwrap().0 - 0.25).abs() < 1e-15);
        assert!(mse_loss(&t, &Tensor::zeros(&[3, 2])).is_err());
    }

    #[test]
    fn mse_gradient() {
        let o = random_tensor::<f64>(&[2, 1, 3, 3], 2);
        let t = random_tensor::<f64>(&[2, 1, 3, 3], 3);
        let (_, g) = mse_loss(&o, &t).unwrap();
        let n = numeric_grad(&o, |x| mse_loss(x, &t).unwrap().0);
        assert!(relative_error(g.data(), n.data()) < 1e-4);
    }

    #[test]
    fn l2_examples() {
        let mut zero = Parameter::new("w", Tensor::<f64>::zeros(&[3, 3]), true);
        assert_eq!(l2_penalty([&mut zero], 0.01), 0.0);
        let mut w = Parameter::new("w", Tensor::from_vec(&[2], vec![3.0f64, 4.0]).unwrap(), true);
        let mut b = Parameter::new("b", Tensor::from_vec(&[1], vec![10.0f64]).unwrap(), false);
        let v = l2_penalty([&mut w, &mut b], 0.01);
        assert!((v - 0.25).abs() < 1e-15);
        assert_eq!(w.grad.data(), &[0.06, 0.08]);
        assert_eq!(b.grad.data(), &[0.0]);
        assert!((l2_penalty_value([&w, &b], 0.01) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn l2_gradient_matches_finite_differences() {
        let value = random_tensor::<f64>(&[3, 4], 4);
        let mut p = Parameter::new("w", value.clone(), true);
        l2_penalty([&mut p], 0.01);
        let n = numeric_grad(&value, |t| {
            let q = Parameter::new("w", t.clone(), true);
            l2_penalty_value([&q], 0.01)
        });
        assert!(relative_error(p.grad.data(), n.data()) < 1e-4);
    }

    #[test]
    fn cross_entropy_gradient_and_value() {
        let logits = random_tensor::<f64>(&[4, 10], 5);
        let labels = [3, 0, 9, 5];
        let (loss, g) = softmax_cross_entropy(&logits, &labels).unwrap();
        let n = numeric_grad(&logits, |t| softmax_cross_entropy(t, &labels).unwrap().0);
        assert!(relative_error(g.data(), n.data()) < 1e-4);
        let uniform = Tensor::<f64>::zeros(&[1, 10]);
        let (l, _) = softmax_cross_entropy(&uniform, &[2]).unwrap();
        assert!((l - 10f64.ln()).abs() < 1e-12);
        assert!(loss > 0.0);
        assert!(softmax_cross_entropy(&logits, &[1, 2]).is_err());
        assert!(softmax_cross_entropy(&logits, &[1, 2, 3, 10]).is_err());
    }
}
