use super::{NnError, Parameter, Scalar};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of every parameter. Each parameter must
/// hold a gradient written since its last update.
pub fn adam_step<'a, T: Scalar>(
    params: impl IntoIterator<Item = &'a mut Parameter<T>>,
    cfg: &AdamConfig,
) -> Result<(), NnError> {
    let params: Vec<&mut Parameter<T>> = params.into_iter().collect();
    if let Some(stale) = params.iter().find(|p| !p.has_fresh_grad()) {
        return Err(NnError::StaleGradient(stale.name.clone()));
    }
    let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
    let (lr, eps) = (T::lit(cfg.learning_rate), T::lit(cfg.epsilon));
    for p in params {
        p.step += 1;
        let t = p.step as i32;
        let c1 = T::one() - b1.powi(t);
        let c2 = T::one() - b2.powi(t);
        let Parameter {
            value,
            grad,
            adam_m,
            adam_v,
            ..
        } = p;
        for (((w, &g), m), v) in value
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(adam_m.data_mut())
            .zip(adam_v.data_mut())
        {
            *m = b1 * *m + (T::one() - b1) * g;
            *v = b2 * *v + (T::one() - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
        }
        p.grad_fresh = false;
    }
    Ok(())
}
