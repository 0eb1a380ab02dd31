use serde::{Deserialize, Serialize};

use crate::autodiff::{Gradients, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Element-wise clamp to `[lo, hi]`.
pub fn clip_gradients(grads: &mut Gradients, lo: f64, hi: f64) {
    for (_, g) in grads.iter_mut() {
        for v in g.iter_mut() {
            *v = v.clamp(lo, hi);
        }
    }
}

/// Bias-corrected Adam over every parameter that received a gradient.
/// Parameters without one (unused by the active mode) are left untouched,
/// step count included. All gradients are checked before anything moves.
pub fn adam_step(store: &mut ParamStore, grads: &Gradients, config: &AdamConfig) -> Result<()> {
    for (id, g) in grads.iter() {
        if let Some(bad) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient of parameter {} at index {bad} is {}",
                store.get(id).name,
                g[bad]
            )));
        }
    }
    for (id, g) in grads.iter() {
        let p = store.get_mut(id);
        p.step_count += 1;
        let t = p.step_count as i32;
        let c1 = 1.0 - config.beta1.powi(t);
        let c2 = 1.0 - config.beta2.powi(t);
        for (((w, m), v), &gi) in p
            .tensor
            .data
            .iter_mut()
            .zip(p.adam_m.iter_mut())
            .zip(p.adam_v.iter_mut())
            .zip(g)
        {
            *m = config.beta1 * *m + (1.0 - config.beta1) * gi;
            *v = config.beta2 * *v + (1.0 - config.beta2) * gi * gi;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *w -= config.learning_rate * m_hat / (v_hat.sqrt() + config.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{ParamId, Tensor};

    fn scalar_store(x: f64) -> (ParamStore, ParamId) {
        let mut s = ParamStore::new();
        let id = s.add("x", Tensor::new(vec![1, 1], vec![x]).unwrap());
        (s, id)
    }

    fn grad_of(store: &ParamStore, id: ParamId, g: f64) -> Gradients {
        let mut grads = Gradients::empty(store.len());
        grads.accumulate_into(id, &[g]);
        grads
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let (mut s, id) = scalar_store(0.0);
        let g = grad_of(&s, id, 1.0);
        adam_step(&mut s, &g, &AdamConfig::default()).unwrap();
        let x = s.get(id).tensor.data[0];
        assert!((x + 1e-3).abs() < 1e-10, "{x}");
        assert_eq!(s.get(id).step_count, 1);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let (mut s, id) = scalar_store(0.7);
        let g = grad_of(&s, id, 0.0);
        adam_step(&mut s, &g, &AdamConfig::default()).unwrap();
        assert_eq!(s.get(id).tensor.data[0], 0.7);
    }

    #[test]
    fn quadratic_decreases_monotonically() {
        let (mut s, id) = scalar_store(1.0);
        let cfg = AdamConfig {
            learning_rate: 0.05,
            ..AdamConfig::default()
        };
        let mut prev = 1.0;
        for _ in 0..10 {
            let x = s.get(id).tensor.data[0];
            let g = grad_of(&s, id, 2.0 * x);
            adam_step(&mut s, &g, &cfg).unwrap();
            let x = s.get(id).tensor.data[0];
            assert!(x * x < prev);
            prev = x * x;
        }
    }

    #[test]
    fn non_finite_gradient_names_the_parameter() {
        let (mut s, id) = scalar_store(1.0);
        let g = grad_of(&s, id, f64::NAN);
        let err = adam_step(&mut s, &g, &AdamConfig::default()).unwrap_err();
        assert!(err.to_string().contains("parameter x"), "{err}");
        assert_eq!(s.get(id).tensor.data[0], 1.0);
    }

    #[test]
    fn clipping_clamps_each_entry() {
        let (s, id) = scalar_store(0.0);
        for (g, want) in [(7.0, 5.0), (-6.0, -5.0), (3.5, 3.5)] {
            let mut grads = grad_of(&s, id, g);
            clip_gradients(&mut grads, -5.0, 5.0);
            assert_eq!(grads.get(id).unwrap(), &[want]);
        }
    }
}
