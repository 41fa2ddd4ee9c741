//! Bias-corrected Adam.

use crate::error::{Error, Result};

/// Adam hyperparameters. β1/β2/ε keep the usual defaults; the learning rate
/// is always chosen by the caller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Optimizer state: step counter plus first/second moment buffers shaped
/// like the flattened parameter vector.
#[derive(Debug, Clone)]
pub struct AdamState {
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
    cfg: AdamConfig,
}

impl AdamState {
    pub fn new(n_params: usize, cfg: AdamConfig) -> Self {
        AdamState {
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            cfg,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Change the learning rate mid-run (moment buffers are kept).
    pub fn set_lr(&mut self, lr: f64) {
        self.cfg.lr = lr;
    }

    /// One update on a flat parameter vector.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        self.step_grouped(&mut [params], &[grads])
    }

    /// One update over a parameter vector split into disjoint slices
    /// (concatenated in order they form the flat vector the state was
    /// sized for). Lets callers keep structured parameters in place.
    pub fn step_grouped(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        let total: usize = params.iter().map(|p| p.len()).sum();
        if total != self.m.len() {
            return Err(Error::shape(format!(
                "adam state sized for {} parameters, got {total}",
                self.m.len()
            )));
        }
        let grad_total: usize = grads.iter().map(|g| g.len()).sum();
        if grad_total != total || params.len() != grads.len() {
            return Err(Error::shape("parameter/gradient slices do not match".to_string()));
        }

        self.step += 1;
        let t = self.step as i32;
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);

        let mut offset = 0;
        for (pslice, gslice) in params.iter_mut().zip(grads) {
            if pslice.len() != gslice.len() {
                return Err(Error::shape("parameter/gradient slice length mismatch".to_string()));
            }
            for (i, (p, &g)) in pslice.iter_mut().zip(gslice.iter()).enumerate() {
                if !g.is_finite() {
                    return Err(Error::numeric(format!(
                        "non-finite gradient at flat index {}",
                        offset + i
                    )));
                }
                let k = offset + i;
                self.m[k] = c.beta1 * self.m[k] + (1.0 - c.beta1) * g;
                self.v[k] = c.beta2 * self.v[k] + (1.0 - c.beta2) * g * g;
                let m_hat = self.m[k] / bc1;
                let v_hat = self.v[k] / bc2;
                *p -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
            }
            offset += pslice.len();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_roughly_lr() {
        // Bias correction makes m̂ = g and v̂ = g², so the first step is
        // exactly lr·|g|/(|g| + ε), i.e. ±lr up to a relative ε/|g| term.
        let lr = 0.01;
        let eps = 1e-8;
        for &g in &[1e-3f64, 0.5, 40.0, -3.0] {
            let mut state = AdamState::new(1, AdamConfig::new(lr));
            let mut p = vec![2.0];
            state.step(&mut p, &[g]).unwrap();
            let delta = (p[0] - 2.0).abs();
            let exact = lr * g.abs() / (g.abs() + eps);
            assert!((delta - exact).abs() < 1e-15, "g={g} moved {delta}");
            assert!((delta - lr).abs() <= 1.01 * lr * eps / g.abs());
            assert_eq!((p[0] - 2.0).signum(), -g.signum());
        }
    }

    #[test]
    fn zero_gradient_is_identity() {
        let mut state = AdamState::new(3, AdamConfig::new(0.1));
        let mut p = vec![1.0, -2.0, 0.5];
        let before = p.clone();
        for _ in 0..5 {
            state.step(&mut p, &[0.0, 0.0, 0.0]).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(state.step_count(), 5);
    }

    #[test]
    fn hundred_steps_on_quadratic_reach_origin() {
        // Independent scalar simulation of the same recurrence, then the
        // implementation must match it exactly and land near 0.
        let (lr, b1, b2, eps) = (0.1, 0.9, 0.999, 1e-8);
        let mut w_ref = 1.0f64;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        for t in 1..=100 {
            let g = 2.0 * w_ref;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let m_hat = m / (1.0 - b1.powi(t));
            let v_hat = v / (1.0 - b2.powi(t));
            w_ref -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        assert!(w_ref.abs() < 0.1, "oracle ended at {w_ref}");

        let mut state = AdamState::new(1, AdamConfig::new(lr));
        let mut p = vec![1.0];
        for _ in 0..100 {
            let g = 2.0 * p[0];
            state.step(&mut p, &[g]).unwrap();
        }
        assert_eq!(p[0], w_ref);
    }

    #[test]
    fn grouped_step_equals_flat_step() {
        let cfg = AdamConfig::new(0.05);
        let grads = [0.3, -1.0, 2.0, 0.7];

        let mut flat_state = AdamState::new(4, cfg);
        let mut flat = vec![1.0, 2.0, 3.0, 4.0];
        flat_state.step(&mut flat, &grads).unwrap();

        let mut grouped_state = AdamState::new(4, cfg);
        let mut a = vec![1.0, 2.0];
        let mut b = vec![3.0, 4.0];
        grouped_state
            .step_grouped(&mut [&mut a, &mut b], &[&grads[..2], &grads[2..]])
            .unwrap();
        assert_eq!(flat, [a, b].concat());
    }

    #[test]
    fn non_finite_gradient_is_an_error() {
        let mut state = AdamState::new(1, AdamConfig::new(0.1));
        let mut p = vec![1.0];
        assert!(matches!(
            state.step(&mut p, &[f64::NAN]),
            Err(Error::Numeric(_))
        ));
    }
}
