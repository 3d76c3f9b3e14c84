//! Adam with bias-corrected moments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::Parameters;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment accumulators, one vector per parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    t: u64,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        AdamState {
            config,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Number of updates applied so far.
    pub fn step(&self) -> u64 {
        self.t
    }

    pub fn second_moments(&self) -> impl Iterator<Item = f32> + '_ {
        self.v.iter().flatten().copied()
    }

    /// Applies one update. Gradients are checked for finiteness before any
    /// parameter is touched, so a diverged step leaves `params` intact.
    pub fn update<P: Parameters<f32>>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let grads = grads.tensors();
        if let Some(pos) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::Diverged {
                episode: self.t as usize,
                reason: format!("non-finite gradient in parameter tensor {pos}"),
            });
        }
        let mut params = params.tensors_mut();
        if params.len() != grads.len() {
            return Err(Error::dim("adam_update", &[params.len()], &[grads.len()]));
        }
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.v = self.m.clone();
        }
        for ((p, g), m) in params.iter().zip(&grads).zip(&self.m) {
            if p.shape() != g.shape() || m.len() != g.len() {
                return Err(Error::dim("adam_update", p.shape(), g.shape()));
            }
        }

        self.t += 1;
        let AdamConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            epsilon: eps,
        } = self.config;
        let t = self.t as i32;
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(&grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for (((theta, &g), m), v) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *theta -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Free-function form of [`AdamState::update`].
pub fn adam_update<P: Parameters<f32>>(
    params: &mut P,
    grads: &P,
    state: &mut AdamState,
) -> Result<()> {
    state.update(params, grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    struct Scalar1(Tensor<f32>);

    impl Parameters<f32> for Scalar1 {
        fn tensors(&self) -> Vec<&Tensor<f32>> {
            vec![&self.0]
        }
        fn tensors_mut(&mut self) -> Vec<&mut Tensor<f32>> {
            vec![&mut self.0]
        }
    }

    fn scalar(v: f32) -> Scalar1 {
        Scalar1(Tensor::from_vec(&[1], vec![v]).unwrap())
    }

    #[test]
    fn first_step_closed_form() {
        // m_hat = g and v_hat = g^2 after one step, so |dθ| = α|g|/(|g|+ε).
        let cfg = AdamConfig::default();
        for g in [1e-3f32, 1.0, 1e3] {
            let mut p = scalar(0.0);
            let mut st = AdamState::new(cfg);
            st.update(&mut p, &scalar(g)).unwrap();
            let got = p.0.data()[0].abs() as f64;
            let expect = cfg.learning_rate as f64 * g as f64 / (g as f64 + cfg.epsilon as f64);
            assert!((got - expect).abs() / expect < 1e-6, "g={g}: {got} vs {expect}");
        }
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut p = scalar(0.75);
        let mut st = AdamState::new(AdamConfig::default());
        for _ in 0..3 {
            st.update(&mut p, &scalar(0.0)).unwrap();
        }
        assert_eq!(p.0.data()[0], 0.75);
        assert_eq!(st.step(), 3);
    }

    #[test]
    fn quadratic_matches_scalar_reference() {
        // f(w) = w^2 from w = 1 with α = 0.1, reference in f64.
        let cfg = AdamConfig {
            learning_rate: 0.1,
            ..AdamConfig::default()
        };
        let (mut w, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        let mut trace = Vec::new();
        for t in 1..=3 {
            let g = 2.0 * w;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            w -= 0.1 * mh / (vh.sqrt() + 1e-8);
            trace.push(w);
        }
        let mut p = scalar(1.0);
        let mut st = AdamState::new(cfg);
        for expect in trace {
            let g = 2.0 * p.0.data()[0];
            st.update(&mut p, &scalar(g)).unwrap();
            assert!((p.0.data()[0] as f64 - expect).abs() < 1e-6);
        }
    }

    #[test]
    fn non_finite_gradient_is_divergence() {
        let mut p = scalar(1.0);
        let mut st = AdamState::new(AdamConfig::default());
        let err = st.update(&mut p, &scalar(f32::NAN)).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }));
        assert_eq!(p.0.data()[0], 1.0);
        assert_eq!(st.step(), 0);
    }

    proptest::proptest! {
        #[test]
        fn second_moment_nonnegative(gs in proptest::collection::vec(-1e3f32..1e3, 1..30)) {
            let mut p = scalar(0.0);
            let mut st = AdamState::new(AdamConfig::default());
            for (i, g) in gs.iter().enumerate() {
                st.update(&mut p, &scalar(*g)).unwrap();
                proptest::prop_assert!(st.second_moments().all(|v| v >= 0.0));
                proptest::prop_assert_eq!(st.step(), i as u64 + 1);
            }
        }
    }
}
