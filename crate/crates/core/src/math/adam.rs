use super::params::ParamSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            alpha: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment estimates for every tensor of a [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub(crate) m: Vec<Vec<f64>>,
    pub(crate) v: Vec<Vec<f64>>,
    pub(crate) t: u64,
}

impl AdamState {
    pub fn new(params: &ParamSet, config: AdamConfig) -> Self {
        let zeros = || {
            params
                .iter()
                .map(|(_, _, t)| vec![0.0; t.len()])
                .collect::<Vec<_>>()
        };
        AdamState {
            config,
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self) -> &[Vec<f64>] {
        &self.m
    }

    pub fn second_moment(&self) -> &[Vec<f64>] {
        &self.v
    }

    /// Restores moments saved from an earlier run.
    pub fn from_parts(
        config: AdamConfig,
        m: Vec<Vec<f64>>,
        v: Vec<Vec<f64>>,
        t: u64,
    ) -> Result<Self> {
        if m.len() != v.len() || m.iter().zip(&v).any(|(a, b)| a.len() != b.len()) {
            return Err(Error::Config(
                "adam moments have inconsistent lengths".into(),
            ));
        }
        Ok(AdamState { config, m, v, t })
    }

    /// One bias-corrected Adam update of every trainable tensor; gradients
    /// are zeroed afterwards.
    pub fn step(&mut self, params: &mut ParamSet) -> Result<()> {
        if self.m.len() != params.len()
            || params
                .iter()
                .zip(&self.m)
                .any(|((_, _, t), m)| t.len() != m.len())
        {
            return Err(Error::Config(
                "adam state does not match the parameter set".into(),
            ));
        }
        for id in params.ids() {
            let t = params.get(id);
            if t.requires_grad() && t.grad().is_none() {
                return Err(Error::MissingGradient(params.name(id).to_string()));
            }
        }

        self.t += 1;
        let AdamConfig {
            alpha,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);

        for id in params.ids() {
            let tensor = params.get_mut(id);
            if !tensor.requires_grad() {
                continue;
            }
            let grad: Vec<f64> = tensor.grad().expect("checked above").to_vec();
            let (m, v) = (&mut self.m[id.index()], &mut self.v[id.index()]);
            for (i, value) in tensor.values_mut().iter_mut().enumerate() {
                let g = grad[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                *value -= alpha * m_hat / (v_hat.sqrt() + epsilon);
            }
            tensor.zero_grad();
        }
        Ok(())
    }
}
