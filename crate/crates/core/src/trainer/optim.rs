use crate::numkernel::{Element, Tensor};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Linear warmup over the first `warmup_fraction` of steps, then linear decay to zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSchedule {
    pub peak: f64,
    pub total_steps: usize,
    pub warmup_steps: usize,
}

impl LinearSchedule {
    pub fn new(peak: f64, total_steps: usize, warmup_fraction: f64) -> Self {
        let warmup_steps = ((total_steps as f64 * warmup_fraction).ceil() as usize).max(1);
        Self {
            peak,
            total_steps: total_steps.max(1),
            warmup_steps: warmup_steps.min(total_steps.max(1)),
        }
    }

    /// Rate for 0-based optimizer step `t`.
    pub fn rate(&self, t: usize) -> f64 {
        if t < self.warmup_steps {
            return self.peak * (t + 1) as f64 / self.warmup_steps as f64;
        }
        let rest = (self.total_steps - self.warmup_steps).max(1) as f64;
        let left = self.total_steps.saturating_sub(t) as f64;
        self.peak * (left / rest).min(1.0)
    }
}

/// Adam with bias correction; one moment pair per parameter tensor.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    pub fn new<E: Element>(params: &[&Tensor<E>]) -> Self {
        Self {
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            t: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    /// Applies one update; `grads[i]` pairs with `params[i]`.
    pub fn step<E: Element>(&mut self, params: &mut [&mut Tensor<E>], grads: &[Vec<f64>], lr: f64) {
        assert_eq!(params.len(), grads.len());
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let mut vals = p.to_vec();
            for j in 0..vals.len() {
                m[j] = ADAM_BETA1 * m[j] + (1.0 - ADAM_BETA1) * g[j];
                v[j] = ADAM_BETA2 * v[j] + (1.0 - ADAM_BETA2) * g[j] * g[j];
                let update = lr * (m[j] / c1) / ((v[j] / c2).sqrt() + ADAM_EPS);
                vals[j] = E::lit(vals[j].as_f64() - update);
            }
            **p = Tensor::from_parts(p.shape().to_vec(), vals);
        }
    }
}
