use serde::{Deserialize, Serialize};

use super::mlp::{Gradients, Mlp};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerKind {
    /// Plain gradient descent; `momentum = 0` keeps no state.
    Sgd {
        momentum: f64,
    },
    Adam {
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
}

/// Optimizer hyperparameters plus per-tensor accumulators.
///
/// Tensors are addressed by slot: for an [`Mlp`] slot `2i` is the weight
/// matrix of layer `i` and slot `2i + 1` its bias. Accumulators are created
/// lazily with the shape of the first gradient seen in each slot.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub lr: f64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl OptimizerState {
    pub fn sgd(lr: f64) -> Self {
        Self::new(OptimizerKind::Sgd { momentum: 0.0 }, lr)
    }

    pub fn sgd_momentum(lr: f64, momentum: f64) -> Self {
        Self::new(OptimizerKind::Sgd { momentum }, lr)
    }

    pub fn adam(lr: f64) -> Self {
        Self::new(OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }, lr)
    }

    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Self { kind, lr, first: Vec::new(), second: Vec::new(), step: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One descent step on every parameter of `net`.
    pub fn step_mlp(&mut self, net: &mut Mlp, grads: &Gradients) {
        self.step += 1;
        for (i, (layer, g)) in net.layers_mut().iter_mut().zip(&grads.layers).enumerate() {
            self.update(2 * i, layer.weights.iter_mut(), g.weights.iter());
            self.update(2 * i + 1, layer.bias.iter_mut(), g.bias.iter());
        }
    }

    /// One descent step on arbitrary flat tensors (slot = position in the list).
    pub fn step_slices(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) {
        assert_eq!(params.len(), grads.len(), "one gradient per tensor");
        self.step += 1;
        for (slot, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            assert_eq!(p.len(), g.len(), "gradient shape mismatch in slot {slot}");
            self.update(slot, p.iter_mut(), g.iter());
        }
    }

    fn update<'a, 'b>(
        &mut self,
        slot: usize,
        params: impl ExactSizeIterator<Item = &'a mut f64>,
        grads: impl Iterator<Item = &'b f64>,
    ) {
        let len = params.len();
        if self.first.len() <= slot {
            self.first.resize_with(slot + 1, Vec::new);
            self.second.resize_with(slot + 1, Vec::new);
        }
        match self.kind {
            OptimizerKind::Sgd { momentum } if momentum == 0.0 => {
                for (p, g) in params.zip(grads) {
                    *p -= self.lr * g;
                }
            }
            OptimizerKind::Sgd { momentum } => {
                let vel = &mut self.first[slot];
                if vel.len() != len {
                    *vel = vec![0.0; len];
                }
                for ((p, g), v) in params.zip(grads).zip(vel.iter_mut()) {
                    *v = momentum * *v + g;
                    *p -= self.lr * *v;
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let t = self.step as i32;
                let (m, v) = (&mut self.first[slot], &mut self.second[slot]);
                if m.len() != len {
                    *m = vec![0.0; len];
                    *v = vec![0.0; len];
                }
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (((p, g), mi), vi) in params.zip(grads).zip(m.iter_mut()).zip(v.iter_mut()) {
                    *mi = beta1 * *mi + (1.0 - beta1) * g;
                    *vi = beta2 * *vi + (1.0 - beta2) * g * g;
                    let mhat = *mi / c1;
                    let vhat = *vi / c2;
                    *p -= self.lr * mhat / (vhat.sqrt() + eps);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_step() {
        let mut opt = OptimizerState::sgd(0.1);
        let mut p = [0.0];
        opt.step_slices(&mut [&mut p[..]], &[&[1.0][..]]);
        assert!((p[0] + 0.1).abs() < 1e-15);
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        for mut opt in [OptimizerState::sgd(0.5), OptimizerState::adam(0.5)] {
            let mut p = [1.5, -2.0, 0.25];
            opt.step_slices(&mut [&mut p[..]], &[&[0.0, 0.0, 0.0][..]]);
            assert_eq!(p, [1.5, -2.0, 0.25]);
        }
    }

    // f(z) = 1/2 (z - c)' H (z - c) with H PSD; minimiser is c.
    fn quad_grad(h: &[[f64; 2]; 2], c: &[f64; 2], z: &[f64]) -> Vec<f64> {
        let d = [z[0] - c[0], z[1] - c[1]];
        vec![h[0][0] * d[0] + h[0][1] * d[1], h[1][0] * d[0] + h[1][1] * d[1]]
    }

    fn quad_value(h: &[[f64; 2]; 2], c: &[f64; 2], z: &[f64]) -> f64 {
        let d = [z[0] - c[0], z[1] - c[1]];
        0.5 * (d[0] * (h[0][0] * d[0] + h[0][1] * d[1]) + d[1] * (h[1][0] * d[0] + h[1][1] * d[1]))
    }

    const H: [[f64; 2]; 2] = [[2.0, 0.5], [0.5, 1.0]];
    const C: [f64; 2] = [0.7, -1.2];

    #[test]
    fn converges_on_convex_quadratic() {
        for (mut opt, label) in [
            (OptimizerState::sgd(0.3), "sgd"),
            (OptimizerState::sgd_momentum(0.1, 0.9), "momentum"),
            (OptimizerState::adam(0.05), "adam"),
        ] {
            let mut z = vec![0.0, 0.0];
            for _ in 0..500 {
                let g = quad_grad(&H, &C, &z);
                opt.step_slices(&mut [&mut z[..]], &[&g[..]]);
            }
            let dist = ((z[0] - C[0]).powi(2) + (z[1] - C[1]).powi(2)).sqrt();
            assert!(dist < 1e-3, "{label}: distance {dist}");
        }
    }

    #[test]
    fn small_steps_strictly_decrease_quadratic() {
        for mut opt in [OptimizerState::sgd(1e-3), OptimizerState::adam(1e-3)] {
            let mut z = vec![3.0, 2.0];
            let mut prev = quad_value(&H, &C, &z);
            for _ in 0..200 {
                let g = quad_grad(&H, &C, &z);
                opt.step_slices(&mut [&mut z[..]], &[&g[..]]);
                let cur = quad_value(&H, &C, &z);
                assert!(cur < prev);
                prev = cur;
            }
        }
    }
}
