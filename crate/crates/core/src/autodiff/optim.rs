use super::params::ParamSet;

/// SGD with classical momentum: `v <- mu v - lr g`, `p <- p + v`.
#[derive(Clone, Debug)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    /// Rescale the global gradient to at most this norm before the update.
    pub clip_norm: Option<f64>,
    velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64) -> Self {
        Sgd { lr, momentum, clip_norm: None, velocity: Vec::new() }
    }

    pub fn with_clip(mut self, clip_norm: Option<f64>) -> Self {
        self.clip_norm = clip_norm;
        self
    }

    /// Applies the accumulated gradients and zeroes them.
    pub fn step(&mut self, params: &mut ParamSet) {
        if self.velocity.len() != params.len() {
            self.velocity = params.ids().map(|id| vec![0.0; params.value(id).len()]).collect();
        }
        let scale = match self.clip_norm {
            Some(c) => {
                let n = params.grad_norm();
                if n > c { c / n } else { 1.0 }
            }
            None => 1.0,
        };
        for id in params.ids().collect::<Vec<_>>() {
            let g = params.grad(id).data().to_vec();
            let v = &mut self.velocity[id.0];
            for (vi, gi) in v.iter_mut().zip(&g) {
                *vi = self.momentum * *vi - self.lr * scale * gi;
            }
            for (p, vi) in params.value_mut(id).data_mut().iter_mut().zip(v.iter()) {
                *p += vi;
            }
        }
        params.zero_grads();
    }
}
