use crate::nn::Module;

/// Adam with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update from the gradients currently stored in `model`.
    pub fn step(&mut self, model: &mut dyn Module) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let (lr, b1, b2, eps, wd) = (self.lr, self.beta1, self.beta2, self.eps, self.weight_decay);
        let (m, v) = (&mut self.m, &mut self.v);
        let mut idx = 0;
        model.visit_params("", &mut |p| {
            if m.len() <= idx {
                m.push(vec![0.0; p.value.len()]);
                v.push(vec![0.0; p.value.len()]);
            }
            let (mi, vi) = (&mut m[idx], &mut v[idx]);
            for k in 0..p.value.len() {
                let g = p.grad[k];
                mi[k] = b1 * mi[k] + (1.0 - b1) * g;
                vi[k] = b2 * vi[k] + (1.0 - b2) * g * g;
                let w = p.value[k] * (1.0 - lr * wd);
                p.value[k] = w - lr * (mi[k] / bc1) / ((vi[k] / bc2).sqrt() + eps);
            }
            idx += 1;
        });
    }
}

/// Multiplies the learning rate by `factor` once the monitored metric
/// (maximized) has gone `patience` consecutive epochs without improving.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    pub factor: f64,
    pub patience: usize,
    best: Option<f64>,
    bad_epochs: usize,
}

impl PlateauScheduler {
    pub fn new(factor: f64, patience: usize) -> Self {
        Self {
            factor,
            patience,
            best: None,
            bad_epochs: 0,
        }
    }

    /// Records one epoch's metric and returns the learning rate for the next.
    pub fn observe(&mut self, metric: f64, lr: f64) -> f64 {
        match self.best {
            Some(b) if metric <= b => {
                self.bad_epochs += 1;
                if self.bad_epochs >= self.patience {
                    self.bad_epochs = 0;
                    return lr * self.factor;
                }
            }
            _ => {
                self.best = Some(metric);
                self.bad_epochs = 0;
            }
        }
        lr
    }
}
