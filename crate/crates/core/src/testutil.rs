//! Central-difference gradient checking for unit tests.

use crate::nn::Module;

pub fn param_sizes<M: Module>(m: &mut M) -> Vec<(String, usize)> {
    let mut out = Vec::new();
    m.visit_params("", &mut |p| out.push((p.name, p.value.len())));
    out
}

pub fn grads<M: Module>(m: &mut M) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    m.visit_params("", &mut |p| out.push(p.grad.to_vec()));
    out
}

fn nudge<M: Module>(m: &mut M, pi: usize, ei: usize, delta: f64) {
    let mut i = 0;
    m.visit_params("", &mut |p| {
        if i == pi {
            p.value[ei] += delta;
        }
        i += 1;
    });
}

/// Compares accumulated analytic gradients (already in the module) against
/// central differences of `loss`. Returns the worst per-tensor relative error
/// `|g_a - g_fd| / max(|g_a|, |g_fd|)` (L2 norms) with the tensor name.
pub fn check_module<M: Module>(m: &mut M, mut loss: impl FnMut(&mut M) -> f64) -> (f64, String) {
    let analytic = grads(m);
    let sizes = param_sizes(m);
    let h = 1e-5;
    let mut worst = (0.0, String::new());
    for (pi, (name, len)) in sizes.iter().enumerate() {
        let mut num = vec![0.0; *len];
        for (ei, slot) in num.iter_mut().enumerate() {
            nudge(m, pi, ei, h);
            let lp = loss(m);
            nudge(m, pi, ei, -2.0 * h);
            let lm = loss(m);
            nudge(m, pi, ei, h);
            *slot = (lp - lm) / (2.0 * h);
        }
        let a = &analytic[pi];
        let diff = a.iter().zip(&num).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nn = num.iter().map(|x| x * x).sum::<f64>().sqrt();
        let denom = na.max(nn);
        let rel = if denom < 1e-8 { diff } else { diff / denom };
        if rel > worst.0 {
            worst = (rel, name.clone());
        }
    }
    worst
}

/// Central differences of a scalar function w.r.t. a flat input vector.
pub fn numeric_input_grad(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let h = 1e-5;
    let mut xs = x.to_vec();
    (0..x.len())
        .map(|i| {
            xs[i] = x[i] + h;
            let lp = f(&xs);
            xs[i] = x[i] - h;
            let lm = f(&xs);
            xs[i] = x[i];
            (lp - lm) / (2.0 * h)
        })
        .collect()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let d = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if d < 1e-8 {
        diff
    } else {
        diff / d
    }
}
