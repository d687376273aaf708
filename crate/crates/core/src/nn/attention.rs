use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;

use super::act::softmax_in_place;
use super::linear::Linear;
use super::param::{join, Module, ParamView};

/// Multi-head scaled dot-product attention with separate query and key/value
/// inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadAttention {
    pub heads: usize,
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    /// Per-head `T x S` attention weights.
    pub weights: Vec<Array2<f64>>,
    /// Concatenated head outputs before the output projection, `T x D`.
    pub mixed: Array2<f64>,
}

impl MultiHeadAttention {
    pub fn new<R: Rng>(dim: usize, heads: usize, rng: &mut R) -> Self {
        assert!(heads > 0 && dim % heads == 0, "dim must be divisible by heads");
        Self {
            heads,
            wq: Linear::new(dim, dim, rng),
            wk: Linear::new(dim, dim, rng),
            wv: Linear::new(dim, dim, rng),
            wo: Linear::new(dim, dim, rng),
        }
    }

    pub fn dim(&self) -> usize {
        self.wq.in_dim()
    }

    pub fn forward(
        &self,
        query: ArrayView2<'_, f64>,
        context: ArrayView2<'_, f64>,
    ) -> (Array2<f64>, AttentionCache) {
        let d = self.dim();
        let dh = d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let q = self.wq.forward(query);
        let k = self.wk.forward(context);
        let v = self.wv.forward(context);
        let mut mixed = Array2::zeros((q.nrows(), d));
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let mut a = q.slice(cols).dot(&k.slice(cols).t());
            a.mapv_inplace(|x| x * scale);
            for row in a.axis_iter_mut(Axis(0)) {
                softmax_in_place(row);
            }
            mixed.slice_mut(cols).assign(&a.dot(&v.slice(cols)));
            weights.push(a);
        }
        let out = self.wo.forward(mixed.view());
        (
            out,
            AttentionCache {
                q,
                k,
                v,
                weights,
                mixed,
            },
        )
    }

    /// Returns gradients w.r.t. the query input and the context input.
    pub fn backward(
        &mut self,
        query: ArrayView2<'_, f64>,
        context: ArrayView2<'_, f64>,
        cache: &AttentionCache,
        dout: ArrayView2<'_, f64>,
    ) -> (Array2<f64>, Array2<f64>) {
        let d = self.dim();
        let dh = d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let dmixed = self.wo.backward(cache.mixed.view(), dout);
        let mut dq = Array2::zeros(cache.q.raw_dim());
        let mut dk = Array2::zeros(cache.k.raw_dim());
        let mut dv = Array2::zeros(cache.v.raw_dim());
        for (h, a) in cache.weights.iter().enumerate() {
            let cols = s![.., h * dh..(h + 1) * dh];
            let g = dmixed.slice(cols);
            dv.slice_mut(cols).assign(&a.t().dot(&g));
            let da = g.dot(&cache.v.slice(cols).t());
            // softmax backward, row-wise
            let mut ds = &da * a;
            let rowsum = ds.sum_axis(Axis(1));
            for ((mut r, arow), &sum) in ds.axis_iter_mut(Axis(0)).zip(a.axis_iter(Axis(0))).zip(&rowsum) {
                r.zip_mut_with(&arow, |x, &p| *x -= p * sum);
            }
            ds.mapv_inplace(|x| x * scale);
            dq.slice_mut(cols).assign(&ds.dot(&cache.k.slice(cols)));
            dk.slice_mut(cols).assign(&ds.t().dot(&cache.q.slice(cols)));
        }
        let dquery = self.wq.backward(query, dq.view());
        let mut dcontext = self.wk.backward(context, dk.view());
        dcontext += &self.wv.backward(context, dv.view());
        (dquery, dcontext)
    }
}

impl Module for MultiHeadAttention {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamView<'_>)) {
        self.wq.visit_params(&join(prefix, "wq"), f);
        self.wk.visit_params(&join(prefix, "wk"), f);
        self.wv.visit_params(&join(prefix, "wv"), f);
        self.wo.visit_params(&join(prefix, "wo"), f);
    }
}
