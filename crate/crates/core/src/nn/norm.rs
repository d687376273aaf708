use ndarray::{Array1, Array2, ArrayView2, Axis, Ix1, Zip};

use super::param::{join, Module, Param, ParamView};

const EPS: f64 = 1e-6;

/// Layer normalization over the last (channel) axis of an `N x C` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gamma: Param<Ix1>,
    pub beta: Param<Ix1>,
}

#[derive(Debug, Clone)]
pub struct LayerNormCache {
    xhat: Array2<f64>,
    rstd: Array1<f64>,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            gamma: Param::filled(dim, 1.0),
            beta: Param::zeros(dim),
        }
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> (Array2<f64>, LayerNormCache) {
        let c = x.ncols() as f64;
        let mut xhat = x.to_owned();
        let mut rstd = Array1::zeros(x.nrows());
        for (mut row, r) in xhat.axis_iter_mut(Axis(0)).zip(rstd.iter_mut()) {
            let mean = row.sum() / c;
            row.mapv_inplace(|v| v - mean);
            let var = row.iter().map(|v| v * v).sum::<f64>() / c;
            *r = 1.0 / (var + EPS).sqrt();
            let s = *r;
            row.mapv_inplace(|v| v * s);
        }
        let mut y = &xhat * &self.gamma.value;
        y += &self.beta.value;
        (y, LayerNormCache { xhat, rstd })
    }

    pub fn backward(&mut self, cache: &LayerNormCache, dy: ArrayView2<'_, f64>) -> Array2<f64> {
        self.gamma.grad += &(&dy * &cache.xhat).sum_axis(Axis(0));
        self.beta.grad += &dy.sum_axis(Axis(0));
        let c = dy.ncols() as f64;
        let mut dx = &dy * &self.gamma.value;
        Zip::from(dx.rows_mut())
            .and(cache.xhat.rows())
            .and(&cache.rstd)
            .for_each(|mut g, xh, &r| {
                let mean_g = g.sum() / c;
                let mean_gx = g.dot(&xh) / c;
                Zip::from(&mut g)
                    .and(&xh)
                    .for_each(|gi, &xi| *gi = r * (*gi - mean_g - xi * mean_gx));
            });
        dx
    }
}

impl Module for LayerNorm {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamView<'_>)) {
        f(self.gamma.view(join(prefix, "gamma")));
        f(self.beta.view(join(prefix, "beta")));
    }
}
