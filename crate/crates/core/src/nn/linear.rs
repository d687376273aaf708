use ndarray::{Array2, ArrayView2, Axis, Ix1, Ix2};
use rand::Rng;

use super::param::{join, uniform_init, Module, Param, ParamView};

/// `y = x W + b` applied row-wise; `W` is `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Param<Ix2>,
    pub bias: Param<Ix1>,
}

impl Linear {
    pub fn new<R: Rng>(input: usize, output: usize, rng: &mut R) -> Self {
        Self {
            weight: uniform_init((input, output), input, rng),
            bias: uniform_init(output, input, rng),
        }
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Param::zeros((input, output)),
            bias: Param::zeros(output),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.value.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.value.ncols()
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut y = x.dot(&self.weight.value);
        y += &self.bias.value;
        y
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward(&mut self, x: ArrayView2<'_, f64>, dy: ArrayView2<'_, f64>) -> Array2<f64> {
        self.accumulate(x, dy);
        dy.dot(&self.weight.value.t())
    }

    /// Parameter gradients only, for layers whose input needs no gradient.
    pub fn accumulate(&mut self, x: ArrayView2<'_, f64>, dy: ArrayView2<'_, f64>) {
        ndarray::linalg::general_mat_mul(1.0, &x.t(), &dy, 1.0, &mut self.weight.grad);
        self.bias.grad += &dy.sum_axis(Axis(0));
    }
}

impl Module for Linear {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamView<'_>)) {
        f(self.weight.view(join(prefix, "weight")));
        f(self.bias.view(join(prefix, "bias")));
    }
}
