use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis, Ix1, Ix2};
use rand::Rng;

use super::act::sigmoid;
use super::param::{join, uniform_init, Module, Param, ParamView};

/// Single-direction gated recurrent unit. Gate order in the stacked weights is
/// reset, update, candidate:
///
/// ```text
/// r = sigmoid(x W_ir + b_ir + h W_hr + b_hr)
/// z = sigmoid(x W_iz + b_iz + h W_hz + b_hz)
/// n = tanh(x W_in + b_in + r * (h W_hn + b_hn))
/// h' = (1 - z) * n + z * h
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct Gru {
    pub w_ih: Param<Ix2>,
    pub w_hh: Param<Ix2>,
    pub b_ih: Param<Ix1>,
    pub b_hh: Param<Ix1>,
}

#[derive(Debug, Clone)]
pub struct GruCache {
    /// `(T + 1) x H`, row 0 is the zero initial state.
    states: Array2<f64>,
    r: Array2<f64>,
    z: Array2<f64>,
    n: Array2<f64>,
    /// `h W_hn + b_hn` per step.
    hn: Array2<f64>,
}

impl Gru {
    pub fn new<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            w_ih: uniform_init((input, 3 * hidden), hidden, rng),
            w_hh: uniform_init((hidden, 3 * hidden), hidden, rng),
            b_ih: uniform_init(3 * hidden, hidden, rng),
            b_hh: uniform_init(3 * hidden, hidden, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.value.nrows()
    }

    /// Returns the `T x H` hidden sequence.
    pub fn forward(&self, x: ArrayView2<'_, f64>) -> (Array2<f64>, GruCache) {
        let t_len = x.nrows();
        let h = self.hidden();
        let mut gi = x.dot(&self.w_ih.value);
        gi += &self.b_ih.value;
        let mut states = Array2::zeros((t_len + 1, h));
        let mut r = Array2::zeros((t_len, h));
        let mut z = Array2::zeros((t_len, h));
        let mut n = Array2::zeros((t_len, h));
        let mut hn = Array2::zeros((t_len, h));
        for t in 0..t_len {
            let prev = states.row(t).to_owned();
            let mut gh = prev.dot(&self.w_hh.value);
            gh += &self.b_hh.value;
            let gi_t = gi.row(t);
            for k in 0..h {
                let rk = sigmoid(gi_t[k] + gh[k]);
                let zk = sigmoid(gi_t[h + k] + gh[h + k]);
                let nk = (gi_t[2 * h + k] + rk * gh[2 * h + k]).tanh();
                r[[t, k]] = rk;
                z[[t, k]] = zk;
                n[[t, k]] = nk;
                hn[[t, k]] = gh[2 * h + k];
                states[[t + 1, k]] = (1.0 - zk) * nk + zk * prev[k];
            }
        }
        let out = states.slice(s![1.., ..]).to_owned();
        (out, GruCache { states, r, z, n, hn })
    }

    pub fn backward(
        &mut self,
        x: ArrayView2<'_, f64>,
        cache: &GruCache,
        dout: ArrayView2<'_, f64>,
    ) -> Array2<f64> {
        let t_len = x.nrows();
        let h = self.hidden();
        let mut dgi = Array2::zeros((t_len, 3 * h));
        let mut dh_next = Array1::<f64>::zeros(h);
        let mut dgh = Array1::<f64>::zeros(3 * h);
        for t in (0..t_len).rev() {
            let prev = cache.states.row(t);
            let dh = &dout.row(t) + &dh_next;
            let mut dprev = Array1::<f64>::zeros(h);
            for k in 0..h {
                let (rk, zk, nk) = (cache.r[[t, k]], cache.z[[t, k]], cache.n[[t, k]]);
                let dn = dh[k] * (1.0 - zk);
                let dz = dh[k] * (prev[k] - nk);
                dprev[k] = dh[k] * zk;
                let dan = dn * (1.0 - nk * nk);
                let dr = dan * cache.hn[[t, k]];
                let dar = dr * rk * (1.0 - rk);
                let daz = dz * zk * (1.0 - zk);
                dgi[[t, k]] = dar;
                dgi[[t, h + k]] = daz;
                dgi[[t, 2 * h + k]] = dan;
                dgh[k] = dar;
                dgh[h + k] = daz;
                dgh[2 * h + k] = dan * rk;
            }
            // outer product prev^T dgh
            for i in 0..h {
                let p = prev[i];
                if p != 0.0 {
                    let mut row = self.w_hh.grad.row_mut(i);
                    row.scaled_add(p, &dgh);
                }
            }
            self.b_hh.grad += &dgh;
            dprev += &self.w_hh.value.dot(&dgh);
            dh_next = dprev;
        }
        ndarray::linalg::general_mat_mul(1.0, &x.t(), &dgi, 1.0, &mut self.w_ih.grad);
        self.b_ih.grad += &dgi.sum_axis(Axis(0));
        dgi.dot(&self.w_ih.value.t())
    }
}

impl Module for Gru {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamView<'_>)) {
        f(self.w_ih.view(join(prefix, "w_ih")));
        f(self.w_hh.view(join(prefix, "w_hh")));
        f(self.b_ih.view(join(prefix, "b_ih")));
        f(self.b_hh.view(join(prefix, "b_hh")));
    }
}

/// Forward and time-reversed GRUs with outputs concatenated `[fwd, bwd]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiGru {
    pub fwd: Gru,
    pub bwd: Gru,
}

#[derive(Debug, Clone)]
pub struct BiGruCache {
    rev_input: Array2<f64>,
    fwd: GruCache,
    bwd: GruCache,
}

fn reversed(x: ArrayView2<'_, f64>) -> Array2<f64> {
    x.slice(s![..;-1, ..]).to_owned()
}

impl BiGru {
    pub fn new<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            fwd: Gru::new(input, hidden, rng),
            bwd: Gru::new(input, hidden, rng),
        }
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> (Array2<f64>, BiGruCache) {
        let (yf, cf) = self.fwd.forward(x);
        let rev_input = reversed(x);
        let (yb, cb) = self.bwd.forward(rev_input.view());
        let yb = reversed(yb.view());
        let y = concatenate![Axis(1), yf, yb];
        (
            y,
            BiGruCache {
                rev_input,
                fwd: cf,
                bwd: cb,
            },
        )
    }

    pub fn backward(
        &mut self,
        x: ArrayView2<'_, f64>,
        cache: &BiGruCache,
        dy: ArrayView2<'_, f64>,
    ) -> Array2<f64> {
        let h = self.fwd.hidden();
        let dyf = dy.slice(s![.., ..h]);
        let dyb = reversed(dy.slice(s![.., h..]));
        let mut dx = self.fwd.backward(x, &cache.fwd, dyf);
        let dxb = self.bwd.backward(cache.rev_input.view(), &cache.bwd, dyb.view());
        dx += &reversed(dxb.view());
        dx
    }
}

impl Module for BiGru {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamView<'_>)) {
        self.fwd.visit_params(&join(prefix, "fwd"), f);
        self.bwd.visit_params(&join(prefix, "bwd"), f);
    }
}
