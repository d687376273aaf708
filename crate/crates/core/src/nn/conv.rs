use ndarray::{Array2, Array3, ArrayView2, ArrayView3, Ix1, Ix3};
use rand::Rng;

use super::linear::Linear;
use super::param::{join, uniform_init, Module, Param, ParamView};

/// Non-overlapping 2-D convolution (kernel == stride) over a channels-last
/// `T x F x C` map. Used for the stem and the inter-stage downsampling.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchConv2d {
    pub kernel: (usize, usize),
    pub in_ch: usize,
    pub proj: Linear,
}

impl PatchConv2d {
    pub fn new<R: Rng>(kernel: (usize, usize), in_ch: usize, out_ch: usize, rng: &mut R) -> Self {
        Self {
            kernel,
            in_ch,
            proj: Linear::new(kernel.0 * kernel.1 * in_ch, out_ch, rng),
        }
    }

    pub fn out_ch(&self) -> usize {
        self.proj.out_dim()
    }

    fn patches(&self, x: ArrayView3<'_, f64>) -> Array2<f64> {
        let (t, f, c) = x.dim();
        let (kt, kf) = self.kernel;
        let (to, fo) = (t / kt, f / kf);
        let mut p = Array2::zeros((to * fo, kt * kf * c));
        for ot in 0..to {
            for of in 0..fo {
                let mut row = p.row_mut(ot * fo + of);
                let row = row.as_slice_mut().expect("contiguous");
                for i in 0..kt {
                    for j in 0..kf {
                        let dst = &mut row[(i * kf + j) * c..(i * kf + j + 1) * c];
                        for (ci, d) in dst.iter_mut().enumerate() {
                            *d = x[[ot * kt + i, of * kf + j, ci]];
                        }
                    }
                }
            }
        }
        p
    }

    /// Input dims must be multiples of the kernel.
    pub fn forward(&self, x: ArrayView3<'_, f64>) -> (Array3<f64>, Array2<f64>) {
        let (t, f, _) = x.dim();
        let (to, fo) = (t / self.kernel.0, f / self.kernel.1);
        let patches = self.patches(x);
        let y = self.proj.forward(patches.view());
        let y = y
            .into_shape_with_order((to, fo, self.out_ch()))
            .expect("patch conv output shape");
        (y, patches)
    }

    pub fn backward(
        &mut self,
        patches: &Array2<f64>,
        in_dim: (usize, usize, usize),
        dy: ArrayView3<'_, f64>,
    ) -> Array3<f64> {
        let (to, fo, co) = dy.dim();
        let dy2 = dy
            .to_owned()
            .into_shape_with_order((to * fo, co))
            .expect("patch conv grad shape");
        let dp = self.proj.backward(patches.view(), dy2.view());
        let (kt, kf) = self.kernel;
        let c = in_dim.2;
        let mut dx = Array3::zeros(in_dim);
        for ot in 0..to {
            for of in 0..fo {
                let row = dp.row(ot * fo + of);
                for i in 0..kt {
                    for j in 0..kf {
                        for ci in 0..c {
                            dx[[ot * kt + i, of * kf + j, ci]] = row[(i * kf + j) * c + ci];
                        }
                    }
                }
            }
        }
        dx
    }

    /// Parameter gradients only.
    pub fn accumulate(&mut self, patches: &Array2<f64>, dy: ArrayView3<'_, f64>) {
        let (to, fo, co) = dy.dim();
        let dy2 = dy
            .to_owned()
            .into_shape_with_order((to * fo, co))
            .expect("patch conv grad shape");
        self.proj.accumulate(patches.view(), dy2.view());
    }
}

impl Module for PatchConv2d {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamView<'_>)) {
        self.proj.visit_params(prefix, f);
    }
}

/// Depthwise `k x k` convolution with zero "same" padding on a channels-last map.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthwiseConv2d {
    pub weight: Param<Ix3>,
    pub bias: Param<Ix1>,
}

impl DepthwiseConv2d {
    pub fn new<R: Rng>(kernel: usize, channels: usize, rng: &mut R) -> Self {
        assert!(kernel % 2 == 1, "depthwise kernel must be odd");
        Self {
            weight: uniform_init((kernel, kernel, channels), kernel * kernel, rng),
            bias: uniform_init(channels, kernel * kernel, rng),
        }
    }

    fn kernel(&self) -> usize {
        self.weight.value.dim().0
    }

    pub fn forward(&self, x: ArrayView3<'_, f64>) -> Array3<f64> {
        let (t, f, c) = x.dim();
        let k = self.kernel();
        let pad = k / 2;
        let xs = x.as_slice().expect("contiguous input");
        let w = self.weight.value.as_slice().expect("contiguous");
        let b = self.bias.value.as_slice().expect("contiguous");
        let mut y = Array3::zeros((t, f, c));
        let ys = y.as_slice_mut().expect("contiguous");
        for ot in 0..t {
            for of in 0..f {
                let out = &mut ys[(ot * f + of) * c..(ot * f + of + 1) * c];
                out.copy_from_slice(b);
                for i in 0..k {
                    let it = ot + i;
                    if it < pad || it - pad >= t {
                        continue;
                    }
                    let it = it - pad;
                    for j in 0..k {
                        let jf = of + j;
                        if jf < pad || jf - pad >= f {
                            continue;
                        }
                        let jf = jf - pad;
                        let xin = &xs[(it * f + jf) * c..(it * f + jf + 1) * c];
                        let wk = &w[(i * k + j) * c..(i * k + j + 1) * c];
                        for ((o, &xv), &wv) in out.iter_mut().zip(xin).zip(wk) {
                            *o += xv * wv;
                        }
                    }
                }
            }
        }
        y
    }

    pub fn backward(&mut self, x: ArrayView3<'_, f64>, dy: ArrayView3<'_, f64>) -> Array3<f64> {
        let (t, f, c) = x.dim();
        let k = self.kernel();
        let pad = k / 2;
        let xs = x.as_slice().expect("contiguous input");
        let dys = dy.as_standard_layout();
        let dys = dys.as_slice().expect("contiguous");
        let w = self.weight.value.as_slice().expect("contiguous");
        let dw = self.weight.grad.as_slice_mut().expect("contiguous");
        let db = self.bias.grad.as_slice_mut().expect("contiguous");
        let mut dx = Array3::zeros((t, f, c));
        let dxs = dx.as_slice_mut().expect("contiguous");
        for ot in 0..t {
            for of in 0..f {
                let g = &dys[(ot * f + of) * c..(ot * f + of + 1) * c];
                for (d, &gv) in db.iter_mut().zip(g) {
                    *d += gv;
                }
                for i in 0..k {
                    let it = ot + i;
                    if it < pad || it - pad >= t {
                        continue;
                    }
                    let it = it - pad;
                    for j in 0..k {
                        let jf = of + j;
                        if jf < pad || jf - pad >= f {
                            continue;
                        }
                        let jf = jf - pad;
                        let base = (it * f + jf) * c;
                        let wbase = (i * k + j) * c;
                        for ci in 0..c {
                            dxs[base + ci] += g[ci] * w[wbase + ci];
                            dw[wbase + ci] += g[ci] * xs[base + ci];
                        }
                    }
                }
            }
        }
        dx
    }
}

impl Module for DepthwiseConv2d {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamView<'_>)) {
        f(self.weight.view(join(prefix, "weight")));
        f(self.bias.view(join(prefix, "bias")));
    }
}

/// 1-D convolution over time with zero "same" padding, `T x C_in -> T x C_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    pub kernel: usize,
    pub in_ch: usize,
    pub proj: Linear,
}

pub type Conv1dCache = Array2<f64>;

impl Conv1d {
    pub fn new<R: Rng>(kernel: usize, in_ch: usize, out_ch: usize, rng: &mut R) -> Self {
        assert!(kernel % 2 == 1, "conv1d kernel must be odd");
        Self {
            kernel,
            in_ch,
            proj: Linear::new(kernel * in_ch, out_ch, rng),
        }
    }

    pub fn out_ch(&self) -> usize {
        self.proj.out_dim()
    }

    fn columns(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let (t, c) = x.dim();
        let k = self.kernel;
        if k == 1 {
            return x.to_owned();
        }
        let pad = k / 2;
        let mut cols = Array2::zeros((t, k * c));
        for ot in 0..t {
            for i in 0..k {
                let it = ot + i;
                if it < pad || it - pad >= t {
                    continue;
                }
                cols.row_mut(ot)
                    .slice_mut(ndarray::s![i * c..(i + 1) * c])
                    .assign(&x.row(it - pad));
            }
        }
        cols
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> (Array2<f64>, Conv1dCache) {
        let cols = self.columns(x);
        (self.proj.forward(cols.view()), cols)
    }

    pub fn backward(&mut self, cols: &Conv1dCache, dy: ArrayView2<'_, f64>) -> Array2<f64> {
        let dcols = self.proj.backward(cols.view(), dy);
        let k = self.kernel;
        if k == 1 {
            return dcols;
        }
        let t = dy.nrows();
        let c = self.in_ch;
        let pad = k / 2;
        let mut dx = Array2::zeros((t, c));
        for ot in 0..t {
            for i in 0..k {
                let it = ot + i;
                if it < pad || it - pad >= t {
                    continue;
                }
                let mut r = dx.row_mut(it - pad);
                r += &dcols.row(ot).slice(ndarray::s![i * c..(i + 1) * c]);
            }
        }
        dx
    }
}

impl Module for Conv1d {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamView<'_>)) {
        self.proj.visit_params(prefix, f);
    }
}
