use ndarray::{Array, Dimension, ShapeBuilder};
use rand::Rng;

/// A trainable tensor and its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<D: Dimension> {
    pub value: Array<f64, D>,
    pub grad: Array<f64, D>,
}

impl<D: Dimension> Param<D> {
    pub fn new(value: Array<f64, D>) -> Self {
        let grad = Array::zeros(value.raw_dim());
        Self { value, grad }
    }

    pub fn zeros<Sh: ShapeBuilder<Dim = D>>(shape: Sh) -> Self {
        Self::new(Array::zeros(shape))
    }

    pub fn filled<Sh: ShapeBuilder<Dim = D>>(shape: Sh, v: f64) -> Self {
        Self::new(Array::from_elem(shape, v))
    }

    pub fn view(&mut self, name: String) -> ParamView<'_> {
        let shape = self.value.shape().to_vec();
        ParamView {
            name,
            shape,
            value: self.value.as_slice_mut().expect("standard layout parameter"),
            grad: self.grad.as_slice_mut().expect("standard layout gradient"),
        }
    }
}

/// Flat mutable access to one parameter, handed out by [`Module::visit_params`].
pub struct ParamView<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: &'a mut [f64],
    pub grad: &'a mut [f64],
}

pub trait Module {
    /// Calls `f` once per parameter, in a fixed order, with dotted names
    /// rooted at `prefix`.
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamView<'_>));

    fn zero_grad(&mut self) {
        self.visit_params("", &mut |p| p.grad.fill(0.0));
    }

    fn num_params(&mut self) -> usize {
        let mut n = 0;
        self.visit_params("", &mut |p| n += p.value.len());
        n
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Uniform init in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
pub(crate) fn uniform_init<D, Sh, R>(shape: Sh, fan_in: usize, rng: &mut R) -> Param<D>
where
    D: Dimension,
    Sh: ShapeBuilder<Dim = D>,
    R: Rng,
{
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let mut value = Array::zeros(shape);
    value.mapv_inplace(|_: f64| rng.gen_range(-bound..bound));
    Param::new(value)
}
