//! Fully-connected networks with leaky-rectifier activations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tape::{Gradients, Tape, Var};
use super::tensor::{gemm, Tensor};
use crate::{Error, Result};

/// Negative slope of the leaky rectifier used by every network in the crate.
pub const LEAKY_SLOPE: f64 = 0.2;

/// A trainable array plus its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamArray {
    pub value: Tensor,
    pub grad: Tensor,
}

impl ParamArray {
    pub fn new(value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        ParamArray { value, grad }
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Layer widths (input first, output last), activation slope and init seed.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    pub layer_widths: Vec<usize>,
    pub negative_slope: f64,
    pub seed: u64,
}

impl MlpSpec {
    pub fn new(layer_widths: Vec<usize>, seed: u64) -> Self {
        MlpSpec {
            layer_widths,
            negative_slope: LEAKY_SLOPE,
            seed,
        }
    }

    /// `depth` affine layers from `input` to `output` with `hidden` units in between.
    pub fn uniform(input: usize, hidden: usize, output: usize, depth: usize, seed: u64) -> Self {
        let mut widths = vec![input];
        widths.extend(std::iter::repeat_n(hidden, depth.saturating_sub(1)));
        widths.push(output);
        MlpSpec::new(widths, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 2 {
            return Err(Error::invalid("MlpSpec", "need at least input and output widths"));
        }
        if self.layer_widths.contains(&0) {
            return Err(Error::invalid("MlpSpec", "layer widths must be positive"));
        }
        if !(self.negative_slope > 0.0 && self.negative_slope < 1.0) {
            return Err(Error::invalid("MlpSpec", "negative slope must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_widths.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.layer_widths.len() - 1
    }
}

/// Parameters are stored as `[W0, b0, W1, b1, …]` with `Wk: [in, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    params: Vec<ParamArray>,
}

impl Mlp {
    /// Weights and biases uniform in ±1/√fan_in, drawn from `spec.seed`.
    pub fn new(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut params = Vec::with_capacity(2 * spec.num_layers());
        for pair in spec.layer_widths.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let w = (0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)).collect();
            let b = (0..fan_out).map(|_| rng.random_range(-bound..bound)).collect();
            params.push(ParamArray::new(Tensor::from_vec(&[fan_in, fan_out], w)?));
            params.push(ParamArray::new(Tensor::from_vec(&[fan_out], b)?));
        }
        Ok(Mlp { spec, params })
    }

    pub fn zeros(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let params = spec
            .layer_widths
            .windows(2)
            .flat_map(|p| {
                [
                    ParamArray::new(Tensor::zeros(&[p[0], p[1]])),
                    ParamArray::new(Tensor::zeros(&[p[1]])),
                ]
            })
            .collect();
        Ok(Mlp { spec, params })
    }

    /// Rebuilds a network from stored parameter values.
    pub fn from_params(spec: MlpSpec, values: Vec<Tensor>) -> Result<Self> {
        spec.validate()?;
        let expected: Vec<Vec<usize>> = spec
            .layer_widths
            .windows(2)
            .flat_map(|p| [vec![p[0], p[1]], vec![p[1]]])
            .collect();
        if values.len() != expected.len() {
            return Err(Error::invalid(
                "Mlp::from_params",
                format!("expected {} arrays, got {}", expected.len(), values.len()),
            ));
        }
        for (v, e) in values.iter().zip(&expected) {
            v.expect_shape("Mlp::from_params", e)?;
        }
        Ok(Mlp {
            spec,
            params: values.into_iter().map(ParamArray::new).collect(),
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &[ParamArray] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [ParamArray] {
        &mut self.params
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Copies every parameter value into one flat vector.
    pub fn flat_values(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.value.data().iter().copied()).collect()
    }

    pub fn set_flat_values(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_values() {
            return Err(Error::shape("Mlp::set_flat_values", &[self.num_values()], &[flat.len()]));
        }
        let mut off = 0;
        for p in &mut self.params {
            let n = p.value.numel();
            p.value.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    pub fn flat_grads(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.grad.data().iter().copied()).collect()
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(ParamArray::zero_grad);
    }

    fn check_input(&self, input: &Tensor) -> Result<usize> {
        let want = self.spec.input_width();
        match input.shape() {
            [n, w] if *w == want => Ok(*n),
            other => Err(Error::Shape {
                op: "mlp_forward",
                expected: vec![other.first().copied().unwrap_or(0), want],
                actual: other.to_vec(),
            }),
        }
    }

    /// Batched forward pass without recording: `input: [n, in] -> [n, out]`.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let n = self.check_input(input)?;
        let slope = self.spec.negative_slope;
        let layers = self.spec.num_layers();
        let mut x = input.clone();
        for l in 0..layers {
            let w = &self.params[2 * l].value;
            let b = &self.params[2 * l + 1].value;
            let (k, m) = (w.shape()[0], w.shape()[1]);
            let mut y = Tensor::zeros(&[n, m]);
            gemm(n, k, m, x.data(), w.data(), y.data_mut());
            for row in y.data_mut().chunks_mut(m) {
                for (o, bv) in row.iter_mut().zip(b.data()) {
                    *o += bv;
                }
            }
            if l + 1 < layers {
                y.data_mut().iter_mut().for_each(|v| {
                    if *v <= 0.0 {
                        *v *= slope
                    }
                });
            }
            x = y;
        }
        Ok(x)
    }

    /// Places the parameters on `tape` as leaves.
    pub fn bind(&self, tape: &mut Tape) -> BoundMlp {
        BoundMlp {
            vars: self.params.iter().map(|p| tape.leaf(p.value.clone())).collect(),
            slope: self.spec.negative_slope,
        }
    }

    /// Adds the gradients of a bound copy to each parameter's accumulator.
    pub fn accumulate_grads(&mut self, bound: &BoundMlp, grads: &Gradients) -> Result<()> {
        for (p, v) in self.params.iter_mut().zip(&bound.vars) {
            if let Some(g) = grads.get(*v) {
                p.grad.add_assign(g)?;
            }
        }
        Ok(())
    }
}

/// Parameters of an [`Mlp`] recorded on a tape.
#[derive(Debug, Clone)]
pub struct BoundMlp {
    vars: Vec<Var>,
    slope: f64,
}

impl BoundMlp {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    /// Recorded forward pass: `input: [n, in] -> [n, out]`.
    pub fn forward(&self, tape: &mut Tape, input: Var) -> Result<Var> {
        let layers = self.vars.len() / 2;
        let mut x = input;
        for l in 0..layers {
            let y = tape.matmul(x, self.vars[2 * l])?;
            let y = tape.add_bias(y, self.vars[2 * l + 1])?;
            x = if l + 1 < layers { tape.leaky_relu(y, self.slope) } else { y };
        }
        Ok(x)
    }
}
