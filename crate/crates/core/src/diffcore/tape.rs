//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Every operation appends a node holding its forward value. [`Tape::backward`]
//! walks the nodes in reverse and returns a [`Gradients`] table with the
//! derivative of the scalar loss for every node that influenced it.
//!
//! A tape may be backpropagated exactly once; a second call is rejected with
//! [`Error::AlreadyBackpropagated`]. Build a fresh tape for every forward pass.
//!
//! Operations the tape does not know natively (compositing, warping, SSIM and
//! so on) are recorded with [`Tape::custom`], which takes the forward value and
//! a vector-Jacobian closure.

use super::tensor::{gemm, gemm_a_bt_acc, gemm_at_b_acc, Tensor};
use crate::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Vector-Jacobian product of a custom node: given the upstream gradient and
/// the input values, returns one gradient per input (same shapes as inputs).
pub type VjpFn = Box<dyn Fn(&Tensor, &[&Tensor]) -> Vec<Tensor>>;

enum Op {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    LeakyRelu(Var, f64),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    Mean(Var),
    Custom { inputs: Vec<Var>, vjp: VjpFn },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// A computation record.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Gradients of a scalar loss with respect to every node of a tape.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Records an input. Leaves receive gradients like any other node.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// `[m, k] · [k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::Shape {
                op: "matmul",
                expected: vec![sa.get(1).copied().unwrap_or(0), sb.get(1).copied().unwrap_or(0)],
                actual: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = Tensor::zeros(&[m, n]);
        gemm(m, k, n, self.value(a).data(), self.value(b).data(), out.data_mut());
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// Adds a `[k]` bias to every row of `[n, k]`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (sx, sb) = (self.shape(x), self.shape(bias));
        if sx.len() != 2 || sb != [sx[1]] {
            return Err(Error::shape("add_bias", &[sx.get(1).copied().unwrap_or(0)], sb));
        }
        let k = sx[1];
        let mut out = self.value(x).clone();
        let b = self.value(bias).data();
        for row in out.data_mut().chunks_mut(k) {
            for (o, bv) in row.iter_mut().zip(b) {
                *o += bv;
            }
        }
        Ok(self.push(out, Op::AddBias(x, bias)))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let out = self.value(x).map(|v| if v > 0.0 { v } else { slope * v });
        self.push(out, Op::LeakyRelu(x, slope))
    }

    fn binary(&mut self, a: Var, b: Var, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::shape(op, sa, sb));
        }
        let va = self.value(a).data();
        let vb = self.value(b).data();
        let data = va.iter().zip(vb).map(|(&x, &y)| f(x, y)).collect();
        Tensor::from_vec(self.shape(a), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary(a, b, "add", |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let out = self.value(x).map(|v| v * factor);
        self.push(out, Op::Scale(x, factor))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum());
        self.push(out, Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let n = t.numel().max(1) as f64;
        let out = Tensor::scalar(t.sum() / n);
        self.push(out, Op::Mean(x))
    }

    /// Mean of squared entries of `a - b`.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.sub(a, b)?;
        let sq = self.mul(d, d)?;
        Ok(self.mean(sq))
    }

    /// Records a node whose forward value was computed by the caller.
    pub fn custom(&mut self, inputs: &[Var], value: Tensor, vjp: VjpFn) -> Var {
        self.push(
            value,
            Op::Custom {
                inputs: inputs.to_vec(),
                vjp,
            },
        )
    }

    /// Backpropagates from the scalar `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::AlreadyBackpropagated);
        }
        let loss_value = self.value(loss);
        if loss_value.numel() != 1 {
            return Err(Error::NonScalarLoss(loss_value.shape().to_vec()));
        }
        if !loss_value.is_finite() {
            return Err(Error::NonFinite("backward: loss"));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.nodes[loss.0].value.shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let contributions: Vec<(Var, Tensor)> = match &node.op {
                Op::Leaf => Vec::new(),
                Op::MatMul(a, b) => {
                    let va = &self.nodes[a.0].value;
                    let vb = &self.nodes[b.0].value;
                    let (m, k, n) = (va.shape()[0], va.shape()[1], vb.shape()[1]);
                    let mut ga = Tensor::zeros(va.shape());
                    gemm_a_bt_acc(m, n, k, g.data(), vb.data(), ga.data_mut());
                    let mut gb = Tensor::zeros(vb.shape());
                    gemm_at_b_acc(k, m, n, va.data(), g.data(), gb.data_mut());
                    vec![(*a, ga), (*b, gb)]
                }
                Op::AddBias(x, bias) => {
                    let k = self.nodes[bias.0].value.numel();
                    let mut gb = Tensor::zeros(&[k]);
                    for row in g.data().chunks(k) {
                        for (o, v) in gb.data_mut().iter_mut().zip(row) {
                            *o += v;
                        }
                    }
                    vec![(*x, g.clone()), (*bias, gb)]
                }
                Op::LeakyRelu(x, slope) => {
                    let vx = &self.nodes[x.0].value;
                    let data = vx
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&xv, &gv)| if xv > 0.0 { gv } else { slope * gv })
                        .collect();
                    vec![(*x, Tensor::from_vec(vx.shape(), data)?)]
                }
                Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
                Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.map(|v| -v))],
                Op::Mul(a, b) => {
                    let va = &self.nodes[a.0].value;
                    let vb = &self.nodes[b.0].value;
                    let ga = g.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
                    let gb = g.data().iter().zip(va.data()).map(|(x, y)| x * y).collect();
                    vec![
                        (*a, Tensor::from_vec(va.shape(), ga)?),
                        (*b, Tensor::from_vec(vb.shape(), gb)?),
                    ]
                }
                Op::Scale(x, f) => vec![(*x, g.map(|v| v * f))],
                Op::Sum(x) => {
                    let gv = g.data()[0];
                    vec![(*x, Tensor::full(self.nodes[x.0].value.shape(), gv))]
                }
                Op::Mean(x) => {
                    let shape = self.nodes[x.0].value.shape();
                    let n = self.nodes[x.0].value.numel().max(1) as f64;
                    vec![(*x, Tensor::full(shape, g.data()[0] / n))]
                }
                Op::Custom { inputs, vjp } => {
                    let values: Vec<&Tensor> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
                    let out = vjp(&g, &values);
                    debug_assert_eq!(out.len(), inputs.len());
                    inputs.iter().copied().zip(out).collect()
                }
            };
            for (var, contribution) in contributions {
                match &mut grads[var.0] {
                    Some(existing) => existing.add_assign(&contribution)?,
                    slot @ None => *slot = Some(contribution),
                }
            }
            grads[idx] = Some(g);
        }

        if grads.iter().flatten().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("backward: gradient"));
        }
        Ok(Gradients { grads })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_vector_has_unit_gradient() {
        let mut tape = Tape::new();
        let p = tape.leaf(Tensor::from_vec(&[4], vec![1.0, -2.0, 3.5, 0.0]).unwrap());
        let loss = tape.sum(p);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(p).unwrap().data(), &[1.0; 4]);
    }

    #[test]
    fn half_squared_norm_gradient_is_identity() {
        let values = vec![0.5, -1.25, 2.0];
        let mut tape = Tape::new();
        let p = tape.leaf(Tensor::from_vec(&[3], values.clone()).unwrap());
        let sq = tape.mul(p, p).unwrap();
        let s = tape.sum(sq);
        let loss = tape.scale(s, 0.5);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(p).unwrap().data(), values.as_slice());
    }

    #[test]
    fn second_backward_is_rejected() {
        let mut tape = Tape::new();
        let p = tape.leaf(Tensor::scalar(2.0));
        let loss = tape.scale(p, 3.0);
        tape.backward(loss).unwrap();
        assert!(matches!(tape.backward(loss), Err(Error::AlreadyBackpropagated)));
    }

    #[test]
    fn non_scalar_backward_is_rejected() {
        let mut tape = Tape::new();
        let p = tape.leaf(Tensor::zeros(&[2]));
        assert!(matches!(tape.backward(p), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn matmul_gradients_match_hand_derivation() {
        // loss = sum(A B); dA = 1 Bᵀ, dB = Aᵀ 1
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::from_vec(&[2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap());
        let b = tape.leaf(Tensor::from_vec(&[3, 2], vec![1., -1., 0.5, 2., -3., 1.]).unwrap());
        let c = tape.matmul(a, b).unwrap();
        let loss = tape.sum(c);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(a).unwrap().data(), &[0., 2.5, -2., 0., 2.5, -2.]);
        assert_eq!(g.get(b).unwrap().data(), &[5., 5., 7., 7., 9., 9.]);
    }

    #[test]
    fn shared_inputs_accumulate() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(3.0));
        let y = tape.add(x, x).unwrap();
        let z = tape.mul(y, x).unwrap(); // 2x²
        let g = tape.backward(z).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[12.0]);
    }
}
