//! Reverse-mode differentiation over a linear tape.
//!
//! Every operation appends one node holding its forward value and whatever it
//! needs for the backward pass. Nodes only reference earlier nodes, so walking
//! the tape backwards visits them in a valid reverse topological order.

use std::borrow::Cow;

use rand::Rng;

use super::ops::{self, ConvSpec, PoolArgmax, PoolSpec};
use super::tensor::{format_shape, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d { input: Var, weights: Var, bias: Var, spec: ConvSpec },
    MaxPool { input: Var, argmax: PoolArgmax },
    Relu { input: Var },
    Sigmoid { input: Var },
    Softmax { input: Var },
    Dense { input: Var, weights: Var, bias: Var },
    Dropout { input: Var, mask: Option<Vec<f64>> },
    Reshape { input: Var },
    SoftmaxCrossEntropy { logits: Var, grad: Vec<f64> },
}

struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op,
}

/// Records a forward computation and replays it backwards.
///
/// Parameters can be borrowed with [`Tape::param`] so recording a forward pass
/// never copies weights.
#[derive(Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
    grads: Vec<Option<Vec<f64>>>,
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    fn push(&mut self, value: Cow<'a, Tensor>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(Cow::Owned(value), Op::Leaf)
    }

    pub fn param(&mut self, value: &'a Tensor) -> Var {
        self.push(Cow::Borrowed(value), Op::Leaf)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    /// Gradient accumulated for `var` by the last backward pass.
    pub fn grad(&self, var: Var) -> Option<&[f64]> {
        self.grads[var.0].as_deref()
    }

    pub fn take_grad(&mut self, var: Var) -> Option<Vec<f64>> {
        self.grads[var.0].take()
    }

    pub fn conv2d(&mut self, input: Var, weights: Var, bias: Var, spec: ConvSpec) -> Result<Var> {
        let out = ops::conv2d_forward(self.value(input), self.value(weights), self.value(bias), &spec)?;
        Ok(self.push(Cow::Owned(out), Op::Conv2d { input, weights, bias, spec }))
    }

    pub fn maxpool(&mut self, input: Var, spec: PoolSpec) -> Result<Var> {
        let (out, argmax) = ops::maxpool_forward(self.value(input), &spec)?;
        Ok(self.push(Cow::Owned(out), Op::MaxPool { input, argmax }))
    }

    pub fn relu(&mut self, input: Var) -> Var {
        let out = ops::relu(self.value(input));
        self.push(Cow::Owned(out), Op::Relu { input })
    }

    pub fn sigmoid(&mut self, input: Var) -> Var {
        let out = ops::sigmoid(self.value(input));
        self.push(Cow::Owned(out), Op::Sigmoid { input })
    }

    pub fn softmax(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        if x.shape().len() != 1 {
            return Err(Error::shape("softmax", "rank-1 vector", format_shape(x.shape())));
        }
        let out = Tensor::new(x.shape(), ops::softmax(x.data()))?;
        Ok(self.push(Cow::Owned(out), Op::Softmax { input }))
    }

    pub fn dense(&mut self, input: Var, weights: Var, bias: Var) -> Result<Var> {
        let out = ops::dense_forward(self.value(input), self.value(weights), self.value(bias))?;
        Ok(self.push(Cow::Owned(out), Op::Dense { input, weights, bias }))
    }

    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        input: Var,
        rate: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        let (out, mask) = ops::dropout(self.value(input), rate, training, rng)?;
        Ok(self.push(Cow::Owned(out), Op::Dropout { input, mask }))
    }

    pub fn reshape(&mut self, input: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(input).clone().reshape(shape)?;
        Ok(self.push(Cow::Owned(out), Op::Reshape { input }))
    }

    pub fn flatten(&mut self, input: Var) -> Result<Var> {
        let n = self.value(input).len();
        self.reshape(input, &[n])
    }

    /// Scalar loss `-ln p[label]` where `p = softmax(logits)`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, label: usize) -> Result<Var> {
        let x = self.value(logits);
        if x.shape().len() != 1 {
            return Err(Error::shape("softmax_cross_entropy", "rank-1 logits", format_shape(x.shape())));
        }
        let (loss, _, grad) = ops::softmax_cross_entropy(x.data(), label)?;
        Ok(self.push(Cow::Owned(Tensor::from_vec(vec![loss])), Op::SoftmaxCrossEntropy { logits, grad }))
    }

    /// Backward pass from a scalar output (seed gradient 1).
    pub fn backward(&mut self, output: Var) -> Result<()> {
        let n = self.value(output).len();
        if n != 1 {
            return Err(Error::Usage(format!(
                "backward() needs a scalar output, got {n} elements; use backward_with"
            )));
        }
        self.backward_with(output, Tensor::from_vec(vec![1.0]))
    }

    /// Backward pass seeded with an explicit output gradient.
    pub fn backward_with(&mut self, output: Var, seed: Tensor) -> Result<()> {
        if seed.len() != self.value(output).len() {
            return Err(Error::shape(
                "backward seed",
                format_shape(self.value(output).shape()),
                format_shape(seed.shape()),
            ));
        }
        self.grads.iter_mut().for_each(|g| *g = None);
        self.grads[output.0] = Some(seed.into_data());
        for i in (0..=output.0).rev() {
            let Some(g) = self.grads[i].take() else { continue };
            self.propagate(i, &g)?;
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    fn accumulate(&mut self, var: Var, delta: Vec<f64>) {
        match &mut self.grads[var.0] {
            Some(g) => g.iter_mut().zip(&delta).for_each(|(a, d)| *a += d),
            slot @ None => *slot = Some(delta),
        }
    }

    fn propagate(&mut self, i: usize, g: &[f64]) -> Result<()> {
        let node = &self.nodes[i];
        if matches!(node.op, Op::Leaf) {
            return Ok(());
        }
        let grad_out = Tensor::new(node.value.shape(), g.to_vec())?;
        let mut deltas: Vec<(Var, Vec<f64>)> = Vec::with_capacity(3);
        match &node.op {
            Op::Leaf => unreachable!(),
            Op::Conv2d { input, weights, bias, spec } => {
                let grads = ops::conv2d_backward(
                    &grad_out,
                    Some(self.value(*input)),
                    self.value(*weights),
                    spec,
                )?;
                deltas.push((*input, grads.input.into_data()));
                deltas.push((*weights, grads.weights.into_data()));
                deltas.push((*bias, grads.bias.into_data()));
            }
            Op::MaxPool { input, argmax } => {
                deltas.push((*input, ops::maxpool_backward(&grad_out, argmax)?.into_data()));
            }
            Op::Relu { input } => {
                deltas.push((*input, ops::relu_backward(&grad_out, self.value(*input)).into_data()));
            }
            Op::Sigmoid { input } => {
                deltas.push((*input, ops::sigmoid_backward(&grad_out, &node.value).into_data()));
            }
            Op::Softmax { input } => {
                deltas.push((*input, ops::softmax_backward(g, node.value.data())));
            }
            Op::Dense { input, weights, bias } => {
                let grads = ops::dense_backward(&grad_out, self.value(*input), self.value(*weights))?;
                deltas.push((*input, grads.input.into_data()));
                deltas.push((*weights, grads.weights.into_data()));
                deltas.push((*bias, grads.bias.into_data()));
            }
            Op::Dropout { input, mask } => {
                let d = match mask {
                    Some(m) => g.iter().zip(m).map(|(a, b)| a * b).collect(),
                    None => g.to_vec(),
                };
                deltas.push((*input, d));
            }
            Op::Reshape { input } => deltas.push((*input, g.to_vec())),
            Op::SoftmaxCrossEntropy { logits, grad } => {
                deltas.push((*logits, grad.iter().map(|d| d * g[0]).collect()));
            }
        }
        for (var, d) in deltas {
            self.accumulate(var, d);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_chain_backward() {
        let w = Tensor::new(&[1, 2], vec![1.0, 1.0]).unwrap();
        let b = Tensor::new(&[1], vec![1.0]).unwrap();
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(vec![2.0, 3.0]));
        let wv = tape.param(&w);
        let bv = tape.param(&b);
        let y = tape.dense(x, wv, bv).unwrap();
        assert_eq!(tape.value(y).data(), &[6.0]);
        tape.backward(y).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[1.0, 1.0]);
        assert_eq!(tape.grad(wv).unwrap(), &[2.0, 3.0]);
        assert_eq!(tape.grad(bv).unwrap(), &[1.0]);
    }

    #[test]
    fn backward_resets_between_runs() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(vec![0.5, -2.0]));
        let a = tape.relu(x);
        let b = tape.sigmoid(x);
        tape.backward_with(a, Tensor::from_vec(vec![1.0, 1.0])).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[1.0, 0.0]);
        tape.backward_with(b, Tensor::from_vec(vec![1.0, 1.0])).unwrap();
        let s = ops::sigmoid_scalar(0.5);
        assert!((tape.grad(x).unwrap()[0] - s * (1.0 - s)).abs() < 1e-15);
        assert!(tape.grad(a).is_none());
    }

    #[test]
    fn backward_requires_scalar() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(vec![1.0, 2.0]));
        assert!(matches!(tape.backward(x), Err(Error::Usage(_))));
    }

    #[test]
    fn cross_entropy_gradient_is_p_minus_onehot() {
        let mut tape = Tape::new();
        let z = tape.leaf(Tensor::from_vec(vec![0.0, 0.0]));
        let loss = tape.softmax_cross_entropy(z, 1).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(z).unwrap(), &[0.5, -0.5]);
        assert!((tape.value(loss).data()[0] - std::f64::consts::LN_2).abs() < 1e-12);
    }
}
