//! Tape-based reverse-mode autodiff. Operations execute eagerly and append a
//! node to the tape; `backward` walks the tape in reverse, which is a valid
//! reverse topological order because inputs always precede their consumers.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::ops::{self, Padding};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ValueId(usize);

enum Node {
    Conv2d {
        input: ValueId,
        weights: ValueId,
        bias: Option<ValueId>,
        stride: usize,
        padding: Padding,
        out: ValueId,
    },
    MaxPool2 {
        input: ValueId,
        arg: Vec<u32>,
        out: ValueId,
    },
    AvgPool2 {
        input: ValueId,
        out: ValueId,
    },
    Upsample2 {
        input: ValueId,
        out: ValueId,
    },
    Relu {
        input: ValueId,
        out: ValueId,
    },
    Sigmoid {
        input: ValueId,
        out: ValueId,
    },
    Concat {
        a: ValueId,
        b: ValueId,
        split: usize,
        out: ValueId,
    },
    Add {
        a: ValueId,
        b: ValueId,
        out: ValueId,
    },
    Scale {
        input: ValueId,
        factor: f64,
        out: ValueId,
    },
    Bce {
        pred: ValueId,
        target: ValueId,
        out: ValueId,
    },
}

pub struct Graph<T: Scalar> {
    vals: Vec<Option<Tensor<T>>>,
    shapes: Vec<Vec<usize>>,
    grads: Vec<Option<Tensor<T>>>,
    nodes: Vec<Node>,
    macs: u64,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            vals: Vec::new(),
            shapes: Vec::new(),
            grads: Vec::new(),
            nodes: Vec::new(),
            macs: 0,
        }
    }

    /// Multiply-accumulates performed by convolution kernels so far.
    pub fn macs(&self) -> u64 {
        self.macs
    }

    pub fn leaf(&mut self, t: Tensor<T>) -> ValueId {
        self.push_value(t)
    }

    fn push_value(&mut self, t: Tensor<T>) -> ValueId {
        let id = ValueId(self.vals.len());
        self.shapes.push(t.shape().to_vec());
        self.vals.push(Some(t));
        self.grads.push(None);
        id
    }

    fn push_checked(&mut self, t: Tensor<T>) -> Result<ValueId> {
        if !t.is_all_finite() {
            return Err(Error::Numeric(format!(
                "non-finite values in op output of shape {:?}",
                t.shape()
            )));
        }
        Ok(self.push_value(t))
    }

    pub fn value(&self, id: ValueId) -> &Tensor<T> {
        self.vals[id.0].as_ref().expect("value was freed")
    }

    pub fn take_value(&mut self, id: ValueId) -> Tensor<T> {
        self.vals[id.0].take().expect("value was freed")
    }

    /// Index of the next value to be created; pairs with `free_range`.
    pub fn mark(&self) -> usize {
        self.vals.len()
    }

    /// Drop the storage of one value (inference-only graphs).
    pub fn free_value(&mut self, id: ValueId) {
        self.vals[id.0] = None;
    }

    /// Drop storage of every value created at or after `mark`, except ids in
    /// `keep`. Only valid when no backward pass will run on this graph.
    pub fn free_range(&mut self, mark: usize, keep: &[ValueId]) {
        for i in mark..self.vals.len() {
            if !keep.contains(&ValueId(i)) {
                self.vals[i] = None;
            }
        }
    }

    pub fn grad(&self, id: ValueId) -> Option<&Tensor<T>> {
        self.grads[id.0].as_ref()
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            *g = None;
        }
    }

    pub fn conv2d(
        &mut self,
        input: ValueId,
        weights: ValueId,
        bias: Option<ValueId>,
        stride: usize,
        padding: Padding,
    ) -> Result<ValueId> {
        let mut macs = 0u64;
        let out = ops::conv2d(
            self.value(input),
            self.value(weights),
            bias.map(|b| self.value(b)),
            stride,
            padding,
            &mut macs,
        )?;
        self.macs += macs;
        let out = self.push_checked(out)?;
        self.nodes.push(Node::Conv2d {
            input,
            weights,
            bias,
            stride,
            padding,
            out,
        });
        Ok(out)
    }

    pub fn maxpool2(&mut self, input: ValueId) -> Result<ValueId> {
        let (out, arg) = ops::maxpool2(self.value(input))?;
        let out = self.push_checked(out)?;
        self.nodes.push(Node::MaxPool2 { input, arg, out });
        Ok(out)
    }

    pub fn avgpool2(&mut self, input: ValueId) -> Result<ValueId> {
        let out = ops::avgpool2(self.value(input))?;
        let out = self.push_checked(out)?;
        self.nodes.push(Node::AvgPool2 { input, out });
        Ok(out)
    }

    pub fn upsample_nearest2(&mut self, input: ValueId) -> Result<ValueId> {
        let out = ops::upsample_nearest2(self.value(input))?;
        let out = self.push_checked(out)?;
        self.nodes.push(Node::Upsample2 { input, out });
        Ok(out)
    }

    pub fn relu(&mut self, input: ValueId) -> Result<ValueId> {
        let out = ops::relu(self.value(input));
        let out = self.push_checked(out)?;
        self.nodes.push(Node::Relu { input, out });
        Ok(out)
    }

    pub fn sigmoid(&mut self, input: ValueId) -> Result<ValueId> {
        let out = ops::sigmoid(self.value(input));
        let out = self.push_checked(out)?;
        self.nodes.push(Node::Sigmoid { input, out });
        Ok(out)
    }

    pub fn concat_channels(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let split = self.value(a).shape()[0];
        let out = ops::concat_channels(self.value(a), self.value(b))?;
        let out = self.push_checked(out)?;
        self.nodes.push(Node::Concat { a, b, split, out });
        Ok(out)
    }

    pub fn add(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let out = ops::add(self.value(a), self.value(b))?;
        let out = self.push_checked(out)?;
        self.nodes.push(Node::Add { a, b, out });
        Ok(out)
    }

    pub fn scale(&mut self, input: ValueId, factor: f64) -> Result<ValueId> {
        let out = ops::scale(self.value(input), T::from_f64(factor));
        let out = self.push_checked(out)?;
        self.nodes.push(Node::Scale { input, factor, out });
        Ok(out)
    }

    pub fn bce_loss(&mut self, pred: ValueId, target: ValueId) -> Result<ValueId> {
        let out = ops::bce_loss(self.value(pred), self.value(target))?;
        let out = self.push_checked(out)?;
        self.nodes.push(Node::Bce { pred, target, out });
        Ok(out)
    }

    fn add_grad(&mut self, id: ValueId, g: Tensor<T>) {
        match &mut self.grads[id.0] {
            Some(existing) => {
                for (a, &b) in existing.data_mut().iter_mut().zip(g.data()) {
                    *a += b;
                }
            }
            slot @ None => *slot = Some(g),
        }
    }

    /// Reverse pass from a scalar loss. Grads accumulate until `zero_grads`.
    pub fn backward(&mut self, loss: ValueId) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        // seed only once so repeated backward passes accumulate leaf grads
        // with a unit seed each time
        if self.grads[loss.0].is_none() {
            self.grads[loss.0] = Some(Tensor::scalar(T::ONE));
        }
        for idx in (0..self.nodes.len()).rev() {
            // take the node out to appease the borrow checker, put it back after
            let node = core::mem::replace(
                &mut self.nodes[idx],
                Node::Add {
                    a: ValueId(0),
                    b: ValueId(0),
                    out: ValueId(0),
                },
            );
            self.backward_node(&node)?;
            self.nodes[idx] = node;
        }
        Ok(())
    }

    fn backward_node(&mut self, node: &Node) -> Result<()> {
        match node {
            Node::Conv2d {
                input,
                weights,
                bias,
                stride,
                padding,
                out,
            } => {
                let Some(go) = self.grads[out.0].clone() else {
                    return Ok(());
                };
                let (gin, gw, gb) = ops::conv2d_backward(
                    self.value(*input),
                    self.value(*weights),
                    &go,
                    *stride,
                    *padding,
                )?;
                self.add_grad(*input, gin);
                self.add_grad(*weights, gw);
                if let Some(b) = bias {
                    self.add_grad(*b, gb);
                }
            }
            Node::MaxPool2 { input, arg, out } => {
                let Some(go) = self.grads[out.0].clone() else {
                    return Ok(());
                };
                let shape = self.shapes[input.0].clone();
                let gin = ops::maxpool2_backward(&shape, arg, &go);
                self.add_grad(*input, gin);
            }
            Node::AvgPool2 { input, out } => {
                let Some(go) = self.grads[out.0].clone() else {
                    return Ok(());
                };
                let shape = self.shapes[input.0].clone();
                self.add_grad(*input, ops::avgpool2_backward(&shape, &go));
            }
            Node::Upsample2 { input, out } => {
                let Some(go) = self.grads[out.0].clone() else {
                    return Ok(());
                };
                let shape = self.shapes[input.0].clone();
                self.add_grad(*input, ops::upsample_nearest2_backward(&shape, &go));
            }
            Node::Relu { input, out } => {
                let Some(go) = self.grads[out.0].clone() else {
                    return Ok(());
                };
                let gin = ops::relu_backward(self.value(*input), &go);
                self.add_grad(*input, gin);
            }
            Node::Sigmoid { input, out } => {
                let Some(go) = self.grads[out.0].clone() else {
                    return Ok(());
                };
                let gin = ops::sigmoid_backward(self.value(*out), &go);
                self.add_grad(*input, gin);
            }
            Node::Concat { a, b, split, out } => {
                let Some(go) = self.grads[out.0].clone() else {
                    return Ok(());
                };
                let shape = go.shape();
                let (h, w) = (shape[1], shape[2]);
                let n_a = split * h * w;
                let ga = Tensor::new(&[*split, h, w], go.data()[..n_a].to_vec())?;
                let gb = Tensor::new(&[shape[0] - split, h, w], go.data()[n_a..].to_vec())?;
                self.add_grad(*a, ga);
                self.add_grad(*b, gb);
            }
            Node::Add { a, b, out } => {
                let Some(go) = self.grads[out.0].clone() else {
                    return Ok(());
                };
                self.add_grad(*a, go.clone());
                self.add_grad(*b, go);
            }
            Node::Scale { input, factor, out } => {
                let Some(go) = self.grads[out.0].clone() else {
                    return Ok(());
                };
                self.add_grad(*input, ops::scale(&go, T::from_f64(*factor)));
            }
            Node::Bce { pred, target, out } => {
                let Some(go) = self.grads[out.0].clone() else {
                    return Ok(());
                };
                let gin = ops::bce_loss_backward(self.value(*pred), self.value(*target), go.item()?);
                self.add_grad(*pred, gin);
            }
        }
        Ok(())
    }
}
