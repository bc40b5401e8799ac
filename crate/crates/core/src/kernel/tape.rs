//! Reverse-mode autodiff over a linear record of executed ops.

use super::conv::{conv2d_backward, conv2d_forward, ConvSpec};
use super::upsample::{upsample_backward, upsample_forward};
use super::{ParamId, ParamStore, Scalar, Shape, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Input,
    Conv {
        x: Var,
        w: ParamId,
        b: Option<ParamId>,
        spec: ConvSpec,
    },
    Add(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    Upsample {
        x: Var,
        factor: usize,
    },
    /// Output channel `i` copies channel `map[i].1` of `inputs[map[i].0]`.
    Gather {
        inputs: Vec<Var>,
        map: Vec<(usize, usize)>,
    },
}

/// Every value produced during a forward pass, in execution order, plus the
/// op that produced it.
#[derive(Debug, Default)]
pub struct Tape<T = f32> {
    values: Vec<Tensor<T>>,
    ops: Vec<Op>,
}

/// Gradients of the seeded outputs with respect to every recorded value.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}

pub fn sigmoid_scalar<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            values: Vec::new(),
            ops: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.values[v.0]
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.values[v.0].shape()
    }

    fn push(&mut self, value: Tensor<T>, op: Op, what: &str) -> Result<Var> {
        value.check_finite(what)?;
        self.values.push(value);
        self.ops.push(op);
        Ok(Var(self.values.len() - 1))
    }

    pub fn input(&mut self, value: Tensor<T>) -> Result<Var> {
        self.push(value, Op::Input, "input")
    }

    pub fn conv2d(
        &mut self,
        store: &ParamStore<T>,
        x: Var,
        w: ParamId,
        b: Option<ParamId>,
        spec: ConvSpec,
    ) -> Result<Var> {
        let y = conv2d_forward(
            self.value(x),
            store.value(w),
            b.map(|b| store.value(b)),
            spec,
        )?;
        self.push(y, Op::Conv { x, w, b, spec }, "conv2d")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::config(format!(
                "cannot add {} and {}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let mut y = self.value(a).clone();
        y.add_assign(self.value(b));
        self.push(y, Op::Add(a, b), "add")
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let y = self.value(x).map(|v| v.max(T::zero()));
        self.push(y, Op::Relu(x), "relu")
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let y = self.value(x).map(sigmoid_scalar);
        self.push(y, Op::Sigmoid(x), "sigmoid")
    }

    pub fn upsample_bilinear(&mut self, x: Var, factor: usize) -> Result<Var> {
        let y = upsample_forward(self.value(x), factor)?;
        self.push(y, Op::Upsample { x, factor }, "upsample")
    }

    /// Builds a tensor whose channel `i` is channel `map[i].1` of `inputs[map[i].0]`.
    /// Sources may repeat; their gradients are summed on the way back.
    pub fn gather_channels(&mut self, inputs: &[Var], map: &[(usize, usize)]) -> Result<Var> {
        let first = match inputs.first() {
            Some(&v) => self.shape(v),
            None => return Err(Error::config("channel gather needs at least one input")),
        };
        for &v in inputs {
            if !self.shape(v).same_spatial(&first) {
                return Err(Error::config(format!(
                    "channel gather spatial mismatch: {} vs {first}",
                    self.shape(v)
                )));
            }
        }
        for &(i, c) in map {
            if i >= inputs.len() || c >= self.shape(inputs[i]).c {
                return Err(Error::config(format!(
                    "channel gather source ({i}, {c}) out of range"
                )));
            }
        }
        let out = Shape::new(first.n, map.len(), first.h, first.w);
        let mut y = Tensor::zeros(out);
        for n in 0..out.n {
            for (o, &(i, c)) in map.iter().enumerate() {
                let src = self.values[inputs[i].0].channel(n, c);
                y.channel_mut(n, o).copy_from_slice(src);
            }
        }
        self.push(
            y,
            Op::Gather {
                inputs: inputs.to_vec(),
                map: map.to_vec(),
            },
            "gather",
        )
    }

    /// Concatenates `inputs` along channels, then reorders so that output
    /// channel `i` is flat input channel `order[i]`. `order` must be a
    /// permutation of all input channels.
    pub fn concat_channels(&mut self, inputs: &[Var], order: &[usize]) -> Result<Var> {
        let mut flat = Vec::new();
        for (i, &v) in inputs.iter().enumerate() {
            for c in 0..self.shape(v).c {
                flat.push((i, c));
            }
        }
        if order.len() != flat.len() {
            return Err(Error::config(format!(
                "concat order has {} entries for {} channels",
                order.len(),
                flat.len()
            )));
        }
        let mut seen = vec![false; flat.len()];
        for &o in order {
            if o >= flat.len() || std::mem::replace(&mut seen[o], true) {
                return Err(Error::config("concat order is not a permutation"));
            }
        }
        let map: Vec<_> = order.iter().map(|&o| flat[o]).collect();
        self.gather_channels(inputs, &map)
    }

    /// On/off state of every ReLU unit recorded so far, in tape order.
    ///
    /// Two evaluations with equal patterns lie in the same linear region of
    /// all rectifiers, which finite-difference checks rely on.
    pub fn relu_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for op in &self.ops {
            if let Op::Relu(x) = op {
                out.extend(self.values[x.0].data().iter().map(|&v| v > T::zero()));
            }
        }
        out
    }

    /// Propagates `seeds` (d loss / d output) back through the tape,
    /// accumulating parameter gradients into `store`.
    pub fn backward(
        &self,
        store: &mut ParamStore<T>,
        seeds: Vec<(Var, Tensor<T>)>,
    ) -> Result<Gradients<T>> {
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.values.len()];
        for (v, g) in seeds {
            if g.shape() != self.shape(v) {
                return Err(Error::config(format!(
                    "seed gradient {} does not match value {}",
                    g.shape(),
                    self.shape(v)
                )));
            }
            g.check_finite("seed gradient")?;
            accumulate(&mut grads[v.0], g);
        }
        for idx in (0..self.ops.len()).rev() {
            if matches!(self.ops[idx], Op::Input) {
                continue;
            }
            let Some(dy) = grads[idx].take() else {
                continue;
            };
            match &self.ops[idx] {
                Op::Input => unreachable!(),
                Op::Conv { x, w, b, spec } => {
                    let xv = &self.values[x.0];
                    let mut dx = Tensor::zeros(xv.shape());
                    let mut dw = take_grad(store, *w);
                    let mut db = b.map(|b| take_grad(store, b));
                    conv2d_backward(
                        xv,
                        store.value(*w),
                        *spec,
                        &dy,
                        Some(&mut dx),
                        &mut dw,
                        db.as_mut(),
                    );
                    store.get_mut(*w).grad = dw;
                    if let (Some(b), Some(db)) = (b, db) {
                        store.get_mut(*b).grad = db;
                    }
                    accumulate(&mut grads[x.0], dx);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads[a.0], dy.clone());
                    accumulate(&mut grads[b.0], dy);
                }
                Op::Relu(x) => {
                    let xv = &self.values[x.0];
                    let mut dx = dy;
                    for (d, &v) in dx.data_mut().iter_mut().zip(xv.data()) {
                        if v <= T::zero() {
                            *d = T::zero();
                        }
                    }
                    accumulate(&mut grads[x.0], dx);
                }
                Op::Sigmoid(x) => {
                    let yv = &self.values[idx];
                    let mut dx = dy;
                    for (d, &s) in dx.data_mut().iter_mut().zip(yv.data()) {
                        *d *= s * (T::one() - s);
                    }
                    accumulate(&mut grads[x.0], dx);
                }
                Op::Upsample { x, factor } => {
                    let dx = upsample_backward(&dy, *factor, self.shape(*x));
                    accumulate(&mut grads[x.0], dx);
                }
                Op::Gather { inputs, map } => {
                    let mut parts: Vec<Tensor<T>> = inputs
                        .iter()
                        .map(|&v| Tensor::zeros(self.shape(v)))
                        .collect();
                    for n in 0..dy.shape().n {
                        for (o, &(i, c)) in map.iter().enumerate() {
                            let src = dy.channel(n, o);
                            for (d, &g) in parts[i].channel_mut(n, c).iter_mut().zip(src) {
                                *d += g;
                            }
                        }
                    }
                    for (&v, part) in inputs.iter().zip(parts) {
                        accumulate(&mut grads[v.0], part);
                    }
                }
            }
        }
        store.accumulated += 1;
        for p in store.iter() {
            p.grad.check_finite(&format!("gradient of {}", p.name))?;
        }
        Ok(Gradients { grads })
    }
}

fn take_grad<T: Scalar>(store: &mut ParamStore<T>, id: ParamId) -> Tensor<T> {
    std::mem::replace(&mut store.get_mut(id).grad, Tensor::zeros(Shape::new(0, 0, 0, 0)))
}

fn accumulate<T: Scalar>(slot: &mut Option<Tensor<T>>, g: Tensor<T>) {
    match slot {
        Some(acc) => acc.add_assign(&g),
        None => *slot = Some(g),
    }
}
