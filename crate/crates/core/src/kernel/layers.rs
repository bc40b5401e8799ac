use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::conv::ConvSpec;
use super::{ParamId, ParamStore, Scalar, Shape, Tape, Tensor, Var};
use crate::error::Result;

/// How a freshly registered weight tensor is filled.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WeightInit {
    /// Zero-mean normal with variance `2 / fan_in`.
    HeNormal,
    Constant(f64),
}

/// Deterministic stream for the parameter about to be registered at `index`.
pub fn param_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn init_tensor<T: Scalar>(shape: Shape, init: WeightInit, rng: &mut ChaCha8Rng) -> Tensor<T> {
    match init {
        WeightInit::Constant(v) => Tensor::full(shape, T::of(v)),
        WeightInit::HeNormal => {
            let fan_in = (shape.c * shape.h * shape.w).max(1);
            let dist = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("valid std");
            let data = (0..shape.len()).map(|_| T::of(dist.sample(rng))).collect();
            Tensor::from_vec(shape, data).expect("length matches shape")
        }
    }
}

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub spec: ConvSpec,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        seed: u64,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        spec: ConvSpec,
        init: WeightInit,
    ) -> Self {
        let wshape = Shape::new(out_channels, in_channels / spec.groups, kernel, kernel);
        let mut rng = param_rng(seed, store.len());
        let weight = store.add(format!("{name}.weight"), init_tensor(wshape, init, &mut rng));
        let bias = store.add(
            format!("{name}.bias"),
            Tensor::zeros(Shape::new(1, out_channels, 1, 1)),
        );
        Conv2d {
            weight,
            bias: Some(bias),
            spec,
        }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        tape.conv2d(store, x, self.weight, self.bias, self.spec)
    }
}

/// Two 3x3 convolutions plus an identity or 1x1-projected shortcut, with a
/// ReLU after the first convolution and after the addition.
#[derive(Clone, Debug)]
pub struct ResidualBlock {
    pub conv_a: Conv2d,
    pub conv_b: Conv2d,
    pub projection: Option<Conv2d>,
}

impl ResidualBlock {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        seed: u64,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        stride: usize,
        dilation: usize,
    ) -> Self {
        let pad = ConvSpec::same_pad(3, dilation);
        let conv_a = Conv2d::new(
            store,
            seed,
            &format!("{name}.conv_a"),
            in_channels,
            out_channels,
            3,
            ConvSpec::new(stride, dilation, 1, pad),
            WeightInit::HeNormal,
        );
        let conv_b = Conv2d::new(
            store,
            seed,
            &format!("{name}.conv_b"),
            out_channels,
            out_channels,
            3,
            ConvSpec::new(1, dilation, 1, pad),
            WeightInit::HeNormal,
        );
        let projection = (stride != 1 || in_channels != out_channels).then(|| {
            Conv2d::new(
                store,
                seed,
                &format!("{name}.proj"),
                in_channels,
                out_channels,
                1,
                ConvSpec::new(stride, 1, 1, 0),
                WeightInit::HeNormal,
            )
        });
        ResidualBlock {
            conv_a,
            conv_b,
            projection,
        }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let a = self.conv_a.forward(tape, store, x)?;
        let a = tape.relu(a)?;
        let b = self.conv_b.forward(tape, store, a)?;
        let shortcut = match &self.projection {
            Some(p) => p.forward(tape, store, x)?,
            None => x,
        };
        let sum = tape.add(b, shortcut)?;
        tape.relu(sum)
    }
}
