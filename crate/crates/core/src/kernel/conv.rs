//! Grouped, strided, dilated 2-D convolution via im2col and GEMM.

use super::{Scalar, Shape, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub stride: usize,
    pub dilation: usize,
    pub groups: usize,
    pub pad: usize,
}

impl ConvSpec {
    pub const fn new(stride: usize, dilation: usize, groups: usize, pad: usize) -> Self {
        ConvSpec {
            stride,
            dilation,
            groups,
            pad,
        }
    }

    /// Stride-1, undilated, ungrouped, unpadded.
    pub const fn pointwise() -> Self {
        ConvSpec::new(1, 1, 1, 0)
    }

    /// Padding that keeps the spatial size for an odd kernel at stride 1.
    pub const fn same_pad(kernel: usize, dilation: usize) -> usize {
        dilation * (kernel - 1) / 2
    }
}

pub fn conv_output_size(input: usize, kernel: usize, spec: &ConvSpec) -> Option<usize> {
    let span = spec.dilation * (kernel - 1) + 1;
    let padded = input + 2 * spec.pad;
    if padded < span || spec.stride == 0 {
        return None;
    }
    Some((padded - span) / spec.stride + 1)
}

/// Checks `x` against weight shape `(cout, cin / groups, kh, kw)` and returns the output shape.
pub fn conv_shape(x: Shape, w: Shape, spec: &ConvSpec) -> Result<Shape> {
    if spec.groups == 0 || spec.stride == 0 || spec.dilation == 0 {
        return Err(Error::config(format!("invalid convolution spec {spec:?}")));
    }
    if !x.c.is_multiple_of(spec.groups) || !w.n.is_multiple_of(spec.groups) {
        return Err(Error::config(format!(
            "channels in={} out={} not divisible by groups={}",
            x.c, w.n, spec.groups
        )));
    }
    if x.c / spec.groups != w.c {
        return Err(Error::config(format!(
            "weight {w} expects {} input channels per group, input {x} has {}",
            w.c,
            x.c / spec.groups
        )));
    }
    let ho = conv_output_size(x.h, w.h, spec);
    let wo = conv_output_size(x.w, w.w, spec);
    match (ho, wo) {
        (Some(ho), Some(wo)) => Ok(Shape::new(x.n, w.n, ho, wo)),
        _ => Err(Error::config(format!(
            "kernel {}x{} with {spec:?} does not fit input {x}",
            w.h, w.w
        ))),
    }
}

struct Geometry {
    cin_g: usize,
    cout_g: usize,
    kh: usize,
    kw: usize,
    h: usize,
    w: usize,
    ho: usize,
    wo: usize,
    spec: ConvSpec,
}

impl Geometry {
    fn new(x: Shape, w: Shape, y: Shape, spec: ConvSpec) -> Self {
        Geometry {
            cin_g: w.c,
            cout_g: w.n / spec.groups,
            kh: w.h,
            kw: w.w,
            h: x.h,
            w: x.w,
            ho: y.h,
            wo: y.w,
            spec,
        }
    }

    fn patch(&self) -> usize {
        self.cin_g * self.kh * self.kw
    }

    fn pixels(&self) -> usize {
        self.ho * self.wo
    }

    /// 1x1, stride 1, no padding: the input plane block already is the column matrix.
    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.spec.stride == 1 && self.spec.pad == 0
    }

    /// Output columns `ox` whose input column `ox * s - pad + kj * d` lies inside the image.
    fn valid_range(&self, out: usize, inp: usize, k: usize) -> (usize, usize) {
        let s = self.spec.stride as isize;
        let off = k as isize * self.spec.dilation as isize - self.spec.pad as isize;
        // smallest o with o*s + off >= 0
        let lo = if off >= 0 { 0 } else { ((-off) + s - 1) / s };
        // largest o with o*s + off <= inp - 1
        let hi_num = inp as isize - 1 - off;
        let hi = if hi_num < 0 { -1 } else { hi_num / s };
        let lo = lo.min(out as isize) as usize;
        let hi_excl = (hi + 1).clamp(0, out as isize) as usize;
        (lo, hi_excl.max(lo))
    }

    fn im2col<T: Scalar>(&self, x: &[T], cols: &mut [T]) {
        let (s, d, pad) = (self.spec.stride, self.spec.dilation, self.spec.pad);
        let p = self.pixels();
        for c in 0..self.cin_g {
            let plane = &x[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ki in 0..self.kh {
                let (ylo, yhi) = self.valid_range(self.ho, self.h, ki);
                for kj in 0..self.kw {
                    let (xlo, xhi) = self.valid_range(self.wo, self.w, kj);
                    let row = ((c * self.kh + ki) * self.kw + kj) * p;
                    let dst = &mut cols[row..row + p];
                    dst.fill(T::zero());
                    for oy in ylo..yhi {
                        let iy = oy * s + ki * d - pad;
                        let src = &plane[iy * self.w..(iy + 1) * self.w];
                        let out = &mut dst[oy * self.wo..(oy + 1) * self.wo];
                        for ox in xlo..xhi {
                            out[ox] = src[ox * s + kj * d - pad];
                        }
                    }
                }
            }
        }
    }

    fn col2im<T: Scalar>(&self, cols: &[T], dx: &mut [T]) {
        let (s, d, pad) = (self.spec.stride, self.spec.dilation, self.spec.pad);
        let p = self.pixels();
        for c in 0..self.cin_g {
            let plane = &mut dx[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ki in 0..self.kh {
                let (ylo, yhi) = self.valid_range(self.ho, self.h, ki);
                for kj in 0..self.kw {
                    let (xlo, xhi) = self.valid_range(self.wo, self.w, kj);
                    let row = ((c * self.kh + ki) * self.kw + kj) * p;
                    let src = &cols[row..row + p];
                    for oy in ylo..yhi {
                        let iy = oy * s + ki * d - pad;
                        let dst = &mut plane[iy * self.w..(iy + 1) * self.w];
                        let inp = &src[oy * self.wo..(oy + 1) * self.wo];
                        for ox in xlo..xhi {
                            dst[ox * s + kj * d - pad] += inp[ox];
                        }
                    }
                }
            }
        }
    }
}

pub fn conv2d_forward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: Option<&Tensor<T>>,
    spec: ConvSpec,
) -> Result<Tensor<T>> {
    let ys = conv_shape(x.shape(), w.shape(), &spec)?;
    if let Some(b) = b {
        if b.shape().len() != ys.c {
            return Err(Error::config(format!(
                "bias {} does not match {} output channels",
                b.shape(),
                ys.c
            )));
        }
    }
    let g = Geometry::new(x.shape(), w.shape(), ys, spec);
    let mut y = Tensor::zeros(ys);
    let mut cols = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![T::zero(); g.patch() * g.pixels()]
    };
    let in_img = x.shape().image();
    let out_img = ys.image();
    let in_grp = g.cin_g * g.h * g.w;
    let out_grp = g.cout_g * g.pixels();
    let w_grp = g.cout_g * g.patch();
    for n in 0..ys.n {
        for grp in 0..spec.groups {
            let xs = &x.data()[n * in_img + grp * in_grp..][..in_grp];
            let ws = &w.data()[grp * w_grp..][..w_grp];
            let yd = &mut y.data_mut()[n * out_img + grp * out_grp..][..out_grp];
            let colm: &[T] = if g.is_pointwise() {
                xs
            } else {
                g.im2col(xs, &mut cols);
                &cols
            };
            T::gemm(g.cout_g, g.patch(), g.pixels(), ws, false, colm, false, T::zero(), yd);
        }
        if let Some(b) = b {
            for c in 0..ys.c {
                let bv = b.data()[c];
                y.channel_mut(n, c).iter_mut().for_each(|v| *v += bv);
            }
        }
    }
    Ok(y)
}

/// Accumulates gradients of a convolution into `dx`, `dw` and `db`.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    spec: ConvSpec,
    dy: &Tensor<T>,
    dx: Option<&mut Tensor<T>>,
    dw: &mut Tensor<T>,
    db: Option<&mut Tensor<T>>,
) {
    let ys = dy.shape();
    let g = Geometry::new(x.shape(), w.shape(), ys, spec);
    let in_img = x.shape().image();
    let out_img = ys.image();
    let in_grp = g.cin_g * g.h * g.w;
    let out_grp = g.cout_g * g.pixels();
    let w_grp = g.cout_g * g.patch();
    let mut cols = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![T::zero(); g.patch() * g.pixels()]
    };
    let mut dcols = vec![T::zero(); g.patch() * g.pixels()];
    let mut dx = dx;
    for n in 0..ys.n {
        for grp in 0..spec.groups {
            let xs = &x.data()[n * in_img + grp * in_grp..][..in_grp];
            let dys = &dy.data()[n * out_img + grp * out_grp..][..out_grp];
            let colm: &[T] = if g.is_pointwise() {
                xs
            } else {
                g.im2col(xs, &mut cols);
                &cols
            };
            let dws = &mut dw.data_mut()[grp * w_grp..][..w_grp];
            T::gemm(g.cout_g, g.pixels(), g.patch(), dys, false, colm, true, T::one(), dws);
            if let Some(dx) = dx.as_deref_mut() {
                let ws = &w.data()[grp * w_grp..][..w_grp];
                let dxs = &mut dx.data_mut()[n * in_img + grp * in_grp..][..in_grp];
                if g.is_pointwise() {
                    T::gemm(g.patch(), g.cout_g, g.pixels(), ws, true, dys, false, T::one(), dxs);
                } else {
                    T::gemm(g.patch(), g.cout_g, g.pixels(), ws, true, dys, false, T::zero(), &mut dcols);
                    g.col2im(&dcols, dxs);
                }
            }
        }
    }
    if let Some(db) = db {
        for n in 0..ys.n {
            for c in 0..ys.c {
                let s: T = dy.channel(n, c).iter().copied().sum();
                db.data_mut()[c] += s;
            }
        }
    }
}
