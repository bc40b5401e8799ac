//! Fixed bilinear up-sampling as a channel-wise transposed convolution.
//!
//! The kernel is the classic FCN/HED bilinear filter of size `2f - f % 2`,
//! applied with stride `f` and padding `ceil((f - 1) / 2)`, which maps an
//! `h x w` plane to exactly `fh x fw`. The 2-D kernel is the outer product of
//! a 1-D tent, so it is applied as two 1-D passes.

use super::{Scalar, Shape, Tensor};
use crate::error::{Error, Result};

pub const SUPPORTED_FACTORS: [usize; 4] = [1, 2, 4, 8];

pub fn kernel_size(factor: usize) -> usize {
    2 * factor - factor % 2
}

pub fn padding(factor: usize) -> usize {
    factor / 2
}

/// 1-D bilinear taps of length [`kernel_size`].
pub fn bilinear_taps(factor: usize) -> Vec<f64> {
    let k = kernel_size(factor);
    let f = k.div_ceil(2);
    let center = if k % 2 == 1 {
        (f - 1) as f64
    } else {
        f as f64 - 0.5
    };
    (0..k)
        .map(|i| 1.0 - (i as f64 - center).abs() / f as f64)
        .collect()
}

/// Full 2-D kernel `taps[i] * taps[j]`, row-major.
pub fn bilinear_kernel(factor: usize) -> Vec<f64> {
    let t = bilinear_taps(factor);
    t.iter()
        .flat_map(|a| t.iter().map(move |b| a * b))
        .collect()
}

/// For every output index, the `(input index, weight)` pairs feeding it.
fn tap_map<T: Scalar>(len: usize, factor: usize) -> Vec<Vec<(usize, T)>> {
    let taps = bilinear_taps(factor);
    let k = taps.len() as isize;
    let pad = padding(factor) as isize;
    let f = factor as isize;
    (0..len * factor)
        .map(|o| {
            (0..len)
                .filter_map(|i| {
                    let t = o as isize + pad - i as isize * f;
                    (0..k)
                        .contains(&t)
                        .then(|| (i, T::of(taps[t as usize])))
                })
                .collect()
        })
        .collect()
}

fn check_factor(factor: usize) -> Result<()> {
    if SUPPORTED_FACTORS.contains(&factor) {
        Ok(())
    } else {
        Err(Error::config(format!(
            "upsample factor {factor} not in {SUPPORTED_FACTORS:?}"
        )))
    }
}

pub fn upsample_forward<T: Scalar>(x: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    check_factor(factor)?;
    let s = x.shape();
    if factor == 1 {
        return Ok(x.clone());
    }
    let out = Shape::new(s.n, s.c, s.h * factor, s.w * factor);
    let rows = tap_map::<T>(s.h, factor);
    let cols = tap_map::<T>(s.w, factor);
    let mut y = Tensor::zeros(out);
    let mut tmp = vec![T::zero(); s.h * out.w];
    for n in 0..s.n {
        for c in 0..s.c {
            let src = x.channel(n, c);
            for iy in 0..s.h {
                let line = &src[iy * s.w..(iy + 1) * s.w];
                for (ox, taps) in cols.iter().enumerate() {
                    let mut acc = T::zero();
                    for &(ix, wt) in taps {
                        acc += wt * line[ix];
                    }
                    tmp[iy * out.w + ox] = acc;
                }
            }
            let dst = y.channel_mut(n, c);
            for (oy, taps) in rows.iter().enumerate() {
                let line = &mut dst[oy * out.w..(oy + 1) * out.w];
                for &(iy, wt) in taps {
                    let t = &tmp[iy * out.w..(iy + 1) * out.w];
                    for (o, &v) in line.iter_mut().zip(t) {
                        *o += wt * v;
                    }
                }
            }
        }
    }
    Ok(y)
}

/// Gradient of [`upsample_forward`] with respect to its input.
pub fn upsample_backward<T: Scalar>(dy: &Tensor<T>, factor: usize, input: Shape) -> Tensor<T> {
    if factor == 1 {
        return dy.clone();
    }
    let out = dy.shape();
    let rows = tap_map::<T>(input.h, factor);
    let cols = tap_map::<T>(input.w, factor);
    let mut dx = Tensor::zeros(input);
    let mut tmp = vec![T::zero(); input.h * out.w];
    for n in 0..input.n {
        for c in 0..input.c {
            tmp.fill(T::zero());
            let g = dy.channel(n, c);
            for (oy, taps) in rows.iter().enumerate() {
                let line = &g[oy * out.w..(oy + 1) * out.w];
                for &(iy, wt) in taps {
                    let t = &mut tmp[iy * out.w..(iy + 1) * out.w];
                    for (d, &v) in t.iter_mut().zip(line) {
                        *d += wt * v;
                    }
                }
            }
            let dst = dx.channel_mut(n, c);
            for iy in 0..input.h {
                let line = &tmp[iy * out.w..(iy + 1) * out.w];
                let d = &mut dst[iy * input.w..(iy + 1) * input.w];
                for (ox, taps) in cols.iter().enumerate() {
                    for &(ix, wt) in taps {
                        d[ix] += wt * line[ox];
                    }
                }
            }
        }
    }
    dx
}
