//! Shared helpers for the oracle tests: random tensors and an independent
//! direct-summation convolution reference.
#![allow(dead_code)] // each test binary uses a different subset

use octoseg_core::rng::Rng;
use octoseg_core::{Padding, Tensor};

pub fn rand_tensor(rng: &mut Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.uniform_in(lo, hi)).collect();
    Tensor::new(shape, data).unwrap()
}

/// Same-padding geometry: output ceil(size/stride), total pad split
/// floor-left / ceil-right.
pub fn same_pad(size: usize, k: usize, stride: usize) -> (usize, usize) {
    let out = (size + stride - 1) / stride;
    let total = ((out - 1) * stride + k).saturating_sub(size);
    (out, total / 2)
}

/// Direct six-loop cross-correlation, written independently of the library
/// kernel.
pub fn ref_conv2d(
    input: &Tensor<f64>,
    weights: &Tensor<f64>,
    bias: Option<&Tensor<f64>>,
    stride: usize,
    padding: Padding,
) -> Tensor<f64> {
    let (ci, h, w) = input.chw().unwrap();
    let ws = weights.shape();
    let (co, k) = (ws[0], ws[2]);
    assert_eq!(ws[1], ci);
    let ((oh, pad_t), (ow, pad_l)) = match padding {
        Padding::Valid => (((h - k) / stride + 1, 0), ((w - k) / stride + 1, 0)),
        Padding::Same => (same_pad(h, k, stride), same_pad(w, k, stride)),
    };
    let mut out = Tensor::zeros(&[co, oh, ow]);
    for c_out in 0..co {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut s = bias.map_or(0.0, |b| b.data()[c_out]);
                for c_in in 0..ci {
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = (oy * stride + ky) as isize - pad_t as isize;
                            let ix = (ox * stride + kx) as isize - pad_l as isize;
                            if iy < 0 || ix < 0 || iy as usize >= h || ix as usize >= w {
                                continue;
                            }
                            s += input.data()[(c_in * h + iy as usize) * w + ix as usize]
                                * weights.data()[((c_out * ci + c_in) * k + ky) * k + kx];
                        }
                    }
                }
                out.data_mut()[(c_out * oh + oy) * ow + ox] = s;
            }
        }
    }
    out
}

pub fn max_abs_diff(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
