//! Raw forward/backward kernels over plain tensors. The autodiff graph and
//! the inference path both call into these, so numerical behavior is shared.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Same,
    Valid,
}

/// Output spatial size and top/left zero-padding for one axis.
/// Same padding splits the total floor-left / ceil-right.
fn axis_geometry(size: usize, k: usize, stride: usize, padding: Padding) -> Result<(usize, usize)> {
    match padding {
        Padding::Valid => {
            if size < k {
                return Err(Error::Shape(format!(
                    "valid padding requires spatial dim >= kernel ({size} < {k})"
                )));
            }
            Ok(((size - k) / stride + 1, 0))
        }
        Padding::Same => {
            let out = (size + stride - 1) / stride;
            let total = ((out - 1) * stride + k).saturating_sub(size);
            Ok((out, total / 2))
        }
    }
}

pub fn conv2d_out_hw(
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    padding: Padding,
) -> Result<(usize, usize)> {
    let (oh, _) = axis_geometry(h, k, stride, padding)?;
    let (ow, _) = axis_geometry(w, k, stride, padding)?;
    Ok((oh, ow))
}

/// Cross-correlation plus bias. `macs` is incremented by the exact number of
/// multiply-accumulates the kernel performs.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    padding: Padding,
    macs: &mut u64,
) -> Result<Tensor<T>> {
    let (ci, h, w) = input.chw()?;
    let wshape = weights.shape();
    if wshape.len() != 4 || wshape[2] != wshape[3] {
        return Err(Error::Shape(format!(
            "weights must be [C_out,C_in,k,k], got {wshape:?}"
        )));
    }
    let (co, wci, k) = (wshape[0], wshape[1], wshape[2]);
    if wci != ci {
        return Err(Error::Shape(format!(
            "input has {ci} channels but weights expect {wci}"
        )));
    }
    if k < 1 || stride < 1 {
        return Err(Error::Config(format!(
            "kernel size and stride must be >= 1 (k={k}, stride={stride})"
        )));
    }
    if let Some(b) = bias {
        if b.shape() != [co] {
            return Err(Error::Shape(format!(
                "bias shape {:?} does not match {co} output channels",
                b.shape()
            )));
        }
    }
    let (oh, pad_t) = axis_geometry(h, k, stride, padding)?;
    let (ow, pad_l) = axis_geometry(w, k, stride, padding)?;

    let mut out = Tensor::zeros(&[co, oh, ow]);
    if let Some(b) = bias {
        let bd = b.data();
        for c in 0..co {
            out.data_mut()[c * oh * ow..(c + 1) * oh * ow].fill(bd[c]);
        }
    }
    *macs += (k * k * ci * co * oh * ow) as u64;

    if stride == 1 {
        conv2d_stride1(
            input.data(),
            weights.data(),
            out.data_mut(),
            ci,
            h,
            w,
            co,
            k,
            oh,
            ow,
            pad_t,
            pad_l,
        );
    } else {
        conv2d_generic(
            input.data(),
            weights.data(),
            out.data_mut(),
            ci,
            h,
            w,
            co,
            k,
            oh,
            ow,
            stride,
            pad_t,
            pad_l,
        );
    }
    Ok(out)
}

/// im2col over a block of output rows, then a register-tiled GEMM.
#[allow(clippy::too_many_arguments)]
fn conv2d_stride1<T: Scalar>(
    input: &[T],
    weights: &[T],
    out: &mut [T],
    ci: usize,
    h: usize,
    w: usize,
    co: usize,
    k: usize,
    oh: usize,
    ow: usize,
    pad_t: usize,
    pad_l: usize,
) {
    let kdim = ci * k * k;
    // Keep the column buffer around 768 KiB so it stays cache resident.
    let budget = 768 * 1024 / core::mem::size_of::<T>();
    let rows_per_block = (budget / (kdim * ow)).clamp(1, oh);
    let mut col = vec![T::ZERO; kdim * rows_per_block * ow];

    let mut oy0 = 0;
    while oy0 < oh {
        let rows = rows_per_block.min(oh - oy0);
        let n = rows * ow;
        // Fill the column buffer: row (ci,ky,kx), column (r, ox).
        for c in 0..ci {
            let in_c = &input[c * h * w..(c + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let krow = ((c * k + ky) * k + kx) * n;
                    for r in 0..rows {
                        let seg = &mut col[krow + r * ow..krow + (r + 1) * ow];
                        let oy = oy0 + r;
                        let iy = oy as isize - pad_t as isize + ky as isize;
                        if iy < 0 || iy as usize >= h {
                            seg.fill(T::ZERO);
                            continue;
                        }
                        let in_row = &in_c[iy as usize * w..(iy as usize + 1) * w];
                        // valid ox range: 0 <= ox - pad_l + kx < w
                        let lo = pad_l.saturating_sub(kx);
                        let hi = (w + pad_l - kx).min(ow);
                        seg[..lo.min(ow)].fill(T::ZERO);
                        if lo < hi {
                            seg[lo..hi].copy_from_slice(&in_row[lo + kx - pad_l..hi + kx - pad_l]);
                        }
                        if hi < ow {
                            seg[hi..].fill(T::ZERO);
                        }
                    }
                }
            }
        }
        gemm_acc(
            co,
            n,
            kdim,
            weights,
            kdim,
            &col,
            n,
            out,
            oh * ow,
            oy0 * ow,
        );
        oy0 += rows;
    }
}

/// C[i, off + j] += sum_k A[i,k] * B[k,j]; C rows are `ldc` apart.
fn gemm_acc<T: Scalar>(
    m: usize,
    n: usize,
    kdim: usize,
    a: &[T],
    lda: usize,
    b: &[T],
    ldb: usize,
    c: &mut [T],
    ldc: usize,
    c_off: usize,
) {
    const MR: usize = 6;
    const NR: usize = 8;
    let mut i0 = 0;
    while i0 < m {
        let mr = MR.min(m - i0);
        let mut j0 = 0;
        while j0 < n {
            let nr = NR.min(n - j0);
            if mr == MR && nr == NR {
                let mut acc = [[T::ZERO; NR]; MR];
                for kk in 0..kdim {
                    let brow = &b[kk * ldb + j0..kk * ldb + j0 + NR];
                    for (i, accr) in acc.iter_mut().enumerate() {
                        let av = a[(i0 + i) * lda + kk];
                        for j in 0..NR {
                            accr[j] += av * brow[j];
                        }
                    }
                }
                for (i, accr) in acc.iter().enumerate() {
                    let crow = &mut c[(i0 + i) * ldc + c_off + j0..][..NR];
                    for j in 0..NR {
                        crow[j] += accr[j];
                    }
                }
            } else {
                for i in 0..mr {
                    for j in 0..nr {
                        let mut s = T::ZERO;
                        for kk in 0..kdim {
                            s += a[(i0 + i) * lda + kk] * b[kk * ldb + j0 + j];
                        }
                        c[(i0 + i) * ldc + c_off + j0 + j] += s;
                    }
                }
            }
            j0 += NR;
        }
        i0 += MR;
    }
}

#[allow(clippy::too_many_arguments)]
fn conv2d_generic<T: Scalar>(
    input: &[T],
    weights: &[T],
    out: &mut [T],
    ci: usize,
    h: usize,
    w: usize,
    co: usize,
    k: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    pad_t: usize,
    pad_l: usize,
) {
    for c_out in 0..co {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut s = T::ZERO;
                for c_in in 0..ci {
                    for ky in 0..k {
                        let iy = (oy * stride + ky) as isize - pad_t as isize;
                        if iy < 0 || iy as usize >= h {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * stride + kx) as isize - pad_l as isize;
                            if ix < 0 || ix as usize >= w {
                                continue;
                            }
                            s += input[(c_in * h + iy as usize) * w + ix as usize]
                                * weights[((c_out * ci + c_in) * k + ky) * k + kx];
                        }
                    }
                }
                out[(c_out * oh + oy) * ow + ox] += s;
            }
        }
    }
}

/// Analytic gradients for `conv2d`. Returns (grad_input, grad_weights, grad_bias).
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    padding: Padding,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (ci, h, w) = input.chw()?;
    let wshape = weights.shape();
    let (co, k) = (wshape[0], wshape[2]);
    let (oh, pad_t) = axis_geometry(h, k, stride, padding)?;
    let (ow, pad_l) = axis_geometry(w, k, stride, padding)?;
    let go = grad_out.shape();
    if go != [co, oh, ow] {
        return Err(Error::Shape(format!(
            "upstream grad shape {go:?} does not match conv output [{co},{oh},{ow}]"
        )));
    }

    let mut gin = Tensor::zeros(&[ci, h, w]);
    let mut gw = Tensor::zeros(wshape);
    let mut gb = Tensor::zeros(&[co]);

    let ind = input.data();
    let wd = weights.data();
    let god = grad_out.data();
    let gbd = gb.data_mut();
    for c_out in 0..co {
        let mut s = T::ZERO;
        for &g in &god[c_out * oh * ow..(c_out + 1) * oh * ow] {
            s += g;
        }
        gbd[c_out] = s;
    }

    if stride == 1 {
        let gind = gin.data_mut();
        let gwd = gw.data_mut();
        for c_out in 0..co {
            for c_in in 0..ci {
                for ky in 0..k {
                    for kx in 0..k {
                        let widx = ((c_out * ci + c_in) * k + ky) * k + kx;
                        let wv = wd[widx];
                        let mut wacc = T::ZERO;
                        for oy in 0..oh {
                            let iy = oy as isize - pad_t as isize + ky as isize;
                            if iy < 0 || iy as usize >= h {
                                continue;
                            }
                            let lo = pad_l.saturating_sub(kx);
                            let hi = (w + pad_l - kx).min(ow);
                            if lo >= hi {
                                continue;
                            }
                            let go_row = &god[(c_out * oh + oy) * ow + lo..(c_out * oh + oy) * ow + hi];
                            let in_base = (c_in * h + iy as usize) * w + lo + kx - pad_l;
                            let in_row = &ind[in_base..in_base + (hi - lo)];
                            let gin_row = &mut gind[in_base..in_base + (hi - lo)];
                            for j in 0..hi - lo {
                                wacc += go_row[j] * in_row[j];
                                gin_row[j] += wv * go_row[j];
                            }
                        }
                        gwd[widx] += wacc;
                    }
                }
            }
        }
    } else {
        let gind = gin.data_mut();
        let gwd = gw.data_mut();
        for c_out in 0..co {
            for oy in 0..oh {
                for ox in 0..ow {
                    let g = god[(c_out * oh + oy) * ow + ox];
                    for c_in in 0..ci {
                        for ky in 0..k {
                            let iy = (oy * stride + ky) as isize - pad_t as isize;
                            if iy < 0 || iy as usize >= h {
                                continue;
                            }
                            for kx in 0..k {
                                let ix = (ox * stride + kx) as isize - pad_l as isize;
                                if ix < 0 || ix as usize >= w {
                                    continue;
                                }
                                let iidx = (c_in * h + iy as usize) * w + ix as usize;
                                let widx = ((c_out * ci + c_in) * k + ky) * k + kx;
                                gwd[widx] += g * ind[iidx];
                                gind[iidx] += g * wd[widx];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok((gin, gw, gb))
}

/// 2x2 max pooling; also returns the flat input index of each window argmax.
pub fn maxpool2<T: Scalar>(input: &Tensor<T>) -> Result<(Tensor<T>, Vec<u32>)> {
    let (c, h, w) = input.chw()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Shape(format!(
            "maxpool2 requires even spatial dims, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(&[c, oh, ow]);
    let mut arg = vec![0u32; c * oh * ow];
    let ind = input.data();
    let od = out.data_mut();
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let base = (ch * h + 2 * oy) * w + 2 * ox;
                let cand = [base, base + 1, base + w, base + w + 1];
                let mut best = cand[0];
                let mut bv = ind[best];
                for &i in &cand[1..] {
                    if ind[i] > bv {
                        bv = ind[i];
                        best = i;
                    }
                }
                let o = (ch * oh + oy) * ow + ox;
                od[o] = bv;
                arg[o] = best as u32;
            }
        }
    }
    Ok((out, arg))
}

pub fn maxpool2_backward<T: Scalar>(
    in_shape: &[usize],
    arg: &[u32],
    grad_out: &Tensor<T>,
) -> Tensor<T> {
    let mut gin = Tensor::zeros(in_shape);
    let gd = gin.data_mut();
    for (o, &g) in grad_out.data().iter().enumerate() {
        gd[arg[o] as usize] += g;
    }
    gin
}

pub fn avgpool2<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let (c, h, w) = input.chw()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Shape(format!(
            "avgpool2 requires even spatial dims, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let quarter = T::from_f64(0.25);
    let mut out = Tensor::zeros(&[c, oh, ow]);
    let ind = input.data();
    let od = out.data_mut();
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let base = (ch * h + 2 * oy) * w + 2 * ox;
                od[(ch * oh + oy) * ow + ox] =
                    (ind[base] + ind[base + 1] + ind[base + w] + ind[base + w + 1]) * quarter;
            }
        }
    }
    Ok(out)
}

pub fn avgpool2_backward<T: Scalar>(in_shape: &[usize], grad_out: &Tensor<T>) -> Tensor<T> {
    let (c, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
    let (oh, ow) = (h / 2, w / 2);
    let quarter = T::from_f64(0.25);
    let mut gin = Tensor::zeros(in_shape);
    let gd = gin.data_mut();
    let god = grad_out.data();
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let g = god[(ch * oh + oy) * ow + ox] * quarter;
                let base = (ch * h + 2 * oy) * w + 2 * ox;
                gd[base] += g;
                gd[base + 1] += g;
                gd[base + w] += g;
                gd[base + w + 1] += g;
            }
        }
    }
    gin
}

/// Nearest-neighbor 2x upsampling: each pixel becomes a 2x2 block.
pub fn upsample_nearest2<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let (c, h, w) = input.chw()?;
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = Tensor::zeros(&[c, oh, ow]);
    let ind = input.data();
    let od = out.data_mut();
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let v = ind[(ch * h + y) * w + x];
                let base = (ch * oh + 2 * y) * ow + 2 * x;
                od[base] = v;
                od[base + 1] = v;
                od[base + ow] = v;
                od[base + ow + 1] = v;
            }
        }
    }
    Ok(out)
}

pub fn upsample_nearest2_backward<T: Scalar>(in_shape: &[usize], grad_out: &Tensor<T>) -> Tensor<T> {
    let (c, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
    let (oh, ow) = (2 * h, 2 * w);
    let mut gin = Tensor::zeros(in_shape);
    let gd = gin.data_mut();
    let god = grad_out.data();
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let base = (ch * oh + 2 * y) * ow + 2 * x;
                gd[(ch * h + y) * w + x] =
                    god[base] + god[base + 1] + god[base + ow] + god[base + ow + 1];
            }
        }
    }
    gin
}

pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| if v > T::ZERO { v } else { T::ZERO })
}

pub fn relu_backward<T: Scalar>(input: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let mut gin = Tensor::zeros(input.shape());
    for ((g, &x), &go) in gin
        .data_mut()
        .iter_mut()
        .zip(input.data())
        .zip(grad_out.data())
    {
        *g = if x > T::ZERO { go } else { T::ZERO };
    }
    gin
}

pub fn sigmoid<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| T::ONE / (T::ONE + (-v).exp()))
}

pub fn sigmoid_backward<T: Scalar>(output: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let mut gin = Tensor::zeros(output.shape());
    for ((g, &s), &go) in gin
        .data_mut()
        .iter_mut()
        .zip(output.data())
        .zip(grad_out.data())
    {
        *g = go * s * (T::ONE - s);
    }
    gin
}

pub fn concat_channels<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (c1, h1, w1) = a.chw()?;
    let (c2, h2, w2) = b.chw()?;
    if (h1, w1) != (h2, w2) {
        return Err(Error::Shape(format!(
            "concat spatial mismatch: {h1}x{w1} vs {h2}x{w2}"
        )));
    }
    let mut data = Vec::with_capacity((c1 + c2) * h1 * w1);
    data.extend_from_slice(a.data());
    data.extend_from_slice(b.data());
    Tensor::new(&[c1 + c2, h1, w1], data)
}

pub fn add<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "add shape mismatch: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut out = a.clone();
    for (o, &v) in out.data_mut().iter_mut().zip(b.data()) {
        *o += v;
    }
    Ok(out)
}

pub fn scale<T: Scalar>(a: &Tensor<T>, factor: T) -> Tensor<T> {
    a.map(|v| v * factor)
}

pub const BCE_CLAMP: f64 = 1e-7;

/// Mean pixelwise binary cross-entropy, predictions clamped to
/// [BCE_CLAMP, 1 - BCE_CLAMP] for stability.
pub fn bce_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<Tensor<T>> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "bce shape mismatch: {:?} vs {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let eps = T::from_f64(BCE_CLAMP);
    let hi = T::ONE - eps;
    let mut sum = T::ZERO;
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        let pc = p.maximum(eps).minimum(hi);
        sum += -(t * pc.ln() + (T::ONE - t) * (T::ONE - pc).ln());
    }
    Ok(Tensor::scalar(sum / T::from_f64(pred.len() as f64)))
}

pub fn bce_loss_backward<T: Scalar>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    grad_out: T,
) -> Tensor<T> {
    let eps = T::from_f64(BCE_CLAMP);
    let hi = T::ONE - eps;
    let inv_n = T::ONE / T::from_f64(pred.len() as f64);
    let mut gin = Tensor::zeros(pred.shape());
    for ((g, &p), &t) in gin
        .data_mut()
        .iter_mut()
        .zip(pred.data())
        .zip(target.data())
    {
        // zero gradient through the clamp
        if p > eps && p < hi {
            *g = grad_out * inv_n * ((T::ONE - t) / (T::ONE - p) - t / p);
        }
    }
    gin
}
