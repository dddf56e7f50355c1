//! Octave convolution: features carry a high-frequency branch at full
//! resolution and a low-frequency branch at exactly half resolution. A layer
//! has four weight partitions (H->H, H->L, L->H, L->L) that tile the full
//! `c_out x c_in` channel product, so parameters match a plain convolution
//! while compute drops with alpha.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::{Graph, ValueId};
use crate::ops::Padding;
use crate::scalar::Scalar;

const ALPHA_EPS: f64 = 1e-9;

/// A frequency-pair feature on the graph. `alpha` is the fraction of the
/// total channels living in the low branch.
#[derive(Debug, Clone, Copy)]
pub struct OctFeature {
    pub high: Option<ValueId>,
    pub low: Option<ValueId>,
    pub alpha: f64,
}

impl OctFeature {
    pub fn from_plain(high: ValueId) -> Self {
        OctFeature {
            high: Some(high),
            low: None,
            alpha: 0.0,
        }
    }
}

fn split_channels(alpha: f64, total: usize) -> (usize, usize) {
    let low = libm::round(alpha * total as f64) as usize;
    (total - low, low)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OctConvSpec {
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
    pub alpha_in: f64,
    pub alpha_out: f64,
}

/// Weight-partition identifiers, used for parameter naming and shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OctPart {
    WHh,
    WHl,
    WLh,
    WLl,
    BiasHigh,
    BiasLow,
}

impl OctPart {
    pub fn suffix(self) -> &'static str {
        match self {
            OctPart::WHh => "w_hh",
            OctPart::WHl => "w_hl",
            OctPart::WLh => "w_lh",
            OctPart::WLl => "w_ll",
            OctPart::BiasHigh => "b_h",
            OctPart::BiasLow => "b_l",
        }
    }
}

impl OctConvSpec {
    pub fn new(c_in: usize, c_out: usize, k: usize, alpha_in: f64, alpha_out: f64) -> Result<Self> {
        let spec = OctConvSpec {
            c_in,
            c_out,
            k,
            alpha_in,
            alpha_out,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.c_in == 0 || self.c_out == 0 || self.k == 0 {
            return Err(Error::Config(format!(
                "channel counts and kernel size must be positive: {self:?}"
            )));
        }
        for a in [self.alpha_in, self.alpha_out] {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::Config(format!("alpha {a} outside [0,1]")));
            }
        }
        Ok(())
    }

    pub fn c_in_split(&self) -> (usize, usize) {
        split_channels(self.alpha_in, self.c_in)
    }

    pub fn c_out_split(&self) -> (usize, usize) {
        split_channels(self.alpha_out, self.c_out)
    }

    /// Shapes of the present weight partitions and biases.
    pub fn partitions(&self) -> Vec<(OctPart, Vec<usize>)> {
        let (in_h, in_l) = self.c_in_split();
        let (out_h, out_l) = self.c_out_split();
        let mut parts = Vec::new();
        let k = self.k;
        if out_h > 0 && in_h > 0 {
            parts.push((OctPart::WHh, alloc::vec![out_h, in_h, k, k]));
        }
        if out_l > 0 && in_h > 0 {
            parts.push((OctPart::WHl, alloc::vec![out_l, in_h, k, k]));
        }
        if out_h > 0 && in_l > 0 {
            parts.push((OctPart::WLh, alloc::vec![out_h, in_l, k, k]));
        }
        if out_l > 0 && in_l > 0 {
            parts.push((OctPart::WLl, alloc::vec![out_l, in_l, k, k]));
        }
        if out_h > 0 {
            parts.push((OctPart::BiasHigh, alloc::vec![out_h]));
        }
        if out_l > 0 {
            parts.push((OctPart::BiasLow, alloc::vec![out_l]));
        }
        parts
    }
}

/// Trainable parameter count: k^2 * c_in * c_out + c_out, independent of alpha
/// because the four partitions tile the full channel product.
pub fn octconv_params(spec: &OctConvSpec) -> u64 {
    (spec.k * spec.k * spec.c_in * spec.c_out + spec.c_out) as u64
}

/// Convolution multiply-accumulates for one layer at the given high-branch
/// input resolution. Low-resolution paths run at half spatial size.
pub fn octconv_macs(spec: &OctConvSpec, input_h: usize, input_w: usize) -> u64 {
    let (in_h, in_l) = spec.c_in_split();
    let (out_h, out_l) = spec.c_out_split();
    let k2 = (spec.k * spec.k) as u64;
    let full = (input_h * input_w) as u64;
    let half = ((input_h / 2) * (input_w / 2)) as u64;
    let mut macs = 0u64;
    macs += k2 * in_h as u64 * out_h as u64 * full; // H->H at full resolution
    macs += k2 * in_h as u64 * out_l as u64 * half; // H->L, pooled first
    macs += k2 * in_l as u64 * out_h as u64 * half; // L->H, conv then upsample
    macs += k2 * in_l as u64 * out_l as u64 * half; // L->L
    macs
}

/// Graph-side handles to one layer's weight partitions.
#[derive(Debug, Clone, Copy, Default)]
pub struct OctConvWeights {
    pub w_hh: Option<ValueId>,
    pub w_hl: Option<ValueId>,
    pub w_lh: Option<ValueId>,
    pub w_ll: Option<ValueId>,
    pub b_h: Option<ValueId>,
    pub b_l: Option<ValueId>,
}

impl OctConvWeights {
    pub fn set(&mut self, part: OctPart, id: ValueId) {
        match part {
            OctPart::WHh => self.w_hh = Some(id),
            OctPart::WHl => self.w_hl = Some(id),
            OctPart::WLh => self.w_lh = Some(id),
            OctPart::WLl => self.w_ll = Some(id),
            OctPart::BiasHigh => self.b_h = Some(id),
            OctPart::BiasLow => self.b_l = Some(id),
        }
    }
}

fn feature_desc(name: &str) -> String {
    format!("octconv {name} branch")
}

/// Octave convolution forward (same padding, stride 1):
///   y_h = conv(x_h, W_HH) + upsample(conv(x_l, W_LH)) + b_h
///   y_l = conv(avgpool(x_h), W_HL) + conv(x_l, W_LL) + b_l
/// Absent paths contribute zero.
pub fn octconv_forward<T: Scalar>(
    g: &mut Graph<T>,
    x: &OctFeature,
    spec: &OctConvSpec,
    w: &OctConvWeights,
) -> Result<OctFeature> {
    spec.validate()?;
    if libm::fabs(x.alpha - spec.alpha_in) > ALPHA_EPS {
        return Err(Error::Config(format!(
            "feature alpha {} does not match spec alpha_in {}",
            x.alpha, spec.alpha_in
        )));
    }
    let (in_h, in_l) = spec.c_in_split();
    let (out_h, out_l) = spec.c_out_split();
    if (in_h > 0) != x.high.is_some() || (in_l > 0) != x.low.is_some() {
        return Err(Error::Config(format!(
            "feature branch presence does not match alpha_in {}",
            spec.alpha_in
        )));
    }
    if let Some(hid) = x.high {
        let c = g.value(hid).shape()[0];
        if c != in_h {
            return Err(Error::Shape(format!(
                "{}: expected {in_h} channels, got {c}",
                feature_desc("high")
            )));
        }
    }
    if let Some(lid) = x.low {
        let c = g.value(lid).shape()[0];
        if c != in_l {
            return Err(Error::Shape(format!(
                "{}: expected {in_l} channels, got {c}",
                feature_desc("low")
            )));
        }
    }

    let mut y_high = None;
    if out_h > 0 {
        let mut acc: Option<ValueId> = None;
        if let Some(hid) = x.high {
            let w_hh = w.w_hh.ok_or_else(|| missing("w_hh"))?;
            acc = Some(g.conv2d(hid, w_hh, w.b_h, 1, Padding::Same)?);
        }
        if let Some(lid) = x.low {
            let w_lh = w.w_lh.ok_or_else(|| missing("w_lh"))?;
            let bias = if x.high.is_none() { w.b_h } else { None };
            let conv = g.conv2d(lid, w_lh, bias, 1, Padding::Same)?;
            let up = g.upsample_nearest2(conv)?;
            acc = Some(match acc {
                Some(a) => g.add(a, up)?,
                None => up,
            });
        }
        y_high = acc;
    }

    let mut y_low = None;
    if out_l > 0 {
        let mut acc: Option<ValueId> = None;
        if let Some(hid) = x.high {
            let w_hl = w.w_hl.ok_or_else(|| missing("w_hl"))?;
            let pooled = g.avgpool2(hid)?;
            acc = Some(g.conv2d(pooled, w_hl, w.b_l, 1, Padding::Same)?);
        }
        if let Some(lid) = x.low {
            let w_ll = w.w_ll.ok_or_else(|| missing("w_ll"))?;
            let bias = if x.high.is_none() { w.b_l } else { None };
            let conv = g.conv2d(lid, w_ll, bias, 1, Padding::Same)?;
            acc = Some(match acc {
                Some(a) => g.add(a, conv)?,
                None => conv,
            });
        }
        y_low = acc;
    }

    Ok(OctFeature {
        high: y_high,
        low: y_low,
        alpha: spec.alpha_out,
    })
}

fn missing(part: &str) -> Error {
    Error::Contract(format!("weight partition {part} required but not bound"))
}

fn unary_per_branch<T: Scalar>(
    g: &mut Graph<T>,
    x: &OctFeature,
    mut f: impl FnMut(&mut Graph<T>, ValueId) -> Result<ValueId>,
) -> Result<OctFeature> {
    Ok(OctFeature {
        high: x.high.map(|id| f(g, id)).transpose()?,
        low: x.low.map(|id| f(g, id)).transpose()?,
        alpha: x.alpha,
    })
}

pub fn oct_relu<T: Scalar>(g: &mut Graph<T>, x: &OctFeature) -> Result<OctFeature> {
    unary_per_branch(g, x, |g, id| g.relu(id))
}

pub fn oct_maxpool<T: Scalar>(g: &mut Graph<T>, x: &OctFeature) -> Result<OctFeature> {
    unary_per_branch(g, x, |g, id| g.maxpool2(id))
}

pub fn oct_upsample<T: Scalar>(g: &mut Graph<T>, x: &OctFeature) -> Result<OctFeature> {
    unary_per_branch(g, x, |g, id| g.upsample_nearest2(id))
}

/// Concatenate high-with-high and low-with-low.
pub fn oct_concat<T: Scalar>(g: &mut Graph<T>, a: &OctFeature, b: &OctFeature) -> Result<OctFeature> {
    if a.high.is_some() != b.high.is_some() || a.low.is_some() != b.low.is_some() {
        return Err(Error::Config(
            "oct_concat requires matching branch presence".into(),
        ));
    }
    if libm::fabs(a.alpha - b.alpha) > ALPHA_EPS {
        return Err(Error::Config(format!(
            "oct_concat alpha mismatch: {} vs {}",
            a.alpha, b.alpha
        )));
    }
    let high = match (a.high, b.high) {
        (Some(x), Some(y)) => Some(g.concat_channels(x, y)?),
        _ => None,
    };
    let low = match (a.low, b.low) {
        (Some(x), Some(y)) => Some(g.concat_channels(x, y)?),
        _ => None,
    };
    Ok(OctFeature {
        high,
        low,
        alpha: a.alpha,
    })
}
