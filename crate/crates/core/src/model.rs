//! Encoder-decoder model builders, whole-model parameter/MAC accounting, and
//! the checkpoint wire format.
//!
//! Both builders produce the same U-shaped topology: four downsampling stages
//! of double 3x3 convolutions (channels doubling), a double-conv bottleneck,
//! four upsampling stages (nearest x2 + channel-halving 2x2 up-conv + skip
//! concat + double 3x3 convolutions), and a 1x1 sigmoid head. The octave
//! variant runs every hidden layer at alpha = 0.5; the baseline is plain
//! convolution (alpha = 0) at base width 64.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, FormatErrorKind, Result};
use crate::graph::{Graph, ValueId};
use crate::octave::{
    oct_concat, oct_maxpool, oct_relu, oct_upsample, octconv_forward, octconv_macs,
    octconv_params, OctConvSpec, OctConvWeights, OctFeature, OctPart,
};
use crate::rng::{child_seed, Rng};
use crate::scalar::{Dtype, Scalar};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 6] = b"OCTHU1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    OctHu,
    Unet,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::OctHu => "octhu",
            ModelKind::Unet => "unet",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "octhu" => Ok(ModelKind::OctHu),
            "unet" => Ok(ModelKind::Unet),
            other => Err(Error::Config(format!("unknown model kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Relu,
    Sigmoid,
}

/// One convolution layer: spec, the divisor of the input size at which its
/// high branch runs, and the activation applied after it.
#[derive(Debug, Clone)]
pub struct ConvDef {
    pub name: String,
    pub spec: OctConvSpec,
    pub res_div: usize,
    pub act: Activation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanOp {
    Conv(usize),
    SaveSkip,
    Pool,
    Upsample,
    ConcatSkip,
}

#[derive(Debug, Clone)]
pub struct NamedParam<T: Scalar> {
    pub name: String,
    pub value: Tensor<T>,
}

/// Checkpoint metadata carried alongside the parameters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelMeta {
    pub epoch: u64,
    pub seed: u64,
    pub config_hash: String,
    pub extra: Vec<(String, String)>,
}

#[derive(Debug)]
pub struct ModelGraph<T: Scalar> {
    pub kind: ModelKind,
    pub scale: u32,
    pub input_size: usize,
    pub alpha: f64,
    pub convs: Vec<ConvDef>,
    pub plan: Vec<PlanOp>,
    pub params: Vec<NamedParam<T>>,
    /// Per conv def: (partition, index into `params`).
    param_slots: Vec<Vec<(OctPart, usize)>>,
    pub meta: ModelMeta,
}

fn check_build_args(scale: u32, input_size: usize) -> Result<()> {
    if input_size == 0 || input_size % 32 != 0 {
        return Err(Error::Config(format!(
            "input size must be a positive multiple of 32, got {input_size}"
        )));
    }
    if scale < 2 || !scale.is_power_of_two() {
        return Err(Error::Config(format!(
            "scale must be a power of two >= 2, got {scale}"
        )));
    }
    Ok(())
}

/// OctHU-PageScan: base width `scale` (16 is the reference configuration),
/// every hidden layer at alpha 0.5.
pub fn build_octhu<T: Scalar>(scale: u32, input_size: usize) -> Result<ModelGraph<T>> {
    build_model(ModelKind::OctHu, scale, input_size, 0.5)
}

/// Vanilla U-Net baseline: identical topology, plain convolutions, base
/// width `scale` (64 is the reference configuration).
pub fn build_unet_baseline<T: Scalar>(scale: u32, input_size: usize) -> Result<ModelGraph<T>> {
    build_model(ModelKind::Unet, scale, input_size, 0.0)
}

/// Same widths as `build_octhu` but alpha 0 everywhere; used for the
/// octave-vs-vanilla compute comparison at equal capacity.
pub fn build_octhu_alpha<T: Scalar>(
    scale: u32,
    input_size: usize,
    alpha: f64,
) -> Result<ModelGraph<T>> {
    build_model(ModelKind::OctHu, scale, input_size, alpha)
}

fn build_model<T: Scalar>(
    kind: ModelKind,
    scale: u32,
    input_size: usize,
    alpha: f64,
) -> Result<ModelGraph<T>> {
    check_build_args(scale, input_size)?;
    let s = scale as usize;
    let widths = [s, 2 * s, 4 * s, 8 * s];
    let bottleneck = 16 * s;

    let mut convs: Vec<ConvDef> = Vec::new();
    let mut plan: Vec<PlanOp> = Vec::new();

    let push_conv = |convs: &mut Vec<ConvDef>,
                         plan: &mut Vec<PlanOp>,
                         name: String,
                         c_in: usize,
                         c_out: usize,
                         k: usize,
                         a_in: f64,
                         a_out: f64,
                         div: usize,
                         act: Activation|
     -> Result<()> {
        let spec = OctConvSpec::new(c_in, c_out, k, a_in, a_out)?;
        convs.push(ConvDef {
            name,
            spec,
            res_div: div,
            act,
        });
        plan.push(PlanOp::Conv(convs.len() - 1));
        Ok(())
    };

    let mut c_prev = 1usize;
    let mut a_prev = 0.0f64;
    let mut div = 1usize;
    for (i, &w) in widths.iter().enumerate() {
        push_conv(
            &mut convs,
            &mut plan,
            format!("enc{i}_conv1"),
            c_prev,
            w,
            3,
            a_prev,
            alpha,
            div,
            Activation::Relu,
        )?;
        push_conv(
            &mut convs,
            &mut plan,
            format!("enc{i}_conv2"),
            w,
            w,
            3,
            alpha,
            alpha,
            div,
            Activation::Relu,
        )?;
        plan.push(PlanOp::SaveSkip);
        plan.push(PlanOp::Pool);
        c_prev = w;
        a_prev = alpha;
        div *= 2;
    }
    push_conv(
        &mut convs,
        &mut plan,
        "bottleneck_conv1".to_string(),
        c_prev,
        bottleneck,
        3,
        alpha,
        alpha,
        div,
        Activation::Relu,
    )?;
    push_conv(
        &mut convs,
        &mut plan,
        "bottleneck_conv2".to_string(),
        bottleneck,
        bottleneck,
        3,
        alpha,
        alpha,
        div,
        Activation::Relu,
    )?;
    let mut c_cur = bottleneck;
    for i in (0..4).rev() {
        let w = widths[i];
        plan.push(PlanOp::Upsample);
        div /= 2;
        push_conv(
            &mut convs,
            &mut plan,
            format!("dec{i}_upconv"),
            c_cur,
            w,
            2,
            alpha,
            alpha,
            div,
            Activation::Relu,
        )?;
        plan.push(PlanOp::ConcatSkip);
        push_conv(
            &mut convs,
            &mut plan,
            format!("dec{i}_conv1"),
            2 * w,
            w,
            3,
            alpha,
            alpha,
            div,
            Activation::Relu,
        )?;
        push_conv(
            &mut convs,
            &mut plan,
            format!("dec{i}_conv2"),
            w,
            w,
            3,
            alpha,
            alpha,
            div,
            Activation::Relu,
        )?;
        c_cur = w;
    }
    push_conv(
        &mut convs,
        &mut plan,
        "head".to_string(),
        c_cur,
        1,
        1,
        alpha,
        0.0,
        div,
        Activation::Sigmoid,
    )?;

    // Allocate zero-initialized parameters in deterministic order.
    let mut params = Vec::new();
    let mut param_slots = Vec::new();
    for def in &convs {
        let mut slots = Vec::new();
        for (part, shape) in def.spec.partitions() {
            slots.push((part, params.len()));
            params.push(NamedParam {
                name: format!("{}.{}", def.name, part.suffix()),
                value: Tensor::zeros(&shape),
            });
        }
        param_slots.push(slots);
    }

    Ok(ModelGraph {
        kind,
        scale,
        input_size,
        alpha,
        convs,
        plan,
        params,
        param_slots,
        meta: ModelMeta::default(),
    })
}

pub struct BoundModel {
    conv_weights: Vec<OctConvWeights>,
    param_ids: Vec<ValueId>,
}

impl BoundModel {
    pub fn param_ids(&self) -> &[ValueId] {
        &self.param_ids
    }
}

impl<T: Scalar> ModelGraph<T> {
    /// He-style fan-in init for ReLU layers, Xavier-style for the sigmoid
    /// head; biases start at zero.
    pub fn init_params(&mut self, seed: u64) {
        let mut rng = Rng::from_seed(child_seed(seed, 0x1217, 0));
        for (def, slots) in self.convs.iter().zip(&self.param_slots) {
            let fan_in = (def.spec.k * def.spec.k * def.spec.c_in) as f64;
            let fan_out = (def.spec.k * def.spec.k * def.spec.c_out) as f64;
            let std = match def.act {
                Activation::Sigmoid => libm::sqrt(2.0 / (fan_in + fan_out)),
                _ => libm::sqrt(2.0 / fan_in),
            };
            for &(part, idx) in slots {
                let t = &mut self.params[idx].value;
                match part {
                    OctPart::BiasHigh | OctPart::BiasLow => {
                        t.data_mut().fill(T::ZERO);
                    }
                    _ => {
                        for v in t.data_mut() {
                            *v = T::from_f64(rng.normal() * std);
                        }
                    }
                }
            }
        }
        self.meta.seed = seed;
    }

    pub fn param_count(&self) -> u64 {
        self.convs.iter().map(|d| octconv_params(&d.spec)).sum()
    }

    /// Convolution multiply-accumulates for one forward pass at `input_size`.
    pub fn mac_count(&self, input_size: usize) -> u64 {
        self.convs
            .iter()
            .map(|d| {
                let res = input_size / d.res_div;
                octconv_macs(&d.spec, res, res)
            })
            .sum()
    }

    /// Per-layer (name, out_channels, out_h, out_w, params, macs) at the
    /// model's configured input size. Pools and upsamples appear with zero
    /// params/macs so the listing mirrors the full layer sequence.
    pub fn layer_summaries(&self) -> Vec<(String, usize, usize, usize, u64, u64)> {
        let mut rows = Vec::new();
        let mut div = 1usize;
        let mut channels = 1usize;
        let mut pool_i = 0;
        let mut up_i = 0;
        for op in &self.plan {
            match op {
                PlanOp::Conv(idx) => {
                    let def = &self.convs[*idx];
                    let res = self.input_size / def.res_div;
                    channels = def.spec.c_out;
                    rows.push((
                        def.name.clone(),
                        channels,
                        res,
                        res,
                        octconv_params(&def.spec),
                        octconv_macs(&def.spec, res, res),
                    ));
                    div = def.res_div;
                }
                PlanOp::Pool => {
                    pool_i += 1;
                    div *= 2;
                    rows.push((format!("pool{pool_i}"), channels, self.input_size / div, self.input_size / div, 0, 0));
                }
                PlanOp::Upsample => {
                    up_i += 1;
                    div /= 2;
                    rows.push((format!("upsample{up_i}"), channels, self.input_size / div, self.input_size / div, 0, 0));
                }
                PlanOp::SaveSkip | PlanOp::ConcatSkip => {}
            }
        }
        rows
    }

    /// Register all parameters as graph leaves.
    pub fn bind(&self, g: &mut Graph<T>) -> BoundModel {
        let mut param_ids = Vec::with_capacity(self.params.len());
        for p in &self.params {
            param_ids.push(g.leaf(p.value.clone()));
        }
        let mut conv_weights = Vec::with_capacity(self.convs.len());
        for slots in &self.param_slots {
            let mut w = OctConvWeights::default();
            for &(part, idx) in slots {
                w.set(part, param_ids[idx]);
            }
            conv_weights.push(w);
        }
        BoundModel {
            conv_weights,
            param_ids,
        }
    }

    /// Run the plan. `free_intermediates` drops activation storage as soon as
    /// a value can no longer be referenced (inference-only graphs).
    pub fn forward(
        &self,
        g: &mut Graph<T>,
        bound: &BoundModel,
        input: ValueId,
        free_intermediates: bool,
    ) -> Result<ValueId> {
        let in_shape = g.value(input).shape().to_vec();
        if in_shape.len() != 3 || in_shape[0] != 1 {
            return Err(Error::Shape(format!(
                "model input must be [1,H,W], got {in_shape:?}"
            )));
        }
        if in_shape[1] != self.input_size || in_shape[2] != self.input_size {
            return Err(Error::Shape(format!(
                "model built for {0}x{0} input, got {1}x{2}",
                self.input_size, in_shape[1], in_shape[2]
            )));
        }
        let mut cur = OctFeature::from_plain(input);
        let mut skips: Vec<OctFeature> = Vec::new();
        for op in &self.plan {
            let mark = g.mark();
            let prev = cur;
            match op {
                PlanOp::Conv(idx) => {
                    let def = &self.convs[*idx];
                    cur = octconv_forward(g, &cur, &def.spec, &bound.conv_weights[*idx])?;
                    cur = match def.act {
                        Activation::Relu => oct_relu(g, &cur)?,
                        Activation::Sigmoid => {
                            let high = cur.high.ok_or_else(|| {
                                Error::Contract("sigmoid head expects a high branch".into())
                            })?;
                            OctFeature::from_plain(g.sigmoid(high)?)
                        }
                        Activation::Linear => cur,
                    };
                }
                PlanOp::SaveSkip => {
                    skips.push(cur);
                }
                PlanOp::Pool => {
                    cur = oct_maxpool(g, &cur)?;
                }
                PlanOp::Upsample => {
                    cur = oct_upsample(g, &cur)?;
                }
                PlanOp::ConcatSkip => {
                    let skip = skips
                        .pop()
                        .ok_or_else(|| Error::Contract("skip stack underflow".into()))?;
                    cur = oct_concat(g, &cur, &skip)?;
                }
            }
            if free_intermediates {
                let mut keep: Vec<ValueId> = Vec::new();
                keep.extend(cur.high);
                keep.extend(cur.low);
                for s in &skips {
                    keep.extend(s.high);
                    keep.extend(s.low);
                }
                // intra-step temporaries die immediately
                g.free_range(mark, &keep);
                // the consumed feature dies unless it is also a live skip
                for id in [prev.high, prev.low].into_iter().flatten() {
                    if !keep.contains(&id) && id != input {
                        g.free_value(id);
                    }
                }
            }
        }
        cur.high
            .ok_or_else(|| Error::Contract("model produced no high-frequency output".into()))
    }

    /// Inference without retaining the tape's activation memory.
    pub fn infer(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g);
        let input = g.leaf(input.clone());
        let out = self.forward(&mut g, &bound, input, true)?;
        Ok(g.take_value(out))
    }

    /// Copy gradients out of a graph in parameter order (zeros where a
    /// parameter received no gradient).
    pub fn collect_grads(&self, g: &Graph<T>, bound: &BoundModel) -> Vec<Tensor<T>> {
        self.params
            .iter()
            .zip(&bound.param_ids)
            .map(|(p, &id)| match g.grad(id) {
                Some(t) => t.clone(),
                None => Tensor::zeros(p.value.shape()),
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Checkpoint wire format
// ---------------------------------------------------------------------------
//
//   magic "OCTHU1"
//   u64le header length, then UTF-8 key=value lines
//   per parameter: u64le name length, name bytes, u8 dtype tag,
//                  u64le rank, rank x u64le dims, little-endian payload

fn push_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn need(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format(
                FormatErrorKind::Truncated,
                format!("needed {n} bytes at offset {}", self.pos),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.need(8)?;
        Ok(u64::from_le_bytes([
            b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7],
        ]))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.need(1)?[0])
    }
}

impl<T: Scalar> ModelGraph<T> {
    pub fn encode_checkpoint(&self) -> Vec<u8> {
        let mut header = String::new();
        header.push_str(&format!("version={}\n", CHECKPOINT_VERSION));
        header.push_str(&format!("kind={}\n", self.kind.as_str()));
        header.push_str(&format!("scale={}\n", self.scale));
        header.push_str(&format!("input_size={}\n", self.input_size));
        header.push_str(&format!("alpha={}\n", self.alpha));
        header.push_str(&format!("params={}\n", self.params.len()));
        header.push_str(&format!("epoch={}\n", self.meta.epoch));
        header.push_str(&format!("seed={}\n", self.meta.seed));
        header.push_str(&format!("config_hash={}\n", self.meta.config_hash));
        for (k, v) in &self.meta.extra {
            header.push_str(&format!("x.{k}={v}\n"));
        }

        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        push_u64(&mut out, header.len() as u64);
        out.extend_from_slice(header.as_bytes());
        for p in &self.params {
            push_u64(&mut out, p.name.len() as u64);
            out.extend_from_slice(p.name.as_bytes());
            out.push(T::DTYPE as u8);
            push_u64(&mut out, p.value.shape().len() as u64);
            for &d in p.value.shape() {
                push_u64(&mut out, d as u64);
            }
            for &v in p.value.data() {
                v.write_le(&mut out);
            }
        }
        out
    }

    /// Decode a checkpoint and rebuild the model it describes.
    /// `expect_kind` rejects checkpoints for a different architecture.
    pub fn decode_checkpoint(bytes: &[u8], expect_kind: Option<ModelKind>) -> Result<ModelGraph<T>> {
        let mut r = Reader { buf: bytes, pos: 0 };
        let magic = r.need(CHECKPOINT_MAGIC.len())?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::Format(
                FormatErrorKind::BadMagic,
                "not a checkpoint file".into(),
            ));
        }
        let hlen = r.u64()? as usize;
        let header = core::str::from_utf8(r.need(hlen)?)
            .map_err(|_| Error::Format(FormatErrorKind::Corrupt, "header is not UTF-8".into()))?;

        let mut version = None;
        let mut kind = None;
        let mut scale = None;
        let mut input_size = None;
        let mut alpha = None;
        let mut nparams = None;
        let mut meta = ModelMeta::default();
        for line in header.lines() {
            let Some((k, v)) = line.split_once('=') else {
                continue;
            };
            match k {
                "version" => version = v.parse::<u32>().ok(),
                "kind" => kind = Some(ModelKind::parse(v)?),
                "scale" => scale = v.parse::<u32>().ok(),
                "input_size" => input_size = v.parse::<usize>().ok(),
                "alpha" => alpha = v.parse::<f64>().ok(),
                "params" => nparams = v.parse::<usize>().ok(),
                "epoch" => meta.epoch = v.parse().unwrap_or(0),
                "seed" => meta.seed = v.parse().unwrap_or(0),
                "config_hash" => meta.config_hash = v.to_string(),
                _ => {
                    if let Some(xk) = k.strip_prefix("x.") {
                        meta.extra.push((xk.to_string(), v.to_string()));
                    }
                }
            }
        }
        let version = version.ok_or_else(|| {
            Error::Format(FormatErrorKind::Corrupt, "missing version field".into())
        })?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(
                FormatErrorKind::VersionMismatch,
                format!("checkpoint version {version}, supported {CHECKPOINT_VERSION}"),
            ));
        }
        let (kind, scale, input_size, alpha, nparams) =
            match (kind, scale, input_size, alpha, nparams) {
                (Some(a), Some(b), Some(c), Some(d), Some(e)) => (a, b, c, d, e),
                _ => {
                    return Err(Error::Format(
                        FormatErrorKind::Corrupt,
                        "incomplete architecture descriptor".into(),
                    ))
                }
            };
        if let Some(expected) = expect_kind {
            if expected != kind {
                return Err(Error::Format(
                    FormatErrorKind::DescriptorMismatch,
                    format!(
                        "checkpoint is for '{}', requested '{}'",
                        kind.as_str(),
                        expected.as_str()
                    ),
                ));
            }
        }

        let mut model = build_model::<T>(kind, scale, input_size, alpha)?;
        if model.params.len() != nparams {
            return Err(Error::Format(
                FormatErrorKind::DescriptorMismatch,
                format!(
                    "descriptor implies {} parameters, header says {nparams}",
                    model.params.len()
                ),
            ));
        }
        for p in &mut model.params {
            let nlen = r.u64()? as usize;
            let name = core::str::from_utf8(r.need(nlen)?)
                .map_err(|_| Error::Format(FormatErrorKind::Corrupt, "bad parameter name".into()))?;
            if name != p.name {
                return Err(Error::Format(
                    FormatErrorKind::DescriptorMismatch,
                    format!("expected parameter '{}', found '{name}'", p.name),
                ));
            }
            let dtype = Dtype::from_tag(r.u8()?).ok_or_else(|| {
                Error::Format(FormatErrorKind::Corrupt, "unknown dtype tag".into())
            })?;
            let rank = r.u64()? as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(r.u64()? as usize);
            }
            if dims != p.value.shape() {
                return Err(Error::Format(
                    FormatErrorKind::DescriptorMismatch,
                    format!(
                        "parameter '{name}': shape {dims:?} does not match {:?}",
                        p.value.shape()
                    ),
                ));
            }
            let n: usize = dims.iter().product();
            let payload = r.need(n * dtype.size())?;
            let data: Vec<T> = match dtype {
                Dtype::F32 => payload
                    .chunks_exact(4)
                    .map(|c| T::from_f64(f32::read_le(c) as f64))
                    .collect(),
                Dtype::F64 => payload
                    .chunks_exact(8)
                    .map(|c| T::from_f64(f64::read_le(c)))
                    .collect(),
            };
            p.value = Tensor::new(&dims, data)?;
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(
                FormatErrorKind::Corrupt,
                format!("{} trailing bytes after parameters", bytes.len() - r.pos),
            ));
        }
        model.meta = meta;
        Ok(model)
    }
}
