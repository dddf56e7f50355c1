//! Model builders: frozen parameter-count oracles, alpha independence, MAC
//! ratios, instrumented-counter agreement, forward shapes, and the
//! checkpoint format.

mod common;

use octoseg_core::model::{
    build_octhu, build_octhu_alpha, build_unet_baseline, ModelGraph, ModelKind,
    CHECKPOINT_MAGIC,
};
use octoseg_core::{Error, FormatErrorKind, Graph, Tensor};

/// Hand-computed totals for the reference configurations (double 3x3 convs,
/// 2x2 up-convs, 1x1 head, widths scale..16*scale).
const OCTHU16_PARAMS: u64 = 1_940_817;
const UNET64_PARAMS: u64 = 31_030_593;

#[test]
fn octhu_reference_parameter_count() {
    let m = build_octhu::<f32>(16, 512).unwrap();
    assert_eq!(m.param_count(), OCTHU16_PARAMS);
    // within 2% of the published 1,963,794
    let rel = (m.param_count() as f64 - 1_963_794.0).abs() / 1_963_794.0;
    assert!(rel < 0.02, "relative deviation {rel}");
    // param_count agrees with the actually allocated tensors
    let allocated: u64 = m.params.iter().map(|p| p.value.len() as u64).sum();
    assert_eq!(allocated, m.param_count());
}

#[test]
fn unet_reference_parameter_count() {
    let m = build_unet_baseline::<f32>(64, 512).unwrap();
    assert_eq!(m.param_count(), UNET64_PARAMS);
    // within 3% of the published 30,299,233
    let rel = (m.param_count() as f64 - 30_299_233.0).abs() / 30_299_233.0;
    assert!(rel < 0.03, "relative deviation {rel}");
}

#[test]
fn parameter_reduction_is_about_ninety_three_and_a_half_percent() {
    let reduction = 1.0 - OCTHU16_PARAMS as f64 / UNET64_PARAMS as f64;
    assert!(
        (reduction - 0.935).abs() < 0.01,
        "reduction {reduction} outside 93.5% +- 1pp"
    );
}

#[test]
fn parameter_count_is_independent_of_alpha() {
    let base = build_octhu_alpha::<f32>(16, 512, 0.0).unwrap().param_count();
    for alpha in [0.25, 0.5, 0.75, 1.0] {
        let m = build_octhu_alpha::<f32>(16, 512, alpha).unwrap();
        assert_eq!(m.param_count(), base, "alpha {alpha}");
    }
}

#[test]
fn hidden_layer_macs_drop_with_alpha() {
    // same widths, alpha 0.5 vs 0: overall ratio sits between the single
    // layer value 0.4375 and 1 because the stem and head stay high-only
    let a0 = build_octhu_alpha::<f32>(16, 512, 0.0).unwrap().mac_count(512);
    let a5 = build_octhu_alpha::<f32>(16, 512, 0.5).unwrap().mac_count(512);
    let ratio = a5 as f64 / a0 as f64;
    assert!(ratio < 0.5, "ratio {ratio}");
    assert!(ratio > 0.4375, "ratio {ratio}");
}

#[test]
fn layer_summaries_sum_to_model_totals() {
    for m in [
        build_octhu::<f32>(4, 64).unwrap(),
        build_unet_baseline::<f32>(4, 64).unwrap(),
    ] {
        let rows = m.layer_summaries();
        let p: u64 = rows.iter().map(|r| r.4).sum();
        let macs: u64 = rows.iter().map(|r| r.5).sum();
        assert_eq!(p, m.param_count());
        assert_eq!(macs, m.mac_count(m.input_size));
        // encoder resolutions halve four times then recover
        assert_eq!(rows[0].2, 64);
        assert!(rows.iter().any(|r| r.2 == 4)); // bottleneck resolution
        assert_eq!(rows.last().unwrap().2, 64);
    }
}

#[test]
fn instrumented_macs_match_accounting_formula() {
    for (mut m, label) in [
        (build_octhu::<f32>(2, 32).unwrap(), "octhu"),
        (build_unet_baseline::<f32>(2, 32).unwrap(), "unet"),
    ] {
        m.init_params(7);
        let mut g = Graph::new();
        let bound = m.bind(&mut g);
        let input = g.leaf(Tensor::full(&[1, 32, 32], 0.5f32));
        m.forward(&mut g, &bound, input, false).unwrap();
        assert_eq!(g.macs(), m.mac_count(32), "{label}");
    }
}

#[test]
fn forward_produces_sigmoid_probability_map() {
    let mut m = build_octhu::<f32>(2, 32).unwrap();
    m.init_params(3);
    let input = Tensor::full(&[1, 32, 32], 0.25f32);
    let out = m.infer(&input).unwrap();
    assert_eq!(out.shape(), &[1, 32, 32]);
    assert!(out.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
}

#[test]
fn infer_matches_forward_with_tape_retained() {
    let mut m = build_octhu::<f32>(2, 32).unwrap();
    m.init_params(11);
    let input = Tensor::full(&[1, 32, 32], 0.7f32);
    let fast = m.infer(&input).unwrap();
    let mut g = Graph::new();
    let bound = m.bind(&mut g);
    let id = g.leaf(input.clone());
    let out = m.forward(&mut g, &bound, id, false).unwrap();
    assert_eq!(fast.data(), g.value(out).data());
}

#[test]
fn init_is_deterministic_in_the_seed() {
    let mut a = build_octhu::<f32>(2, 32).unwrap();
    let mut b = build_octhu::<f32>(2, 32).unwrap();
    let mut c = build_octhu::<f32>(2, 32).unwrap();
    a.init_params(42);
    b.init_params(42);
    c.init_params(43);
    for (pa, pb) in a.params.iter().zip(&b.params) {
        assert_eq!(pa.value.data(), pb.value.data());
    }
    assert!(a
        .params
        .iter()
        .zip(&c.params)
        .any(|(pa, pc)| pa.value.data() != pc.value.data()));
}

#[test]
fn build_args_are_validated() {
    assert!(build_octhu::<f32>(16, 100).is_err()); // not a multiple of 32
    assert!(build_octhu::<f32>(16, 0).is_err());
    assert!(build_octhu::<f32>(3, 512).is_err()); // not a power of two
    assert!(build_octhu::<f32>(1, 512).is_err());
}

#[test]
fn checkpoint_round_trips_bitwise() {
    let mut m = build_octhu::<f32>(2, 32).unwrap();
    m.init_params(5);
    m.meta.epoch = 17;
    m.meta.config_hash = "abc123".into();
    m.meta.extra.push(("note".into(), "round-trip".into()));
    let bytes = m.encode_checkpoint();
    let back = ModelGraph::<f32>::decode_checkpoint(&bytes, Some(ModelKind::OctHu)).unwrap();
    assert_eq!(back.kind, m.kind);
    assert_eq!(back.scale, m.scale);
    assert_eq!(back.input_size, m.input_size);
    assert_eq!(back.meta, m.meta);
    for (pa, pb) in m.params.iter().zip(&back.params) {
        assert_eq!(pa.name, pb.name);
        assert_eq!(pa.value.data(), pb.value.data());
    }
    // re-encoding is byte identical
    assert_eq!(back.encode_checkpoint(), bytes);
}

fn kind_of(err: Error) -> FormatErrorKind {
    match err {
        Error::Format(k, _) => k,
        other => panic!("expected format error, got {other:?}"),
    }
}

#[test]
fn checkpoint_decode_distinguishes_failure_modes() {
    let mut m = build_octhu::<f32>(2, 32).unwrap();
    m.init_params(5);
    let bytes = m.encode_checkpoint();

    // bad magic
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert_eq!(
        kind_of(ModelGraph::<f32>::decode_checkpoint(&bad, None).unwrap_err()),
        FormatErrorKind::BadMagic
    );

    // truncation anywhere in the payload
    assert_eq!(
        kind_of(ModelGraph::<f32>::decode_checkpoint(&bytes[..bytes.len() / 2], None).unwrap_err()),
        FormatErrorKind::Truncated
    );
    assert_eq!(
        kind_of(ModelGraph::<f32>::decode_checkpoint(&bytes[..3], None).unwrap_err()),
        FormatErrorKind::Truncated
    );

    // version bump
    let mut v2 = bytes.clone();
    let hdr_start = CHECKPOINT_MAGIC.len() + 8;
    let pos = hdr_start
        + std::str::from_utf8(&v2[hdr_start..hdr_start + 20])
            .unwrap()
            .find("version=1")
            .unwrap()
        + "version=".len();
    v2[pos] = b'9';
    assert_eq!(
        kind_of(ModelGraph::<f32>::decode_checkpoint(&v2, None).unwrap_err()),
        FormatErrorKind::VersionMismatch
    );

    // wrong architecture requested
    assert_eq!(
        kind_of(ModelGraph::<f32>::decode_checkpoint(&bytes, Some(ModelKind::Unet)).unwrap_err()),
        FormatErrorKind::DescriptorMismatch
    );

    // trailing garbage
    let mut long = bytes.clone();
    long.extend_from_slice(b"junk");
    assert_eq!(
        kind_of(ModelGraph::<f32>::decode_checkpoint(&long, None).unwrap_err()),
        FormatErrorKind::Corrupt
    );
}
