//! Adam against closed-form properties and Jaccard against pixel counting.

mod common;

use octoseg_core::metrics::{binarize, jaccard, EvalReport, DEFAULT_THRESHOLD};
use octoseg_core::model::NamedParam;
use octoseg_core::optim::{adam_step, AdamConfig, AdamState};
use octoseg_core::raster::Mask;
use octoseg_core::rng::Rng;
use octoseg_core::{Error, Tensor};
use proptest::prelude::*;

fn single_param(v: f64) -> Vec<NamedParam<f64>> {
    vec![NamedParam {
        name: "w".into(),
        value: Tensor::scalar(v),
    }]
}

#[test]
fn adam_minimizes_quadratic_bowl() {
    // f(w) = w^2 / 2, grad = w, start 1.0, lr 0.1
    let mut params = single_param(1.0);
    let mut state = AdamState::new(&params);
    let cfg = AdamConfig {
        lr: 0.1,
        ..AdamConfig::default()
    };
    for _ in 0..200 {
        let grad = vec![Tensor::scalar(params[0].value.item().unwrap())];
        adam_step(&mut params, &grad, &mut state, &cfg).unwrap();
    }
    let w = params[0].value.item().unwrap();
    assert!(w.abs() < 1e-3, "w = {w}");
}

#[test]
fn first_adam_step_moves_by_about_lr() {
    // bias correction makes the first step lr * g / (|g| + ~eps)
    for &g in &[3.0, -0.7, 1e-3] {
        let mut params = single_param(0.0);
        let mut state = AdamState::new(&params);
        let cfg = AdamConfig::default();
        adam_step(&mut params, &[Tensor::scalar(g)], &mut state, &cfg).unwrap();
        let step = params[0].value.item().unwrap();
        assert!(
            (step.abs() - cfg.lr).abs() < 1e-6 * cfg.lr.max(1.0),
            "grad {g}: step {step}"
        );
        assert_eq!(step < 0.0, g > 0.0);
    }
}

#[test]
fn adam_rejects_non_finite_gradients_by_name() {
    let mut params = single_param(0.0);
    let mut state = AdamState::new(&params);
    let err = adam_step(
        &mut params,
        &[Tensor::scalar(f64::NAN)],
        &mut state,
        &AdamConfig::default(),
    )
    .unwrap_err();
    match err {
        Error::Numeric(msg) => assert!(msg.contains("'w'"), "message: {msg}"),
        other => panic!("expected numeric error, got {other:?}"),
    }
}

#[test]
fn adam_validates_shapes_and_counts() {
    let mut params = single_param(0.0);
    let mut state = AdamState::new(&params);
    let cfg = AdamConfig::default();
    assert!(adam_step(&mut params, &[], &mut state, &cfg).is_err());
    assert!(adam_step(
        &mut params,
        &[Tensor::<f64>::zeros(&[2])],
        &mut state,
        &cfg
    )
    .is_err());
}

fn mask_from_bits(w: usize, h: usize, bits: &[u8]) -> Mask {
    Mask::from_data(w, h, bits.to_vec()).unwrap()
}

#[test]
fn jaccard_matches_pixel_counting() {
    let a = mask_from_bits(3, 2, &[1, 1, 0, 0, 1, 0]);
    let b = mask_from_bits(3, 2, &[1, 0, 0, 1, 1, 0]);
    // intersection 2, union 4
    assert_eq!(jaccard(&a, &b).unwrap(), 2.0 / 4.0);
    assert_eq!(jaccard(&a, &a).unwrap(), 1.0);
    let empty = Mask::new(3, 2);
    assert_eq!(jaccard(&empty, &empty).unwrap(), 1.0);
    assert_eq!(jaccard(&a, &empty).unwrap(), 0.0);
    assert!(jaccard(&a, &Mask::new(2, 2)).is_err());
}

#[test]
fn jaccard_random_masks_match_counting_oracle() {
    let mut rng = Rng::from_seed(41);
    for _ in 0..20 {
        let (w, h) = (rng.range(1, 12), rng.range(1, 12));
        let bits = |rng: &mut Rng| -> Vec<u8> {
            (0..w * h).map(|_| rng.chance(0.4) as u8).collect()
        };
        let a = mask_from_bits(w, h, &bits(&mut rng));
        let b = mask_from_bits(w, h, &bits(&mut rng));
        let mut inter = 0;
        let mut union = 0;
        for i in 0..w * h {
            if a.data[i] == 1 && b.data[i] == 1 {
                inter += 1;
            }
            if a.data[i] == 1 || b.data[i] == 1 {
                union += 1;
            }
        }
        let want = if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        };
        assert_eq!(jaccard(&a, &b).unwrap(), want);
    }
}

#[test]
fn binarize_threshold_is_inclusive() {
    let pred = Tensor::new(&[1, 1, 3], vec![0.49f64, 0.5, 0.51]).unwrap();
    let m = binarize(&pred, DEFAULT_THRESHOLD).unwrap();
    assert_eq!(m.data, vec![0, 1, 1]);
    assert!(binarize(&Tensor::<f64>::zeros(&[2, 2, 2]), 0.5).is_err());
}

#[test]
fn eval_report_mean_and_population_std() {
    let r = EvalReport::from_scores(vec![0.5, 0.7, 0.9], 0.01);
    assert!((r.mean_jcs - 0.7).abs() < 1e-12);
    let want_std = (((0.04f64) + 0.0 + 0.04) / 3.0).sqrt();
    assert!((r.std_jcs - want_std).abs() < 1e-12);
    assert_eq!(r.image_count, 3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prop_jaccard_symmetric_and_bounded(
        bits_a in proptest::collection::vec(0u8..=1, 16),
        bits_b in proptest::collection::vec(0u8..=1, 16),
    ) {
        let a = mask_from_bits(4, 4, &bits_a);
        let b = mask_from_bits(4, 4, &bits_b);
        let ab = jaccard(&a, &b).unwrap();
        let ba = jaccard(&b, &a).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(jaccard(&a, &a).unwrap(), 1.0);
    }
}
