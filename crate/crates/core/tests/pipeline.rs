use proptest::prelude::*;
use sigclass::calibration::ClosedFormOptions;
use sigclass::classifier::{fit, Calibration, ClassModel, EvalReport, FeatureConfig, Protocol};
use sigclass::data_io::{gen_four_shapes, Image, LabeledImage, ShapeJitter};
use sigclass::path_signature::{SigFeatures, SigKind, StreamConvention, StreamLayout};
use sigclass::scoring::{Metric, ScaleFactors};
use sigclass::tensor_algebra::feature_len;

fn rows_config(size: usize, channels: usize) -> FeatureConfig {
    FeatureConfig {
        convention: StreamConvention::new(StreamLayout::RowsAsSteps, true),
        ..FeatureConfig::new((size, size), channels, 2)
    }
}

fn shapes(per_class: usize, seed: u64) -> Vec<LabeledImage> {
    gen_four_shapes(per_class, 8, &ShapeJitter::default(), seed).unwrap()
}

fn calibrated(metric: Metric) -> (ClassModel, Vec<LabeledImage>) {
    let cfg = rows_config(8, 1);
    let mut model = fit(&shapes(3, 1), &cfg, metric).unwrap();
    model
        .calibrate(&shapes(4, 2), &Calibration::ClosedForm(ClosedFormOptions::default()), 1.1)
        .unwrap();
    (model, shapes(5, 3))
}

#[test]
fn shapes_model_in_default_convention_has_length_twelve() {
    let train = gen_four_shapes(10, 16, &ShapeJitter::default(), 0).unwrap();
    let cfg = FeatureConfig::new((16, 16), 3, 2);
    let model = fit(&train, &cfg, Metric::Rmse).unwrap();
    assert_eq!(model.classes.len(), 4);
    assert_eq!(feature_len(3, 2), 12);
    for c in &model.classes {
        assert_eq!(c.representative.len(), 12);
        assert_eq!(c.train_count, 10);
    }
}

#[test]
fn oracle_with_unit_lambda_equals_plain() {
    let model = fit(&shapes(3, 1), &rows_config(8, 3), Metric::Rmse).unwrap();
    for (i, s) in shapes(4, 9).iter().enumerate() {
        let plain = model.predict(&s.image, Protocol::Plain, i as u64).unwrap();
        let oracle = model.predict_oracle(&s.image, &s.label, i as u64).unwrap();
        assert_eq!(plain.class, oracle.prediction.class);
    }
}

#[test]
fn report_bookkeeping() {
    for metric in [Metric::Rmse, Metric::Mae] {
        let (model, test) = calibrated(metric);
        for p in Protocol::ALL {
            let r = model.evaluate(&test, p).unwrap();
            let trace: usize = (0..4).map(|i| r.confusion[i][i]).sum();
            assert_eq!(trace, r.correct);
            assert_eq!(r.accuracy, trace as f64 / test.len() as f64);
            for (row, pc) in r.confusion.iter().zip(&r.per_class) {
                assert_eq!(row.iter().sum::<usize>(), pc.total);
                assert_eq!(pc.total, 5);
            }
            // Deterministic across runs.
            assert_eq!(r, model.evaluate(&test, p).unwrap());
        }
    }
}

#[test]
fn permuted_labels_split_accuracy_and_error() {
    let (model, test) = calibrated(Metric::Rmse);
    let labels = model.labels();
    let permuted: Vec<LabeledImage> = test
        .iter()
        .map(|s| {
            let z = labels.iter().position(|l| *l == s.label).unwrap();
            LabeledImage {
                label: labels[(z + 1) % labels.len()].clone(),
                ..s.clone()
            }
        })
        .collect();
    let r = model.evaluate(&permuted, Protocol::Fixed).unwrap();
    let errors = r.total - r.correct;
    assert!((r.accuracy + errors as f64 / r.total as f64 - 1.0).abs() < 1e-15);
}

#[test]
fn fully_calibrated_single_instance_is_exact() {
    // One validation image per class, identical to the training image: the
    // oracle comparison of that image scores exactly zero for its class.
    let train = shapes(1, 4);
    let mut model = fit(&train, &rows_config(8, 1), Metric::Rmse).unwrap();
    model
        .calibrate(&train, &Calibration::ClosedForm(ClosedFormOptions::default()), 1.1)
        .unwrap();
    for (i, s) in train.iter().enumerate() {
        let o = model.predict_oracle(&s.image, &s.label, i as u64).unwrap();
        assert!(o.correct);
        assert!(o.prediction.scores[o.prediction.class] < 1e-12);
    }
}

#[test]
fn calibration_none_keeps_unit_masks_and_sets_thresholds() {
    let mut model = fit(&shapes(2, 1), &rows_config(8, 1), Metric::Mae).unwrap();
    let report = model.calibrate(&shapes(2, 5), &Calibration::None, 1.1).unwrap();
    let n = model.feature_len();
    for c in &model.classes {
        assert_eq!(c.lambda_mae, ScaleFactors::ones(n));
        assert!(c.ova_threshold.unwrap() >= 0.0);
    }
    assert_eq!(report.thresholds.len(), 4);
    assert!(report.objectives.is_none());
}

#[test]
fn calibration_rejects_unknown_or_missing_classes() {
    let mut model = fit(&shapes(2, 1), &rows_config(8, 1), Metric::Rmse).unwrap();
    let only_circles: Vec<LabeledImage> = shapes(2, 5).into_iter().filter(|s| s.label == "circle").collect();
    assert!(model.calibrate(&only_circles, &Calibration::default(), 1.1).is_err());
    let mut stray = shapes(1, 5);
    stray[0].label = "hexagon".into();
    assert!(model.calibrate(&stray, &Calibration::default(), 1.1).is_err());
}

#[test]
fn model_json_roundtrip_is_lossless() {
    let (model, _) = calibrated(Metric::Rmse);
    let text = serde_json::to_string(&model).unwrap();
    let back: ClassModel = serde_json::from_str(&text).unwrap();
    assert_eq!(back, model);
    back.validate().unwrap();
    let mut broken = back.clone();
    broken.classes[1].lambda_rmse = ScaleFactors::ones(3);
    assert!(broken.validate().is_err());
    let mut old = back;
    old.schema_version = 99;
    assert!(old.validate().is_err());
}

#[test]
fn augmented_features_are_deterministic() {
    let mut cfg = rows_config(8, 3);
    cfg.augmentation = Some(sigclass::data_io::AugmentSpec {
        seed: 17,
        ..Default::default()
    });
    let img = &shapes(1, 3)[0].image;
    let a = cfg.instance_features(img, 4).unwrap();
    assert_eq!(a, cfg.instance_features(img, 4).unwrap());
    assert_ne!(a, cfg.instance_features(img, 5).unwrap());
    assert_ne!(a, cfg.features(img).unwrap());
}

#[test]
fn grayscale_is_replicated_for_rgb_models() {
    let cfg = rows_config(8, 3);
    let gray = &shapes(1, 3)[0].image;
    let rgb = gray.to_channels(3).unwrap();
    assert_eq!(cfg.features(gray).unwrap(), cfg.features(&rgb).unwrap());
    assert!(cfg.features(&Image::filled(9, 8, 3, 0.5).unwrap()).is_err());
}

#[test]
fn ova_report_uses_stored_thresholds() {
    let (model, test) = calibrated(Metric::Rmse);
    let thresholds = model.thresholds().unwrap();
    let r = model.evaluate(&test, Protocol::Ova).unwrap();
    let manual: Vec<(usize, usize, f64)> = test
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let p = model.predict_ova(&s.image, &thresholds, i as u64).unwrap();
            (model.class_index(&s.label).unwrap(), p.class, p.margin)
        })
        .collect();
    assert_eq!(r, EvalReport::from_outcomes(Protocol::Ova, model.labels(), &manual));
}

fn scaled_model(model: &ClassModel, c: f64) -> ClassModel {
    let mut m = model.clone();
    for class in &mut m.classes {
        class.representative.values.iter_mut().for_each(|v| *v *= c);
    }
    m
}

fn scaled(x: &SigFeatures, c: f64) -> SigFeatures {
    SigFeatures::new(x.dim, x.order, SigKind::Signature, x.values.iter().map(|v| v * c).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn joint_scaling_keeps_predictions(c in 0.01f64..100.0, seed in 0u64..1000) {
        let (model, _) = calibrated(Metric::Rmse);
        let big = scaled_model(&model, c);
        for s in shapes(1, seed) {
            let x = model.instance_features(&s.image, 0).unwrap();
            for p in [Protocol::Plain, Protocol::Fixed] {
                let a = model.predict_features(&x, p).unwrap();
                let b = big.predict_features(&scaled(&x, c), p).unwrap();
                prop_assert_eq!(a.class, b.class);
            }
        }
    }
}
