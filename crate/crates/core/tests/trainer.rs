use smnist_core::generator::{generate_pair, DatasetSpec, Series, Stamping, Variant};
use smnist_core::trainer::{export_weight_images, train, Budget, Samples, TrainConfig};

fn samples(spec: &DatasetSpec) -> (Samples, Samples, smnist_core::generator::DatasetPair) {
    let pair = generate_pair(spec).unwrap();
    (
        Samples::from_labeled(&pair.train),
        Samples::from_labeled(&pair.test),
        pair,
    )
}

#[test]
fn hard_1px_weights_stay_mid_grey_on_test_pixels() {
    let spec = DatasetSpec::new(Series::M1, Variant::Hard)
        .with_stamp(Stamping::Dot1)
        .with_counts(20_000, 2_000)
        .with_seed(3);
    let (train_set, test_set, pair) = samples(&spec);
    let out = train(&train_set, &test_set, &TrainConfig::softmax()).unwrap();
    let images = export_weight_images(&out.params).unwrap();
    let partition = pair.partition.as_ref().unwrap();
    assert_eq!(partition.test_side.len(), 59);
    for img in &images {
        assert_eq!((img.width(), img.height()), (28, 28));
        for &(r, c) in &partition.test_side {
            assert_eq!(img.get(r as usize, c as usize), 128);
        }
    }
    // some training-side weight moved
    assert!(images.iter().any(|g| g.data().iter().any(|&v| v != 128)));
    assert!(out.metrics.accuracy <= 0.20, "{}", out.metrics.accuracy);
}

#[test]
fn mlp_beats_softmax_on_naive_dots_with_matched_budget() {
    let spec = DatasetSpec::new(Series::M1, Variant::Naive).with_seed(2);
    let (train_set, test_set, _) = samples(&spec);
    let budget = Budget::Steps(1000);
    let soft = train(&train_set, &test_set, &TrainConfig { budget, ..TrainConfig::softmax() }).unwrap();
    let mlp = train(&train_set, &test_set, &TrainConfig { budget, ..TrainConfig::mlp() }).unwrap();
    assert!(
        mlp.metrics.accuracy >= soft.metrics.accuracy,
        "mlp {} softmax {}",
        mlp.metrics.accuracy,
        soft.metrics.accuracy
    );
}

#[test]
fn softmax_loss_does_not_increase_over_epochs() {
    let spec = DatasetSpec::new(Series::M1, Variant::Naive).with_seed(4);
    let (train_set, test_set, _) = samples(&spec);
    let config = TrainConfig {
        budget: Budget::Epochs(4),
        ..TrainConfig::softmax()
    };
    let out = train(&train_set, &test_set, &config).unwrap();
    assert_eq!(out.epoch_losses.len(), 4);
    for w in out.epoch_losses.windows(2) {
        assert!(w[1] <= w[0] + 1e-3, "{:?}", out.epoch_losses);
    }
    let total: usize = out.metrics.confusion.iter().flatten().sum();
    assert_eq!(total, test_set.len());
}
