use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use grbm_core::data::{extract_patches, fit_preprocess, synthetic_edge_images, CONTRAST_EPSILON, ZCA_EPSILON};
use grbm_core::encode::extract_features;
use grbm_core::infomax::unit_mutual_information;
use grbm_core::model::hidden_probabilities;
use grbm_core::oracle::ExactModel;
use grbm_core::rng;
use grbm_core::train::{cd_gradient, PersistentChains, pcd_gradient};
use grbm_core::{Dataset, EncoderConfig, GrbmParams, PreprocessModel};

const HIDDEN: usize = 64;

fn whitened(n: usize) -> (PreprocessModel, Dataset) {
    let images = synthetic_edge_images(500, 1);
    let patches = extract_patches(&images, 6, n, 1).unwrap();
    fit_preprocess(&patches, CONTRAST_EPSILON, ZCA_EPSILON).unwrap()
}

fn conditionals(c: &mut Criterion) {
    let (_, white) = whitened(1000);
    let params = GrbmParams::initialize(HIDDEN, white.dim(), 0).unwrap();
    c.bench_function("hidden_probabilities 1000x108 M=64", |b| {
        b.iter(|| hidden_probabilities(&params, black_box(white.view())).unwrap())
    });
}

fn gradients(c: &mut Criterion) {
    let (_, white) = whitened(100);
    let params = GrbmParams::initialize(HIDDEN, white.dim(), 0).unwrap();
    let mut rng = rng::seeded(0);
    c.bench_function("cd1 batch 100", |b| {
        b.iter(|| cd_gradient(&params, black_box(white.view()), 1, &mut rng).unwrap())
    });
    c.bench_function("pcd1 batch 100", |b| {
        b.iter_batched(
            || PersistentChains::from_data(white.view(), 100, 0).unwrap(),
            |mut chains| pcd_gradient(&params, white.view(), &mut chains, 1).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

fn ami(c: &mut Criterion) {
    let (_, white) = whitened(5000);
    let params = GrbmParams::initialize(HIDDEN, white.dim(), 0).unwrap();
    c.bench_function("unit MI 5000 patches M=64", |b| {
        b.iter(|| unit_mutual_information(&params, black_box(white.view())).unwrap())
    });
}

fn features(c: &mut Criterion) {
    let (pre, white) = whitened(2000);
    let params = GrbmParams::initialize(HIDDEN, white.dim(), 0).unwrap();
    let images = synthetic_edge_images(20, 2);
    let cfg = EncoderConfig::default();
    c.bench_function("features 20 images", |b| {
        b.iter(|| extract_features(&params, &pre, black_box(&images), &cfg).unwrap())
    });
}

fn log_partition(c: &mut Criterion) {
    let params = GrbmParams::initialize(12, 4, 0).unwrap();
    c.bench_function("exact model M=12", |b| {
        b.iter(|| ExactModel::new(black_box(params.clone())).unwrap().log_partition())
    });
}

criterion_group!(benches, conditionals, gradients, ami, features, log_partition);
criterion_main!(benches);
