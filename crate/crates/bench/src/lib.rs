//! Fixtures shared by the kernel benchmarks.

use occlusion_forge::corpus::{generate_glyph_corpus, CorpusConfig, CorpusManifest};
use occlusion_forge::netcore::{ModelCheckpoint, ModelSpec, Tensor};
use occlusion_forge::rng::SplitMix64;

/// A small glyph corpus, the same on every call.
pub fn corpus(classes: usize, per_class: usize) -> CorpusManifest {
    generate_glyph_corpus(&CorpusConfig {
        classes,
        per_class,
        image_size: 64,
        seed: 11,
    })
    .expect("valid corpus config")
}

/// Default-width classifier with seeded weights.
pub fn classifier(classes: usize) -> ModelCheckpoint {
    ModelCheckpoint::init(ModelSpec::default_classifier(classes), 11).expect("valid spec")
}

/// `rows` uniform random input rows of `width`.
pub fn random_batch(rows: usize, width: usize, seed: u64) -> Tensor {
    let mut rng = SplitMix64::new(seed);
    Tensor::matrix(rows, width, (0..rows * width).map(|_| rng.uniform(-0.5, 0.5)).collect()).expect("sized")
}
