//! Disk round trips across module boundaries on a tiny corpus.

use occlusion_forge::analysis::{extract_features, separability};
use occlusion_forge::corpus::{
    crop_corpus, generate_glyph_corpus, read_manifest, read_split, split, write_manifest, write_split, CorpusConfig,
};
use occlusion_forge::imagination::{read_bank, render_out_of_domain, write_bank};
use occlusion_forge::netcore::{read_checkpoint, write_checkpoint, ModelSpec, TrainConfig, TAP_TOP};
use occlusion_forge::occlusion::{
    generate_imagined_dataset, read_dataset, write_dataset, AssignmentMode, ComposeOptions, Grid, OcclusionType,
};
use occlusion_forge::protocol::{evaluate, pretrain, pretrain_profile, Batch};
use occlusion_forge::raster::Color;

fn config() -> CorpusConfig {
    CorpusConfig {
        classes: 3,
        per_class: 15,
        image_size: 40,
        seed: 5,
    }
}

#[test]
fn corpus_split_and_dataset_survive_disk() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = generate_glyph_corpus(&config()).unwrap();
    let path = write_manifest(&corpus, &dir.path().join("corpus")).unwrap();
    let back = read_manifest(&path).unwrap();
    assert_eq!(back.samples, corpus.samples);

    let sp = split(&back, [3, 1, 1], 5).unwrap();
    let sp_path = dir.path().join("split.json");
    write_split(&sp, &sp_path).unwrap();
    assert_eq!(read_split(&sp_path).unwrap(), sp);

    let cropped = crop_corpus(&back).unwrap();
    let train = cropped.select(&sp.train).unwrap();
    let bank = render_out_of_domain(4, 32, 5);
    write_bank(&bank, &dir.path().join("bank")).unwrap();
    let bank = read_bank(&dir.path().join("bank")).unwrap();
    let grid = Grid::new(vec![OcclusionType::GrayRect, OcclusionType::OutOfDomain], vec![0, 50]);
    let ds = generate_imagined_dataset(&train, &grid, &bank, Color::gray(100), &ComposeOptions::default(), 5, AssignmentMode::CrossProduct).unwrap();
    assert_eq!(ds.samples.len(), train.len() * 4);
    let ds_path = write_dataset(&ds, &dir.path().join("ds")).unwrap();
    let back = read_dataset(&ds_path).unwrap();
    assert_eq!(back.samples.len(), ds.samples.len());
    for (a, b) in back.samples.iter().zip(&ds.samples) {
        assert_eq!(a.raster, b.raster);
        assert_eq!(a.spec, b.spec);
    }
}

#[test]
fn trained_checkpoint_predicts_the_same_after_reload() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = crop_corpus(&generate_glyph_corpus(&config()).unwrap()).unwrap();
    let samples: Vec<_> = corpus.samples.iter().collect();
    let cfg = TrainConfig {
        batch_size: 16,
        max_iters: 40,
        ..pretrain_profile()
    };
    let (model, curve) = pretrain(ModelSpec::classifier(vec![1024, 32, 16, 3]), &samples, None, &cfg).unwrap();
    assert_eq!(curve.points.len(), 40);
    let path = dir.path().join("m.ofck");
    write_checkpoint(&model, &path).unwrap();
    let back = read_checkpoint(&path).unwrap();
    let batch = Batch::from_samples(&samples, back.meta.input_mean).unwrap();
    assert_eq!(evaluate(&model, &batch).unwrap(), evaluate(&back, &batch).unwrap());
    let r = separability(&extract_features(&back, &batch, TAP_TOP).unwrap()).unwrap();
    assert!(r.j.is_finite() && r.j > 0.0);
}
