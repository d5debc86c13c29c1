use occlusion_forge_bench::{classifier, corpus, random_batch};

#[test]
fn fixtures_are_deterministic() {
    assert_eq!(corpus(2, 10).samples, corpus(2, 10).samples);
    assert_eq!(random_batch(4, 8, 1).data(), random_batch(4, 8, 1).data());
    let m = classifier(5);
    let p = m.forward(&random_batch(3, 1024, 2)).unwrap();
    assert_eq!(p.probs().unwrap().len(), 15);
}
