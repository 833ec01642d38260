use storyline::optimizer::Story;
use storyline::pipeline::{read_json, run_pipeline, Manifest, RunConfig};
use storyline::synth::{write_synthetic_corpus, SynthSpec};

#[test]
fn synthetic_run_writes_three_segment_story() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    let truth = write_synthetic_corpus(&SynthSpec::default(), 100.0, &corpus).unwrap();
    let config: RunConfig = serde_json::from_value(serde_json::json!({
        "corpus_path": corpus,
        "seed_ids": [truth.seed_id],
        "segmentation": {"num_segments": 3},
        "optimizer": {"restarts": 10, "rng_seed": 0},
        "evaluation": {"significance_samples": 2000},
        "output_dir": dir.path().join("out"),
    }))
    .unwrap();
    let summary = run_pipeline(&config).unwrap();
    let out = summary.output_dir;
    for name in [
        "candidates.json",
        "story.json",
        "chains.json",
        "dispersion.csv",
        "significance.csv",
        "repeatability.csv",
        "prediction.json",
        "manifest.json",
    ] {
        assert!(out.join(name).is_file(), "{name} missing");
    }

    let story: Story = read_json(&out.join("story.json")).unwrap();
    assert_eq!(story.segments.len(), 3);
    let interior = &story.turning_points[1..3];
    for (found, planted) in interior.iter().zip(&truth.boundaries) {
        assert!(
            (found - planted).abs() <= 5.0,
            "{interior:?} vs {:?}",
            truth.boundaries
        );
    }

    let manifest: Manifest = read_json(&out.join("manifest.json")).unwrap();
    assert_eq!(manifest.config_sha256, config.hash().unwrap());
    assert_eq!(manifest.restarts_completed, 10);
}
