use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn storyline(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_storyline"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth_corpus(dir: &Path) -> std::path::PathBuf {
    let corpus = dir.join("corpus.jsonl");
    ok(&storyline(&[
        "synth",
        "--out",
        p(&corpus),
        "--docs-per-cluster",
        "8",
        "--seed",
        "3",
    ]));
    corpus
}

#[test]
fn staged_commands_chain_together() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let corpus = synth_corpus(d);
    assert_eq!(fs::read_to_string(&corpus).unwrap().lines().count(), 24);
    assert!(d.join("corpus.jsonl.truth.json").is_file());

    let summary = storyline(&["ingest", "--corpus", p(&corpus)]);
    ok(&summary);
    let summary: serde_json::Value = serde_json::from_slice(&summary.stdout).unwrap();
    assert_eq!(summary["documents"], 24);

    let topics = d.join("topics.json");
    ok(&storyline(&[
        "topics",
        "--corpus",
        p(&corpus),
        "--lda-k",
        "3",
        "--lda-iters",
        "30",
        "--out",
        p(&topics),
    ]));

    let cands = d.join("candidates.json");
    ok(&storyline(&[
        "candidates",
        "--corpus",
        p(&corpus),
        "--seed-ids",
        "c2-007",
        "--alpha",
        "50",
        "--topics-file",
        p(&topics),
        "--out",
        p(&cands),
    ]));

    let story = d.join("story.json");
    let result = d.join("result.json");
    let terms = d.join("terms.json");
    ok(&storyline(&[
        "fit",
        "--corpus",
        p(&corpus),
        "--candidates",
        p(&cands),
        "--segments",
        "3",
        "--restarts",
        "2",
        "--max-iterations",
        "40",
        "--top-k",
        "2",
        "--out",
        p(&story),
        "--result",
        p(&result),
        "--dump-terms",
        p(&terms),
    ]));
    let s: serde_json::Value = serde_json::from_str(&fs::read_to_string(&story).unwrap()).unwrap();
    assert_eq!(s["segments"].as_array().unwrap().len(), 3);
    assert_eq!(s["turning_points"].as_array().unwrap().len(), 4);
    let t: serde_json::Value = serde_json::from_str(&fs::read_to_string(&terms).unwrap()).unwrap();
    assert!(t["uniformity"].as_f64().unwrap() >= 1.0);

    let disp = storyline(&[
        "evaluate",
        "dispersion",
        "--corpus",
        p(&corpus),
        "--story",
        p(&story),
        "--theta-grid",
        "0:1:0.5",
    ]);
    ok(&disp);
    let text = String::from_utf8(disp.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("theta,mean_psi,method"));
    assert!(text.contains("diffusion"));

    let sig = storyline(&[
        "evaluate",
        "significance",
        "--story",
        p(&story),
        "--samples",
        "500",
        "--beta-grid",
        "5:10:5",
    ]);
    ok(&sig);
    assert_eq!(String::from_utf8(sig.stdout).unwrap().lines().count(), 3);

    let rep = d.join("rep.csv");
    ok(&storyline(&[
        "evaluate",
        "repeatability",
        "--result",
        p(&result),
        "--zeta-grid",
        "0:100:50",
        "--out",
        p(&rep),
    ]));
    let rep = fs::read_to_string(rep).unwrap();
    assert_eq!(rep.lines().nth(1), Some("0,2"));

    let pred = storyline(&[
        "predict",
        "--story",
        p(&story),
        "--corpus",
        p(&corpus),
        "--gap-days",
        "5",
        "--top",
        "3",
    ]);
    ok(&pred);
    let pred: serde_json::Value = serde_json::from_slice(&pred.stdout).unwrap();
    assert_eq!(pred["gap_days"], 5.0);
    assert!(pred["entities"].as_array().unwrap().len() <= 3);
}

fn write_config(dir: &Path, corpus: &Path, out: &str) -> std::path::PathBuf {
    let cfg = serde_json::json!({
        "corpus_path": corpus,
        "seed_ids": ["c2-007"],
        "segmentation": {"num_segments": 3},
        "optimizer": {"restarts": 2, "max_iterations": 40, "rng_seed": 4},
        "evaluation": {"significance_samples": 200, "repeatability_thresholds": "0:10:5"},
        "output_dir": out,
    });
    let path = dir.join(format!("{out}.json"));
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

#[test]
fn run_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth_corpus(dir.path());
    let a = write_config(dir.path(), &corpus, "a");
    let b = write_config(dir.path(), &corpus, "b");
    ok(&storyline(&["run", "--config", p(&a)]));
    ok(&storyline(&["run", "--config", p(&b)]));
    let sa = fs::read(dir.path().join("a/story.json")).unwrap();
    let sb = fs::read(dir.path().join("b/story.json")).unwrap();
    assert_eq!(sa, sb);
    assert!(dir.path().join("a/manifest.json").is_file());
}

#[test]
fn missing_corpus_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &dir.path().join("nope.jsonl"), "out");
    let out = storyline(&["run", "--config", p(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn unknown_seed_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth_corpus(dir.path());
    let out = storyline(&[
        "candidates",
        "--corpus",
        p(&corpus),
        "--seed-ids",
        "missing",
        "--out",
        p(&dir.path().join("c.json")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn stage_failure_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth_corpus(dir.path());
    let cfg = write_config(dir.path(), &corpus, "out");
    fs::create_dir_all(dir.path().join("out/story.json")).unwrap();
    let out = storyline(&["run", "--config", p(&cfg)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(dir.path().join("out/candidates.json.partial").is_file());
}

#[test]
fn bad_arguments_exit_two() {
    assert_eq!(storyline(&["fit"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth_corpus(dir.path());
    let out = storyline(&[
        "evaluate",
        "dispersion",
        "--corpus",
        p(&corpus),
        "--chains",
        "x.json",
        "--theta-grid",
        "1:0",
    ]);
    assert_eq!(out.status.code(), Some(2));
}
