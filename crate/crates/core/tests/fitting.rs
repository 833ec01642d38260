use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use storyline::candidates::{filter_candidates, CandidateFilterConfig, CandidateSet};
use storyline::corpus::Corpus;
use storyline::objective::{ObjectiveContext, SegmentationConfig};
use storyline::optimizer::{
    central_difference_gradient, fit_story, solution_bounds, OptimizerConfig,
};
use storyline::synth::{generate_synthetic_corpus, GroundTruth, SynthSpec};

fn candidates(docs_per_cluster: usize) -> (CandidateSet, GroundTruth) {
    let spec = SynthSpec {
        docs_per_cluster,
        ..SynthSpec::default()
    };
    let (docs, truth) = generate_synthetic_corpus(&spec, 100.0).unwrap();
    let corpus = Corpus::from_documents(docs).unwrap();
    let set = filter_candidates(
        &corpus,
        None,
        std::slice::from_ref(&truth.seed_id),
        &CandidateFilterConfig::default(),
    )
    .unwrap();
    (set, truth)
}

fn five_point(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let at = |probe: &mut Vec<f64>, d: f64| {
                probe[i] = x[i] + d;
                let v = f(probe);
                probe[i] = x[i];
                v
            };
            let (p2, p1) = (at(&mut probe, 2.0 * h), at(&mut probe, h));
            let (m1, m2) = (at(&mut probe, -h), at(&mut probe, -2.0 * h));
            (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * h)
        })
        .collect()
}

#[test]
fn f5_gradient_matches_five_point_stencil() {
    let (set, _) = candidates(6);
    let seg = SegmentationConfig {
        num_segments: 3,
        ..SegmentationConfig::default()
    };
    let ctx = ObjectiveContext::new(&set, &seg).unwrap();
    let bounds = solution_bounds(set.len(), &seg);
    let f = |x: &[f64]| ctx.f5(x);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let mut x: Vec<f64> = vec![rng.random_range(10.0..45.0), rng.random_range(55.0..90.0)];
        x.extend((0..set.len()).map(|_| rng.random_range(0.1..0.9)));
        let mut central = vec![0.0; x.len()];
        central_difference_gradient(&f, &x, &bounds, 1e-4, &mut central);
        let reference = five_point(&f, &x, 1e-3);
        let scale = reference
            .iter()
            .map(|g| g.abs())
            .fold(0.0, f64::max)
            .max(1e-8);
        for (a, b) in central.iter().zip(&reference) {
            assert!((a - b).abs() / scale < 1e-3, "{a} vs {b}");
        }
    }
}

#[test]
fn zero_weights_score_worse_than_planted() {
    let (set, truth) = candidates(10);
    let seg = SegmentationConfig {
        num_segments: 3,
        ..SegmentationConfig::default()
    };
    let ctx = ObjectiveContext::new(&set, &seg).unwrap();
    let mut planted = truth.boundaries.clone();
    planted.extend(std::iter::repeat_n(1.0, set.len()));
    let mut empty = truth.boundaries.clone();
    empty.extend(std::iter::repeat_n(0.0, set.len()));
    assert!(ctx.f5(&empty) > ctx.f5(&planted));
}

#[test]
fn more_restarts_never_hurt() {
    let (set, _) = candidates(8);
    let seg = SegmentationConfig {
        num_segments: 3,
        ..SegmentationConfig::default()
    };
    let fit = |restarts| {
        let opt = OptimizerConfig {
            restarts,
            rng_seed: 9,
            ..OptimizerConfig::default()
        };
        fit_story(&set, &seg, &opt).unwrap()
    };
    let one = fit(1);
    let five = fit(5);
    assert_eq!(five.all_restart_solutions.len(), 5);
    assert!(five.objective_value <= one.objective_value);
}
