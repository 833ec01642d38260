use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lbfgsb::{minimize, Bounds, OptimizerConfig, Termination};
use crate::candidates::CandidateSet;
use crate::error::{Error, Result};
use crate::objective::{
    hard_assignment, membership_probabilities, segments_from_interior, ObjectiveContext,
    SegmentBounds, SegmentationConfig, Solution,
};

/// Starting point for one restart.
///
/// Restart 0 spaces the interior points evenly with all weights at 0.5.
/// Later restarts jitter the even spacing by `±date_max / (4|S|)` and draw
/// weights from `[0.25, 0.75]`, using a stream derived from `(rng_seed,
/// restart)`.
pub fn initialize_solution(
    num_candidates: usize,
    config: &SegmentationConfig,
    rng_seed: u64,
    restart: usize,
) -> Solution {
    let segments = config.num_segments;
    let spacing = config.date_max / segments as f64;
    let even = (1..segments).map(|k| k as f64 * spacing);
    if restart == 0 {
        return Solution {
            interior_turning_points: even.collect(),
            weights: vec![0.5; num_candidates],
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    rng.set_stream(restart as u64);
    let amplitude = config.date_max / (4.0 * segments as f64);
    let interior_turning_points = even
        .map(|p| (p + rng.random_range(-amplitude..=amplitude)).clamp(0.0, config.date_max))
        .collect();
    let weights = (0..num_candidates)
        .map(|_| rng.random_range(0.25..=0.75))
        .collect();
    Solution {
        interior_turning_points,
        weights,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartOutcome {
    pub restart: usize,
    pub solution: Solution,
    pub value: f64,
    pub iterations: usize,
    pub termination: Termination,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoryResult {
    pub best_solution: Solution,
    pub objective_value: f64,
    pub best_restart: usize,
    /// Completed restarts in restart order.
    pub all_restart_solutions: Vec<RestartOutcome>,
}

impl StoryResult {
    pub fn iterations_used(&self) -> Vec<usize> {
        self.all_restart_solutions
            .iter()
            .map(|r| r.iterations)
            .collect()
    }

    /// Sorted interior turning points of every restart.
    pub fn turning_point_vectors(&self) -> Vec<Vec<f64>> {
        self.all_restart_solutions
            .iter()
            .map(|r| {
                let mut tp = r.solution.interior_turning_points.clone();
                tp.sort_by(f64::total_cmp);
                tp
            })
            .collect()
    }
}

/// Box for the flat decision vector: points in `[0, date_max]`, weights in
/// `[0, 1]`.
pub fn solution_bounds(num_candidates: usize, config: &SegmentationConfig) -> Bounds {
    let k = config.num_interior_points();
    let mut lower = vec![0.0; k + num_candidates];
    let mut upper = vec![1.0; k + num_candidates];
    upper[..k].fill(config.date_max);
    lower[..k].fill(0.0);
    Bounds { lower, upper }
}

/// Minimizes `F5` from `restarts` starting points and keeps every result.
pub fn fit_story(
    candidates: &CandidateSet,
    segmentation: &SegmentationConfig,
    optimizer: &OptimizerConfig,
) -> Result<StoryResult> {
    optimizer.validate()?;
    let ctx = ObjectiveContext::new(candidates, segmentation)?;
    let bounds = solution_bounds(candidates.len(), segmentation);
    let k = segmentation.num_interior_points();
    let objective = |x: &[f64]| ctx.f5(x);

    let mut outcomes = Vec::with_capacity(optimizer.restarts);
    for restart in 0..optimizer.restarts {
        let init = initialize_solution(candidates.len(), segmentation, optimizer.rng_seed, restart);
        match minimize(&objective, &bounds, &init.to_vector(), optimizer) {
            Ok(min) => {
                let mut solution = Solution::from_vector(&min.x, k);
                solution.interior_turning_points.sort_by(f64::total_cmp);
                outcomes.push(RestartOutcome {
                    restart,
                    solution,
                    value: min.value,
                    iterations: min.iterations,
                    termination: min.termination,
                });
            }
            Err(e) => log::warn!("restart {restart} aborted: {e}"),
        }
    }

    let best = outcomes
        .iter()
        .min_by(|a, b| a.value.total_cmp(&b.value).then(a.restart.cmp(&b.restart)))
        .ok_or(Error::AllRestartsFailed)?;
    Ok(StoryResult {
        best_solution: best.solution.clone(),
        objective_value: best.value,
        best_restart: best.restart,
        all_restart_solutions: outcomes.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedDocument {
    pub id: String,
    pub weight: f64,
    pub membership: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorySegment {
    pub bounds: [f64; 2],
    pub docs: Vec<RankedDocument>,
}

/// User-facing story: per segment, its documents ranked by
/// `weight × membership`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Story {
    pub turning_points: Vec<f64>,
    pub segments: Vec<StorySegment>,
    pub seed_ids: Vec<String>,
    pub objective_value: f64,
}

impl Story {
    pub fn segment_bounds(&self) -> Vec<SegmentBounds> {
        self.segments
            .iter()
            .map(|s| SegmentBounds::new(s.bounds[0], s.bounds[1]))
            .collect()
    }
}

/// Each candidate joins the segment where its membership probability is
/// highest; within a segment documents are ranked by `weight × membership`
/// (ties by id) and cut to `top_k`.
pub fn extract_story(
    result: &StoryResult,
    candidates: &CandidateSet,
    segmentation: &SegmentationConfig,
    top_k: usize,
) -> Result<Story> {
    if top_k < 1 {
        return Err(Error::InvalidConfig("top_k must be >= 1".into()));
    }
    let solution = &result.best_solution;
    if solution.weights.len() != candidates.len() {
        return Err(Error::DimensionMismatch {
            expected: candidates.len(),
            actual: solution.weights.len(),
        });
    }
    let segments = segments_from_interior(&solution.interior_turning_points, segmentation.date_max);
    let var = segmentation.gamma_variance;
    let mut ranked: Vec<Vec<RankedDocument>> = vec![Vec::new(); segments.len()];
    for (i, (doc, &t)) in candidates
        .documents
        .iter()
        .zip(&candidates.scaled_times)
        .enumerate()
    {
        let s = hard_assignment(t, &segments, var);
        let probs = membership_probabilities(t, &segments, var);
        ranked[s].push(RankedDocument {
            id: doc.doc_id.clone(),
            weight: solution.weights[i],
            membership: probs[s],
        });
    }
    let segments = segments
        .iter()
        .zip(ranked)
        .map(|(b, mut docs)| {
            docs.sort_by(|a, b| {
                (b.weight * b.membership)
                    .partial_cmp(&(a.weight * a.membership))
                    .unwrap_or(Ordering::Equal)
                    .then_with(|| a.id.cmp(&b.id))
            });
            docs.truncate(top_k);
            StorySegment {
                bounds: [b.lower, b.upper],
                docs,
            }
        })
        .collect();
    Ok(Story {
        turning_points: solution.turning_points(segmentation.date_max),
        segments,
        seed_ids: candidates.seed_ids(),
        objective_value: result.objective_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{SparseVector, WeightedDocument};
    use chrono::NaiveDate;

    fn seg_config(num_segments: usize) -> SegmentationConfig {
        SegmentationConfig {
            num_segments,
            ..Default::default()
        }
    }

    #[test]
    fn restart_zero_is_even_spacing() {
        let s = initialize_solution(7, &seg_config(5), 42, 0);
        assert_eq!(s.interior_turning_points, [20.0, 40.0, 60.0, 80.0]);
        assert!(s.weights.iter().all(|&w| w == 0.5));
        assert_eq!(s.weights.len(), 7);
    }

    #[test]
    fn jittered_restarts_are_deterministic_and_bounded() {
        let cfg = seg_config(4);
        let a = initialize_solution(10, &cfg, 9, 3);
        let b = initialize_solution(10, &cfg, 9, 3);
        assert_eq!(a, b);
        assert_ne!(a, initialize_solution(10, &cfg, 9, 4));
        let amp = 100.0 / 16.0;
        for (k, p) in a.interior_turning_points.iter().enumerate() {
            assert!((p - 25.0 * (k + 1) as f64).abs() <= amp + 1e-12);
        }
        assert!(a.weights.iter().all(|w| (0.25..=0.75).contains(w)));
    }

    fn tiny_candidates() -> CandidateSet {
        let base = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let docs = (0..4)
            .map(|i| WeightedDocument {
                doc_id: format!("d{i}"),
                timestamp: base + chrono::Days::new(i),
                weights: SparseVector::from_pairs([(i as usize / 2, 1.0)]),
            })
            .collect();
        CandidateSet {
            documents: docs,
            scaled_times: vec![0.0, 10.0, 90.0, 100.0],
            seed_indices: vec![3],
            date_max: 100.0,
        }
    }

    fn result_with(weights: Vec<f64>, points: Vec<f64>) -> StoryResult {
        let solution = Solution {
            interior_turning_points: points,
            weights,
        };
        StoryResult {
            best_solution: solution.clone(),
            objective_value: 0.0,
            best_restart: 0,
            all_restart_solutions: vec![],
        }
    }

    #[test]
    fn extract_top_one_per_segment() {
        let c = tiny_candidates();
        let r = result_with(vec![0.2, 0.9, 1.0, 0.0], vec![50.0]);
        let story = extract_story(&r, &c, &seg_config(2), 1).unwrap();
        assert_eq!(story.segments.len(), 2);
        assert_eq!(story.segments[0].docs[0].id, "d1");
        assert_eq!(story.segments[1].docs[0].id, "d2");
        assert_eq!(story.turning_points, [0.0, 50.0, 100.0]);
        assert_eq!(story.seed_ids, ["d3"]);
    }

    #[test]
    fn extract_all_ranked() {
        let c = tiny_candidates();
        let r = result_with(vec![0.0, 1.0, 0.3, 0.6], vec![50.0]);
        let story = extract_story(&r, &c, &seg_config(2), 10).unwrap();
        let ids: Vec<_> = story.segments[1]
            .docs
            .iter()
            .map(|d| d.id.as_str())
            .collect();
        assert_eq!(ids, ["d3", "d2"]);
        assert_eq!(story.segments[0].docs.last().unwrap().weight, 0.0);
    }

    #[test]
    fn extract_rejects_zero_top_k() {
        let c = tiny_candidates();
        let r = result_with(vec![0.5; 4], vec![50.0]);
        assert!(extract_story(&r, &c, &seg_config(2), 0).is_err());
    }
}
