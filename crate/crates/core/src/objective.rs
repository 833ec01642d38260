//! Story objective terms and the five objective variants.
//!
//! The decision variables are the interior turning points (the first and last
//! turning points are pinned to `0` and `date_max`) and one relevance weight
//! per candidate. The variants build on each other:
//!
//! | variant | per-segment term                          | factors                   |
//! |---------|-------------------------------------------|---------------------------|
//! | `F1`    | mean pairwise Soergel (hard segments)     |                           |
//! | `F2`    | date-weighted incoherence − unconnectedness |                         |
//! | `F3`    | date-weighted incoherence × similarity    |                           |
//! | `F4`    | soft incoherence × soft similarity        | overlap                   |
//! | `F5`    | weighted soft incoherence × similarity    | overlap × uniformity      |
//!
//! Soft terms use the membership score `γ` rescaled to a peak of exactly 1
//! inside `Φ`, `φ` and the uniformity penalty, so that `1 − γ` stays in
//! `[0, 1]`. Self-pairs are excluded from every double sum.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::candidates::CandidateSet;
use crate::corpus::SparseVector;
use crate::error::{Error, Result};

/// Denominators below this are treated as an empty (degenerate) segment.
pub const DEGENERATE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationConfig {
    pub num_segments: usize,
    /// Variance `σ̂²` of the Gaussian tails of the membership function.
    pub gamma_variance: f64,
    /// Width `σ` of the turning-point overlap penalty.
    pub overlap_sigma: f64,
    pub date_max: f64,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig {
            num_segments: 5,
            gamma_variance: 4.0,
            overlap_sigma: 5.0,
            date_max: 100.0,
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_segments < 1 {
            return Err(Error::InvalidConfig("num_segments must be >= 1".into()));
        }
        if !(self.gamma_variance > 0.0) || !(self.overlap_sigma > 0.0) || !(self.date_max > 0.0) {
            return Err(Error::InvalidConfig(
                "gamma_variance, overlap_sigma and date_max must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn num_interior_points(&self) -> usize {
        self.num_segments - 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub interior_turning_points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Solution {
    /// Flattens into the optimizer's decision vector: points, then weights.
    pub fn to_vector(&self) -> Vec<f64> {
        self.interior_turning_points
            .iter()
            .chain(&self.weights)
            .copied()
            .collect()
    }

    pub fn from_vector(x: &[f64], num_interior: usize) -> Self {
        Solution {
            interior_turning_points: x[..num_interior].to_vec(),
            weights: x[num_interior..].to_vec(),
        }
    }

    /// All turning points including the fixed ends, sorted.
    pub fn turning_points(&self, date_max: f64) -> Vec<f64> {
        let mut tp = vec![0.0];
        tp.extend(sorted_interior(&self.interior_turning_points, date_max));
        tp.push(date_max);
        tp
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentBounds {
    pub lower: f64,
    pub upper: f64,
}

impl SegmentBounds {
    pub fn new(lower: f64, upper: f64) -> Self {
        debug_assert!(lower <= upper);
        SegmentBounds { lower, upper }
    }
}

fn sorted_interior(points: &[f64], date_max: f64) -> Vec<f64> {
    let mut pts: Vec<f64> = points.iter().map(|p| p.clamp(0.0, date_max)).collect();
    pts.sort_by(f64::total_cmp);
    pts
}

/// Segments between consecutive turning points. Interior points are clamped
/// to `[0, date_max]` and sorted first, so their order in the decision vector
/// does not matter.
pub fn segments_from_interior(interior: &[f64], date_max: f64) -> Vec<SegmentBounds> {
    let mut tp = vec![0.0];
    tp.extend(sorted_interior(interior, date_max));
    tp.push(date_max);
    tp.windows(2)
        .map(|w| SegmentBounds::new(w[0], w[1]))
        .collect()
}

/// `Σ|a − b| / Σ max(a, b)`; 0 when both vectors are empty.
pub fn soergel(a: &SparseVector, b: &SparseVector) -> f64 {
    let (a, b) = (a.entries(), b.entries());
    let (mut i, mut j) = (0, 0);
    let (mut num, mut den) = (0.0, 0.0);
    while i < a.len() || j < b.len() {
        let (x, y) = match (a.get(i), b.get(j)) {
            (Some(&(ia, va)), Some(&(ib, vb))) if ia == ib => {
                i += 1;
                j += 1;
                (va, vb)
            }
            (Some(&(ia, va)), Some(&(ib, _))) if ia < ib => {
                i += 1;
                (va, 0.0)
            }
            (Some(_), Some(&(_, vb))) => {
                j += 1;
                (0.0, vb)
            }
            (Some(&(_, va)), None) => {
                i += 1;
                (va, 0.0)
            }
            (None, Some(&(_, vb))) => {
                j += 1;
                (0.0, vb)
            }
            (None, None) => unreachable!(),
        };
        num += (x - y).abs();
        den += x.max(y);
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

pub fn date_delta(t_i: f64, t_j: f64) -> f64 {
    (t_i - t_j).abs()
}

/// Membership score of time `t` in a segment: constant `1/√(2πσ̂²)` inside,
/// Gaussian tails centred on the bounds outside.
pub fn gamma_membership(t: f64, bounds: SegmentBounds, gamma_variance: f64) -> f64 {
    gamma_rescaled(t, bounds, gamma_variance) / (2.0 * PI * gamma_variance).sqrt()
}

/// [`gamma_membership`] scaled by `√(2πσ̂²)` so the plateau is exactly 1.
pub fn gamma_rescaled(t: f64, bounds: SegmentBounds, gamma_variance: f64) -> f64 {
    if t <= bounds.lower {
        let d = t - bounds.lower;
        (-d * d / (2.0 * gamma_variance)).exp()
    } else if t < bounds.upper {
        1.0
    } else {
        let d = t - bounds.upper;
        (-d * d / (2.0 * gamma_variance)).exp()
    }
}

/// Membership scores normalized over all segments. Falls back to a uniform
/// vector when every score underflows.
pub fn membership_probabilities(
    t: f64,
    segments: &[SegmentBounds],
    gamma_variance: f64,
) -> Vec<f64> {
    let scores: Vec<f64> = segments
        .iter()
        .map(|&b| gamma_membership(t, b, gamma_variance))
        .collect();
    let total: f64 = scores.iter().sum();
    if total > 0.0 {
        scores.into_iter().map(|s| s / total).collect()
    } else {
        log::warn!("all membership scores underflow at t = {t}; using a uniform vector");
        vec![1.0 / segments.len() as f64; segments.len()]
    }
}

/// Index of the segment with the highest membership probability; ties go to
/// the earlier segment.
pub fn hard_assignment(t: f64, segments: &[SegmentBounds], gamma_variance: f64) -> usize {
    let probs = membership_probabilities(t, segments, gamma_variance);
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

fn num_pairs(n: usize) -> f64 {
    (n * n - n) as f64 / 2.0
}

/// Mean pairwise Soergel distance over the `(n² − n) / 2` unordered pairs.
pub fn incoherence_v1(docs: &[&SparseVector]) -> f64 {
    if docs.len() < 2 {
        return 0.0;
    }
    let mut sum = 0.0;
    for i in 0..docs.len() {
        for j in i + 1..docs.len() {
            sum += soergel(docs[i], docs[j]);
        }
    }
    sum / num_pairs(docs.len())
}

/// Mean over pairs of `soergel × date_delta`.
pub fn incoherence_v2(docs: &[(&SparseVector, f64)]) -> f64 {
    if docs.len() < 2 {
        return 0.0;
    }
    let mut sum = 0.0;
    for i in 0..docs.len() {
        for j in i + 1..docs.len() {
            sum += soergel(docs[i].0, docs[j].0) * date_delta(docs[i].1, docs[j].1);
        }
    }
    sum / num_pairs(docs.len())
}

fn cross_mean(seg: &[&SparseVector], other: &[&SparseVector], f: impl Fn(f64) -> f64) -> f64 {
    if seg.is_empty() || other.is_empty() {
        return 0.0;
    }
    let sum: f64 = seg
        .iter()
        .flat_map(|a| other.iter().map(move |b| (a, b)))
        .map(|(a, b)| f(soergel(a, b)))
        .sum();
    sum / (seg.len() * other.len()) as f64
}

/// Mean Soergel distance between a segment's documents and all others.
pub fn unconnectedness(segment_docs: &[&SparseVector], other_docs: &[&SparseVector]) -> f64 {
    cross_mean(segment_docs, other_docs, |d| d)
}

/// Mean of `exp(−soergel)` between a segment's documents and all others.
pub fn similarity_v1(segment_docs: &[&SparseVector], other_docs: &[&SparseVector]) -> f64 {
    cross_mean(segment_docs, other_docs, |d| (-d).exp())
}

/// A soft ratio term together with a flag for an empty effective segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftTerm {
    pub value: f64,
    pub degenerate: bool,
}

impl SoftTerm {
    fn ratio(num: f64, den: f64) -> Self {
        if den < DEGENERATE_FLOOR {
            SoftTerm {
                value: 0.0,
                degenerate: true,
            }
        } else {
            SoftTerm {
                value: num / den,
                degenerate: false,
            }
        }
    }
}

fn check_weights(candidates: &CandidateSet, weights: Option<&[f64]>) -> Result<()> {
    match weights {
        Some(w) if w.len() != candidates.len() => Err(Error::DimensionMismatch {
            expected: candidates.len(),
            actual: w.len(),
        }),
        _ => Ok(()),
    }
}

/// Weighted soft incoherence of one segment. `weights = None` means all ones,
/// which is the unweighted variant.
pub fn incoherence_soft(
    candidates: &CandidateSet,
    bounds: SegmentBounds,
    weights: Option<&[f64]>,
    gamma_variance: f64,
) -> Result<SoftTerm> {
    check_weights(candidates, weights)?;
    let n = candidates.len();
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let g: Vec<f64> = candidates
        .scaled_times
        .iter()
        .map(|&t| gamma_rescaled(t, bounds, gamma_variance))
        .collect();
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let phi = w(i) * w(j) * g[i] * g[j];
            let docs = &candidates.documents;
            num += phi
                * soergel(&docs[i].weights, &docs[j].weights)
                * date_delta(candidates.scaled_times[i], candidates.scaled_times[j]);
            den += phi;
        }
    }
    Ok(SoftTerm::ratio(num, den))
}

/// Weighted soft similarity of one segment to the rest of the timeline.
pub fn similarity_soft(
    candidates: &CandidateSet,
    bounds: SegmentBounds,
    weights: Option<&[f64]>,
    gamma_variance: f64,
) -> Result<SoftTerm> {
    check_weights(candidates, weights)?;
    let n = candidates.len();
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let g: Vec<f64> = candidates
        .scaled_times
        .iter()
        .map(|&t| gamma_rescaled(t, bounds, gamma_variance))
        .collect();
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let phi = w(i) * w(j) * g[i] * (1.0 - g[j]);
            let docs = &candidates.documents;
            num += phi * (-soergel(&docs[i].weights, &docs[j].weights)).exp();
            den += phi;
        }
    }
    Ok(SoftTerm::ratio(num, den))
}

/// `1 + Σ_{m<n} exp(−(t_m − t_n)² / 2σ²)` over interior turning points.
pub fn overlap_penalty(interior_points: &[f64], overlap_sigma: f64) -> f64 {
    let two_var = 2.0 * overlap_sigma * overlap_sigma;
    let mut sum = 0.0;
    for (m, a) in interior_points.iter().enumerate() {
        for b in &interior_points[m + 1..] {
            let d = a - b;
            sum += (-d * d / two_var).exp();
        }
    }
    1.0 + sum
}

/// Per-segment uniformity term: 0 for a one-hot effective vector, 1 for a
/// uniform one (and for a segment with no effective mass).
fn uniformity_term(effective: &[f64]) -> f64 {
    let n = effective.len();
    let total: f64 = effective.iter().sum();
    if !(total > 0.0) {
        return 1.0;
    }
    if n < 2 {
        return 0.0;
    }
    let norm = effective
        .iter()
        .map(|v| (v / total).powi(2))
        .sum::<f64>()
        .sqrt();
    let sqrt_n = (n as f64).sqrt();
    (1.0 - (norm * sqrt_n - 1.0) / (sqrt_n - 1.0)).clamp(0.0, 1.0)
}

/// `1 + Σ_s term(W ∘ Γ_s)`, where `Γ_s` holds the rescaled membership of every
/// candidate in segment `s`. Lies in `[1, 1 + |S|]`.
pub fn uniformity_penalty(
    weights: &[f64],
    candidates: &CandidateSet,
    segments: &[SegmentBounds],
    gamma_variance: f64,
) -> Result<f64> {
    check_weights(candidates, Some(weights))?;
    let mut penalty = 1.0;
    for &bounds in segments {
        let effective: Vec<f64> = candidates
            .scaled_times
            .iter()
            .zip(weights)
            .map(|(&t, &w)| w * gamma_rescaled(t, bounds, gamma_variance))
            .collect();
        penalty += uniformity_term(&effective);
    }
    Ok(penalty)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObjectiveVariant {
    F1,
    F2,
    F3,
    F4,
    F5,
}

impl std::str::FromStr for ObjectiveVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "F1" => Ok(Self::F1),
            "F2" => Ok(Self::F2),
            "F3" => Ok(Self::F3),
            "F4" => Ok(Self::F4),
            "F5" => Ok(Self::F5),
            other => Err(Error::InvalidConfig(format!(
                "unknown objective variant {other}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentTerms {
    pub bounds: [f64; 2],
    pub incoherence: f64,
    pub similarity: f64,
    /// The weighted ratio had no effective mass and the unit-weight value was
    /// used instead.
    pub degenerate: bool,
}

/// Every factor of `F5` at one solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermBreakdown {
    pub segments: Vec<SegmentTerms>,
    pub overlap: f64,
    pub uniformity: f64,
    pub value: f64,
}

/// Pairwise quantities of a candidate set, computed once and reused across
/// objective evaluations.
#[derive(Debug, Clone)]
pub struct ObjectiveContext {
    config: SegmentationConfig,
    n: usize,
    times: Vec<f64>,
    /// Row-major `n × n` Soergel distances.
    distance: Vec<f64>,
    /// `soergel × date_delta`.
    dated_distance: Vec<f64>,
    /// `exp(−soergel)`.
    kernel: Vec<f64>,
}

struct SegmentWork {
    membership: Vec<f64>,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl ObjectiveContext {
    pub fn new(candidates: &CandidateSet, config: &SegmentationConfig) -> Result<Self> {
        config.validate()?;
        if candidates.is_empty() {
            return Err(Error::EmptyCandidateSet);
        }
        if (candidates.date_max - config.date_max).abs() > 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "candidate timeline ends at {} but the segmentation uses date_max {}",
                candidates.date_max, config.date_max
            )));
        }
        let n = candidates.len();
        let times = candidates.scaled_times.clone();
        let mut distance = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let d = soergel(
                    &candidates.documents[i].weights,
                    &candidates.documents[j].weights,
                );
                distance[i * n + j] = d;
                distance[j * n + i] = d;
            }
        }
        let dated_distance = (0..n * n)
            .map(|k| distance[k] * date_delta(times[k / n], times[k % n]))
            .collect();
        let kernel = distance.iter().map(|d| (-d).exp()).collect();
        Ok(ObjectiveContext {
            config: *config,
            n,
            times,
            distance,
            dated_distance,
            kernel,
        })
    }

    pub fn config(&self) -> &SegmentationConfig {
        &self.config
    }

    pub fn num_candidates(&self) -> usize {
        self.n
    }

    /// Length of the decision vector: interior points plus weights.
    pub fn dimension(&self) -> usize {
        self.config.num_interior_points() + self.n
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.distance[i * self.n + j]
    }

    fn check_solution(&self, variant: ObjectiveVariant, solution: &Solution) -> Result<()> {
        let k = self.config.num_interior_points();
        if solution.interior_turning_points.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                actual: solution.interior_turning_points.len(),
            });
        }
        if variant == ObjectiveVariant::F5 && solution.weights.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                actual: solution.weights.len(),
            });
        }
        Ok(())
    }

    pub fn evaluate(&self, variant: ObjectiveVariant, solution: &Solution) -> Result<f64> {
        self.check_solution(variant, solution)?;
        let segments =
            segments_from_interior(&solution.interior_turning_points, self.config.date_max);
        Ok(match variant {
            ObjectiveVariant::F1 => self.hard_f1(&segments),
            ObjectiveVariant::F2 => self.hard_f2(&segments),
            ObjectiveVariant::F3 => self.hard_f3(&segments),
            ObjectiveVariant::F4 => {
                let sum: f64 = segments
                    .iter()
                    .map(|&b| {
                        let work = self.segment_work(b, None);
                        self.soft_incoherence(&work).value * self.soft_similarity(&work).value
                    })
                    .sum();
                sum * overlap_penalty(&solution.interior_turning_points, self.config.overlap_sigma)
            }
            ObjectiveVariant::F5 => self.f5_breakdown(solution, &segments).value,
        })
    }

    /// Fast `F5` on a flat decision vector (points, then weights). Panics on a
    /// wrong length.
    pub fn f5(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dimension());
        let solution = Solution::from_vector(x, self.config.num_interior_points());
        let segments =
            segments_from_interior(&solution.interior_turning_points, self.config.date_max);
        self.f5_breakdown(&solution, &segments).value
    }

    pub fn breakdown(&self, solution: &Solution) -> Result<TermBreakdown> {
        self.check_solution(ObjectiveVariant::F5, solution)?;
        let segments =
            segments_from_interior(&solution.interior_turning_points, self.config.date_max);
        Ok(self.f5_breakdown(solution, &segments))
    }

    fn segment_work(&self, bounds: SegmentBounds, weights: Option<&[f64]>) -> SegmentWork {
        let var = self.config.gamma_variance;
        let membership: Vec<f64> = self
            .times
            .iter()
            .map(|&t| gamma_rescaled(t, bounds, var))
            .collect();
        let (u, v) = membership
            .iter()
            .enumerate()
            .map(|(i, &g)| {
                let w = weights.map_or(1.0, |w| w[i]);
                (w * g, w * (1.0 - g))
            })
            .unzip();
        SegmentWork { membership, u, v }
    }

    fn quadratic(&self, matrix: &[f64], left: &[f64], right: &[f64]) -> f64 {
        let n = self.n;
        let mut total = 0.0;
        for i in 0..n {
            if left[i] == 0.0 {
                continue;
            }
            let row = &matrix[i * n..(i + 1) * n];
            let dot: f64 = row.iter().zip(right).map(|(a, b)| a * b).sum();
            total += left[i] * dot;
        }
        total
    }

    fn soft_incoherence(&self, work: &SegmentWork) -> SoftTerm {
        // The dated-distance diagonal is zero, so self-pairs drop out of the
        // numerator automatically.
        let num = self.quadratic(&self.dated_distance, &work.u, &work.u);
        let sum: f64 = work.u.iter().sum();
        let sq: f64 = work.u.iter().map(|x| x * x).sum();
        SoftTerm::ratio(num, sum * sum - sq)
    }

    fn soft_similarity(&self, work: &SegmentWork) -> SoftTerm {
        // kernel diagonal is exp(0) = 1
        let diag: f64 = work.u.iter().zip(&work.v).map(|(a, b)| a * b).sum();
        let num = self.quadratic(&self.kernel, &work.u, &work.v) - diag;
        let su: f64 = work.u.iter().sum();
        let sv: f64 = work.v.iter().sum();
        SoftTerm::ratio(num, su * sv - diag)
    }

    fn f5_breakdown(&self, solution: &Solution, segments: &[SegmentBounds]) -> TermBreakdown {
        let weights = &solution.weights;
        let mut seg_terms = Vec::with_capacity(segments.len());
        let mut sum = 0.0;
        let mut uniformity = 1.0;
        for &bounds in segments {
            let work = self.segment_work(bounds, Some(weights));
            let mut inc = self.soft_incoherence(&work);
            let mut sim = self.soft_similarity(&work);
            let degenerate = inc.degenerate || sim.degenerate;
            if degenerate {
                // With no effective weight mass the ratios are 0/0. Their limit
                // along uniform weights is the unweighted value.
                let unit = self.segment_work(bounds, None);
                if inc.degenerate {
                    inc = self.soft_incoherence(&unit);
                }
                if sim.degenerate {
                    sim = self.soft_similarity(&unit);
                }
            }
            sum += inc.value * sim.value;
            let effective: Vec<f64> = work
                .membership
                .iter()
                .zip(weights)
                .map(|(g, w)| g * w)
                .collect();
            uniformity += uniformity_term(&effective);
            seg_terms.push(SegmentTerms {
                bounds: [bounds.lower, bounds.upper],
                incoherence: inc.value,
                similarity: sim.value,
                degenerate,
            });
        }
        let overlap = overlap_penalty(&solution.interior_turning_points, self.config.overlap_sigma);
        TermBreakdown {
            segments: seg_terms,
            overlap,
            uniformity,
            value: sum * overlap * uniformity,
        }
    }

    fn hard_groups(&self, segments: &[SegmentBounds]) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); segments.len()];
        for (i, &t) in self.times.iter().enumerate() {
            groups[hard_assignment(t, segments, self.config.gamma_variance)].push(i);
        }
        groups
    }

    fn pair_mean(&self, members: &[usize], matrix: &[f64]) -> f64 {
        if members.len() < 2 {
            return 0.0;
        }
        let mut sum = 0.0;
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                sum += matrix[i * self.n + j];
            }
        }
        sum / num_pairs(members.len())
    }

    fn cross_mean(&self, members: &[usize], matrix: &[f64]) -> f64 {
        let others: Vec<usize> = (0..self.n).filter(|i| !members.contains(i)).collect();
        if members.is_empty() || others.is_empty() {
            return 0.0;
        }
        let sum: f64 = members
            .iter()
            .flat_map(|&i| others.iter().map(move |&j| matrix[i * self.n + j]))
            .sum();
        sum / (members.len() * others.len()) as f64
    }

    fn hard_f1(&self, segments: &[SegmentBounds]) -> f64 {
        self.hard_groups(segments)
            .iter()
            .map(|g| self.pair_mean(g, &self.distance))
            .sum()
    }

    fn hard_f2(&self, segments: &[SegmentBounds]) -> f64 {
        self.hard_groups(segments)
            .iter()
            .map(|g| self.pair_mean(g, &self.dated_distance) - self.cross_mean(g, &self.distance))
            .sum()
    }

    fn hard_f3(&self, segments: &[SegmentBounds]) -> f64 {
        self.hard_groups(segments)
            .iter()
            .map(|g| self.pair_mean(g, &self.dated_distance) * self.cross_mean(g, &self.kernel))
            .sum()
    }
}

/// One-shot evaluation; builds an [`ObjectiveContext`] per call.
pub fn evaluate_objective(
    variant: ObjectiveVariant,
    candidates: &CandidateSet,
    config: &SegmentationConfig,
    solution: &Solution,
) -> Result<f64> {
    ObjectiveContext::new(candidates, config)?.evaluate(variant, solution)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::WeightedDocument;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn sv(pairs: &[(usize, f64)]) -> SparseVector {
        SparseVector::from_pairs(pairs.iter().copied())
    }

    fn candidates(vectors: Vec<SparseVector>, times: Vec<f64>) -> CandidateSet {
        let base = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        CandidateSet {
            documents: vectors
                .into_iter()
                .enumerate()
                .map(|(i, weights)| WeightedDocument {
                    doc_id: format!("d{i}"),
                    timestamp: base + chrono::Days::new(i as u64),
                    weights,
                })
                .collect(),
            scaled_times: times,
            seed_indices: vec![],
            date_max: 100.0,
        }
    }

    #[test]
    fn soergel_cases() {
        let a = sv(&[(0, 0.5), (1, 0.5)]);
        assert_eq!(soergel(&a, &a), 0.0);
        assert_eq!(soergel(&sv(&[(0, 1.0)]), &sv(&[(1, 1.0)])), 1.0);
        assert!((soergel(&a, &sv(&[(0, 0.5)])) - 0.5).abs() < 1e-15);
        assert_eq!(
            soergel(&SparseVector::default(), &SparseVector::default()),
            0.0
        );
    }

    #[test]
    fn date_delta_cases() {
        assert_eq!(date_delta(10.0, 10.0), 0.0);
        assert_eq!(date_delta(10.0, 3.0), 7.0);
        assert_eq!(date_delta(3.0, 10.0), 7.0);
    }

    #[test]
    fn gamma_plateau_and_tails() {
        let b = SegmentBounds::new(10.0, 20.0);
        let plateau = 1.0 / (2.0 * PI).sqrt();
        assert!((gamma_membership(15.0, b, 1.0) - 0.398_942_280_401_432_7).abs() < 1e-12);
        assert!((gamma_membership(15.0, b, 1.0) - plateau).abs() < 1e-15);
        assert!(gamma_membership(-1e3, b, 1.0) < 1e-100);
        assert!(gamma_membership(1e3, b, 1.0) < 1e-100);
        for bp in [10.0, 20.0] {
            let jump =
                (gamma_membership(bp - 1e-6, b, 1.0) - gamma_membership(bp + 1e-6, b, 1.0)).abs();
            assert!(jump < 1e-4);
        }
    }

    #[test]
    fn membership_cases() {
        let one = [SegmentBounds::new(0.0, 100.0)];
        assert_eq!(membership_probabilities(40.0, &one, 1.0), [1.0]);

        let two = [
            SegmentBounds::new(0.0, 50.0),
            SegmentBounds::new(50.0, 100.0),
        ];
        let p = membership_probabilities(50.0, &two, 1.0);
        assert!((p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12);

        let three = [
            SegmentBounds::new(0.0, 20.0),
            SegmentBounds::new(40.0, 60.0),
            SegmentBounds::new(80.0, 100.0),
        ];
        let p = membership_probabilities(10.0, &three, 1.0);
        assert!(p[0] > 0.99);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn hard_incoherence_cases() {
        let x = sv(&[(0, 1.0)]);
        let y = sv(&[(1, 1.0)]);
        assert_eq!(incoherence_v1(&[&x, &x, &x, &x]), 0.0);
        assert_eq!(incoherence_v1(&[&x, &y]), 1.0);
        // 4 docs: 3 pairs at distance 1 over a denominator of 6.
        assert!((incoherence_v1(&[&x, &x, &x, &y]) - 0.5).abs() < 1e-15);
        assert_eq!(incoherence_v1(&[&x]), 0.0);

        assert_eq!(incoherence_v2(&[(&x, 3.0), (&y, 3.0)]), 0.0);
        assert_eq!(incoherence_v2(&[(&x, 3.0), (&x, 9.0)]), 0.0);
        let half = sv(&[(0, 0.5), (1, 0.5)]);
        let sub = sv(&[(0, 0.5)]);
        assert!((incoherence_v2(&[(&half, 3.0), (&sub, 10.0)]) - 3.5).abs() < 1e-12);
    }

    #[test]
    fn cross_segment_terms() {
        let x = sv(&[(0, 1.0)]);
        let y = sv(&[(1, 1.0)]);
        assert_eq!(unconnectedness(&[&x], &[&x, &x]), 0.0);
        assert_eq!(unconnectedness(&[&x], &[&y]), 1.0);
        let half = sv(&[(0, 0.5), (1, 0.5)]);
        let sub = sv(&[(0, 0.5)]);
        let far = sv(&[(2, 1.0)]);
        assert!((unconnectedness(&[&half], &[&sub, &far]) - 0.75).abs() < 1e-12);

        assert_eq!(similarity_v1(&[&x], &[&x]), 1.0);
        assert!((similarity_v1(&[&x], &[&y]) - (-1f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn overlap_cases() {
        assert_eq!(overlap_penalty(&[], 1.0), 1.0);
        assert_eq!(overlap_penalty(&[4.0], 1.0), 1.0);
        assert_eq!(overlap_penalty(&[4.0, 4.0], 1.0), 2.0);
        assert!(overlap_penalty(&[0.0, 10.0], 1.0) - 1.0 < 1e-20);
    }

    #[test]
    fn uniformity_endpoints() {
        let c = candidates(vec![sv(&[(0, 1.0)]); 4], vec![10.0, 20.0, 30.0, 40.0]);
        let whole = [SegmentBounds::new(0.0, 100.0)];
        let one_hot = uniformity_penalty(&[0.0, 1.0, 0.0, 0.0], &c, &whole, 1.0).unwrap();
        assert!((one_hot - 1.0).abs() < 1e-12);
        let uniform = uniformity_penalty(&[0.3; 4], &c, &whole, 1.0).unwrap();
        assert!((uniform - 2.0).abs() < 1e-12);
        let zero = uniformity_penalty(&[0.0; 4], &c, &whole, 1.0).unwrap();
        assert!((zero - 2.0).abs() < 1e-12);
    }

    #[test]
    fn soft_terms_degenerate_and_identical() {
        let c = candidates(vec![sv(&[(0, 1.0)]); 4], vec![10.0, 20.0, 30.0, 40.0]);
        let b = SegmentBounds::new(0.0, 50.0);
        let zero = incoherence_soft(&c, b, Some(&[0.0; 4]), 1.0).unwrap();
        assert!(zero.degenerate);
        let inc = incoherence_soft(&c, b, Some(&[0.2, 0.9, 0.4, 1.0]), 1.0).unwrap();
        assert_eq!(inc.value, 0.0);
        assert!(!inc.degenerate);
        let err = incoherence_soft(&c, b, Some(&[1.0]), 1.0).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    fn two_blocks(same_content: bool) -> CandidateSet {
        let a = sv(&[(0, 1.0)]);
        let b = if same_content {
            a.clone()
        } else {
            sv(&[(1, 1.0)])
        };
        candidates(
            vec![a.clone(), a.clone(), a, b.clone(), b.clone(), b],
            vec![0.0, 5.0, 10.0, 90.0, 95.0, 100.0],
        )
    }

    #[test]
    fn soft_similarity_limits() {
        let seg = SegmentBounds::new(0.0, 50.0);
        let same = similarity_soft(&two_blocks(true), seg, None, 1.0).unwrap();
        assert!((same.value - 1.0).abs() < 1e-9);
        let disjoint = similarity_soft(&two_blocks(false), seg, None, 1.0).unwrap();
        assert!(
            (disjoint.value - (-1f64).exp()).abs() < 1e-6,
            "{}",
            disjoint.value
        );
    }

    #[test]
    fn context_matches_naive_soft_terms() {
        let c = candidates(
            vec![
                sv(&[(0, 0.8), (1, 0.6)]),
                sv(&[(0, 1.0)]),
                sv(&[(1, 0.6), (2, 0.8)]),
                sv(&[(2, 1.0)]),
                sv(&[(3, 0.6), (2, 0.8)]),
            ],
            vec![0.0, 12.0, 40.0, 61.0, 100.0],
        );
        let cfg = SegmentationConfig {
            num_segments: 3,
            gamma_variance: 9.0,
            overlap_sigma: 5.0,
            date_max: 100.0,
        };
        let sol = Solution {
            interior_turning_points: vec![55.0, 25.0],
            weights: vec![0.9, 0.2, 0.5, 0.7, 1.0],
        };
        let ctx = ObjectiveContext::new(&c, &cfg).unwrap();
        let segments = segments_from_interior(&sol.interior_turning_points, 100.0);
        let mut expected = 0.0;
        for &b in &segments {
            let inc = incoherence_soft(&c, b, Some(&sol.weights), 9.0)
                .unwrap()
                .value;
            let sim = similarity_soft(&c, b, Some(&sol.weights), 9.0)
                .unwrap()
                .value;
            expected += inc * sim;
        }
        expected *= overlap_penalty(&sol.interior_turning_points, 5.0)
            * uniformity_penalty(&sol.weights, &c, &segments, 9.0).unwrap();
        let got = ctx.evaluate(ObjectiveVariant::F5, &sol).unwrap();
        assert!(
            (got - expected).abs() < 1e-12 * expected.abs().max(1.0),
            "{got} vs {expected}"
        );
        assert_eq!(ctx.f5(&sol.to_vector()), got);
    }

    #[test]
    fn f1_identical_documents_is_zero() {
        let c = candidates(vec![sv(&[(0, 1.0)]); 3], vec![0.0, 50.0, 100.0]);
        let cfg = SegmentationConfig {
            num_segments: 1,
            ..Default::default()
        };
        let sol = Solution {
            interior_turning_points: vec![],
            weights: vec![],
        };
        assert_eq!(
            evaluate_objective(ObjectiveVariant::F1, &c, &cfg, &sol).unwrap(),
            0.0
        );
    }

    #[test]
    fn f4_and_f5_differ_by_uniformity_under_uniform_weights() {
        let c = two_blocks(false);
        let cfg = SegmentationConfig {
            num_segments: 2,
            gamma_variance: 4.0,
            overlap_sigma: 5.0,
            date_max: 100.0,
        };
        let sol = Solution {
            interior_turning_points: vec![48.0],
            weights: vec![0.6; 6],
        };
        let ctx = ObjectiveContext::new(&c, &cfg).unwrap();
        let f4 = ctx.evaluate(ObjectiveVariant::F4, &sol).unwrap();
        let f5 = ctx.evaluate(ObjectiveVariant::F5, &sol).unwrap();
        let segments = segments_from_interior(&[48.0], 100.0);
        let u = uniformity_penalty(&sol.weights, &c, &segments, 4.0).unwrap();
        assert!((f5 - f4 * u).abs() < 1e-12 * f5.abs().max(1.0));
    }

    #[test]
    fn dimension_mismatch_reported() {
        let c = two_blocks(false);
        let cfg = SegmentationConfig {
            num_segments: 2,
            ..Default::default()
        };
        let bad = Solution {
            interior_turning_points: vec![10.0, 20.0],
            weights: vec![1.0; 6],
        };
        assert!(evaluate_objective(ObjectiveVariant::F3, &c, &cfg, &bad).is_err());
        let bad_w = Solution {
            interior_turning_points: vec![10.0],
            weights: vec![1.0; 2],
        };
        assert!(evaluate_objective(ObjectiveVariant::F5, &c, &cfg, &bad_w).is_err());
        assert!(evaluate_objective(ObjectiveVariant::F4, &c, &cfg, &bad_w).is_ok());
    }

    #[test]
    fn hard_variants_on_planted_blocks() {
        let c = two_blocks(false);
        let cfg = SegmentationConfig {
            num_segments: 2,
            gamma_variance: 1.0,
            overlap_sigma: 5.0,
            date_max: 100.0,
        };
        let sol = Solution {
            interior_turning_points: vec![50.0],
            weights: vec![],
        };
        let ctx = ObjectiveContext::new(&c, &cfg).unwrap();
        assert_eq!(ctx.evaluate(ObjectiveVariant::F1, &sol).unwrap(), 0.0);
        // Each block is internally identical and fully unconnected from the other.
        assert!((ctx.evaluate(ObjectiveVariant::F2, &sol).unwrap() + 2.0).abs() < 1e-12);
        assert_eq!(ctx.evaluate(ObjectiveVariant::F3, &sol).unwrap(), 0.0);
        let split = Solution {
            interior_turning_points: vec![92.0],
            weights: vec![],
        };
        assert!(ctx.evaluate(ObjectiveVariant::F1, &split).unwrap() > 0.0);
    }

    fn sparse_vec() -> impl Strategy<Value = SparseVector> {
        prop::collection::vec((0usize..8, 0.0f64..1.0), 0..6).prop_map(SparseVector::from_pairs)
    }

    proptest! {
        #[test]
        fn soergel_is_a_metric(a in sparse_vec(), b in sparse_vec(), c in sparse_vec()) {
            let ab = soergel(&a, &b);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(ab, soergel(&b, &a));
            prop_assert_eq!(soergel(&a, &a), 0.0);
            prop_assert!(soergel(&a, &c) <= ab + soergel(&b, &c) + 1e-12);
        }

        #[test]
        fn overlap_is_permutation_invariant(mut pts in prop::collection::vec(0.0f64..100.0, 0..6), sigma in 0.1f64..20.0) {
            let before = overlap_penalty(&pts, sigma);
            prop_assert!(before >= 1.0);
            pts.reverse();
            prop_assert!((overlap_penalty(&pts, sigma) - before).abs() < 1e-12);
        }

        #[test]
        fn membership_sums_to_one(t in -20.0f64..120.0, mut pts in prop::collection::vec(0.0f64..100.0, 0..5), var in 0.1f64..50.0) {
            pts.sort_by(f64::total_cmp);
            let segs = segments_from_interior(&pts, 100.0);
            let p = membership_probabilities(t, &segs, var);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn uniformity_bounded(weights in prop::collection::vec(0.0f64..1.0, 5), pts in prop::collection::vec(0.0f64..100.0, 2)) {
            let c = candidates(vec![sv(&[(0, 1.0)]); 5], vec![0.0, 20.0, 45.0, 70.0, 100.0]);
            let segs = segments_from_interior(&pts, 100.0);
            let u = uniformity_penalty(&weights, &c, &segs, 4.0).unwrap();
            prop_assert!((1.0..=4.0).contains(&u));
        }
    }
}
