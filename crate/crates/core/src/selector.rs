//! Mask selection: random candidate seeding, similarity-driven expansion
//! scores, edge retention, and bounded top-k selection.
//!
//! Ordering conventions used throughout: scores sort descending, ties go to
//! the lower patch index. Candidates carry `+inf` and edge-retained patches
//! `-inf`, so both sentinels survive any ranking step.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::edge::{patch_edge_scores, EdgeDetector, EdgeScores};
use crate::error::{PgsError, Result};
use crate::image_io::{patchify, to_grayscale, GridGeometry, Image, PatchGrid};
use crate::otn::{refine_with_report, SinkhornConfig};
use crate::similarity::{
    alpha_schedule, blend, feature_similarity, image_similarity, BlendSchedule, EmbeddingMatrix, SimilarityMatrix,
};

/// Which candidates a patch is compared against when scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Neighborhood {
    /// 8-connected grid neighbors, falling back to all candidates when none is adjacent.
    Adjacent,
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskingConfig {
    pub initial_ratio: f64,
    pub lower_ratio: f64,
    pub upper_ratio: f64,
    pub edge_quantile: f64,
    pub neighborhood: Neighborhood,
    pub seed: u64,
    /// `None` disables edge retention.
    pub edge: Option<EdgeDetector>,
    /// `false` skips Sinkhorn refinement and ranks on the blended matrix directly.
    pub otn: bool,
}

impl Default for MaskingConfig {
    fn default() -> Self {
        Self::dynamic()
    }
}

impl MaskingConfig {
    /// Masking ratio varies per image within `[0.3, 0.5]`.
    pub fn dynamic() -> Self {
        Self {
            initial_ratio: 0.05,
            lower_ratio: 0.3,
            upper_ratio: 0.5,
            edge_quantile: 0.7,
            neighborhood: Neighborhood::Adjacent,
            seed: 0,
            edge: Some(EdgeDetector::Sobel),
            otn: true,
        }
    }

    /// Exactly half of the patches are masked.
    pub fn fixed() -> Self {
        Self { lower_ratio: 0.5, ..Self::dynamic() }
    }

    pub fn validate(&self) -> Result<()> {
        let (i, l, u) = (self.initial_ratio, self.lower_ratio, self.upper_ratio);
        if !(0.0 < i && i <= l && l <= u && u < 1.0) {
            return Err(PgsError::config(format!(
                "ratios must satisfy 0 < initial <= lower <= upper < 1, got {i}, {l}, {u}"
            )));
        }
        if !(0.0..=1.0).contains(&self.edge_quantile) {
            return Err(PgsError::config(format!("edge_quantile must lie in [0, 1], got {}", self.edge_quantile)));
        }
        Ok(())
    }

    pub fn is_fixed(&self) -> bool {
        self.lower_ratio == self.upper_ratio
    }

    pub fn lower_count(&self, n: usize) -> usize {
        floor_count(self.lower_ratio, n)
    }

    pub fn upper_count(&self, n: usize) -> usize {
        floor_count(self.upper_ratio, n)
    }

    pub fn candidate_count(&self, n: usize) -> usize {
        ((self.initial_ratio * n as f64).round() as usize).max(1).min(n)
    }
}

// Absorbs representation error such as 0.29 * 100 = 28.999999999999996.
fn floor_count(ratio: f64, n: usize) -> usize {
    ((ratio * n as f64) + 1e-9).floor() as usize
}

/// Everything needed to go from an image to a mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PgsConfig {
    pub patch_size: usize,
    pub masking: MaskingConfig,
    pub sinkhorn: SinkhornConfig,
    pub schedule: BlendSchedule,
}

impl Default for PgsConfig {
    fn default() -> Self {
        Self {
            patch_size: 16,
            masking: MaskingConfig::default(),
            sinkhorn: SinkhornConfig::default(),
            schedule: BlendSchedule::default(),
        }
    }
}

impl PgsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 {
            return Err(PgsError::config("patch_size must be positive"));
        }
        self.masking.validate()?;
        self.sinkhorn.validate()?;
        self.schedule.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridShape {
    pub grid_h: usize,
    pub grid_w: usize,
}

impl GridShape {
    pub fn n(&self) -> usize {
        self.grid_h * self.grid_w
    }

    /// 8-connected neighbors of `index`, ascending.
    pub fn neighbors(&self, index: usize) -> impl Iterator<Item = usize> + '_ {
        let (r, c) = ((index / self.grid_w) as isize, (index % self.grid_w) as isize);
        (-1isize..=1)
            .flat_map(move |dr| (-1isize..=1).map(move |dc| (r + dr, c + dc)))
            .filter(move |&(rr, cc)| {
                (rr, cc) != (r, c) && rr >= 0 && cc >= 0 && rr < self.grid_h as isize && cc < self.grid_w as isize
            })
            .map(move |(rr, cc)| rr as usize * self.grid_w + cc as usize)
    }
}

impl From<GridGeometry> for GridShape {
    fn from(g: GridGeometry) -> Self {
        Self { grid_h: g.grid_h, grid_w: g.grid_w }
    }
}

/// Sorted, duplicate-free initial mask candidates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub indices: Vec<usize>,
}

impl CandidateSet {
    pub fn contains(&self, index: usize) -> bool {
        self.indices.binary_search(&index).is_ok()
    }
}

/// Uniform sample without replacement. The sample is a prefix of one seeded
/// permutation, so a larger ratio under the same seed yields a superset.
pub fn init_candidates(n_patches: usize, cfg: &MaskingConfig, rng: &mut ChaCha8Rng) -> CandidateSet {
    let k = cfg.candidate_count(n_patches);
    let mut order: Vec<usize> = (0..n_patches).collect();
    order.shuffle(rng);
    let mut indices = order[..k].to_vec();
    indices.sort_unstable();
    CandidateSet { indices }
}

/// Mean refined similarity of each patch to the candidates around it.
/// Candidates score `+inf`.
pub fn expansion_scores(
    s_prime: &SimilarityMatrix,
    cand: &CandidateSet,
    cfg: &MaskingConfig,
    grid: GridShape,
) -> Result<Vec<f64>> {
    let n = s_prime.n();
    if grid.n() != n {
        return Err(PgsError::shape(format!(
            "{}x{} grid has {} patches but the similarity matrix is {n}x{n}",
            grid.grid_h,
            grid.grid_w,
            grid.n()
        )));
    }
    if let Some(&bad) = cand.indices.iter().find(|&&c| c >= n) {
        return Err(PgsError::shape(format!("candidate {bad} outside {n} patches")));
    }
    if cand.indices.is_empty() {
        return Err(PgsError::Degenerate("candidate set is empty".into()));
    }
    let global_mean =
        |p: usize| cand.indices.iter().map(|&q| s_prime.get(p, q)).sum::<f64>() / cand.indices.len() as f64;
    let scores = (0..n)
        .map(|p| {
            if cand.contains(p) {
                return f64::INFINITY;
            }
            match cfg.neighborhood {
                Neighborhood::Global => global_mean(p),
                Neighborhood::Adjacent => {
                    let (sum, count) = grid
                        .neighbors(p)
                        .filter(|&q| cand.contains(q))
                        .fold((0.0, 0usize), |(s, c), q| (s + s_prime.get(p, q), c + 1));
                    if count > 0 {
                        sum / count as f64
                    } else {
                        global_mean(p)
                    }
                }
            }
        })
        .collect();
    Ok(scores)
}

/// Scores after edge retention, plus which patches the rule touched.
#[derive(Debug, Clone, PartialEq)]
pub struct Retention {
    pub scores: Vec<f64>,
    /// Patches exempt from masking, ascending.
    pub retained: Vec<usize>,
    /// High-edge patches handed back to the selector so the lower bound holds, ascending.
    pub released: Vec<usize>,
    /// Quantile of the nonzero edge scores; `None` when the image has no edges.
    pub threshold: Option<f64>,
    pub warnings: Vec<String>,
}

impl Retention {
    /// No edge rule: scores pass through unchanged.
    pub fn none(scores: Vec<f64>) -> Self {
        Self { scores, retained: Vec::new(), released: Vec::new(), threshold: None, warnings: Vec::new() }
    }
}

/// Linear-interpolation quantile of an ascending slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64))
}

/// Exempts patches whose edge score reaches the configured quantile of the
/// nonzero edge scores. If too few patches remain maskable to reach the
/// lower bound, the weakest retained patches are released again.
pub fn apply_edge_retention(scores: &[f64], edge: &EdgeScores, cfg: &MaskingConfig) -> Result<Retention> {
    if scores.len() != edge.len() {
        return Err(PgsError::shape(format!("{} scores but {} edge scores", scores.len(), edge.len())));
    }
    let n = scores.len();
    let mut nonzero: Vec<f64> = edge.as_slice().iter().copied().filter(|&e| e > 0.0).collect();
    nonzero.sort_by(f64::total_cmp);
    let Some(threshold) = quantile_sorted(&nonzero, cfg.edge_quantile) else {
        return Ok(Retention::none(scores.to_vec()));
    };
    let mut high: Vec<usize> = (0..n).filter(|&p| edge.0[p] > 0.0 && edge.0[p] >= threshold).collect();

    let lower = cfg.lower_count(n);
    let maskable = n - high.len();
    let mut released = Vec::new();
    let mut warnings = Vec::new();
    if maskable < lower {
        let need = lower - maskable;
        let mut weakest = high.clone();
        weakest.sort_by(|&a, &b| edge.0[a].total_cmp(&edge.0[b]).then(a.cmp(&b)));
        released = weakest[..need].to_vec();
        released.sort_unstable();
        high.retain(|p| released.binary_search(p).is_err());
        warnings.push(format!(
            "{} high-edge patches leave {maskable} of {n} maskable, below the lower bound of {lower}; \
             released the {need} with the weakest edges",
            n - maskable
        ));
    }
    let mut adjusted = scores.to_vec();
    for &p in &high {
        adjusted[p] = f64::NEG_INFINITY;
    }
    Ok(Retention { scores: adjusted, retained: high, released, threshold: Some(threshold), warnings })
}

/// Ranked top-k selection within the masking bounds.
///
/// `k` is the number of patches scoring at least the median of the finite
/// scores, clamped to `[lower_count, upper_count]` and to the number of
/// maskable (non-retained) patches. When `lower == upper` this is exactly
/// `lower_count`.
pub fn select_mask(retention: &Retention, cfg: &MaskingConfig, geometry: &GridGeometry) -> Result<MaskPlan> {
    let scores = &retention.scores;
    let n = scores.len();
    if n != geometry.n_patches() {
        return Err(PgsError::shape(format!("{n} scores for a grid of {} patches", geometry.n_patches())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(PgsError::NumericInput("mask scores contain NaN".into()));
    }
    let (lower, upper) = (cfg.lower_count(n), cfg.upper_count(n));
    let mut warnings = retention.warnings.clone();

    let mut finite: Vec<f64> = scores.iter().copied().filter(|s| s.is_finite()).collect();
    finite.sort_by(f64::total_cmp);
    let above = match median_sorted(&finite) {
        Some(t) => scores.iter().filter(|&&s| s >= t).count(),
        None => scores.iter().filter(|&&s| s == f64::INFINITY).count(),
    };
    let maskable = scores.iter().filter(|&&s| s > f64::NEG_INFINITY).count();
    let ceiling = upper.min(maskable);
    if maskable < lower {
        warnings.push(format!("only {maskable} maskable patches, below the lower bound of {lower}"));
    }
    let k = above.max(lower).min(ceiling);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut masked = order[..k].to_vec();
    masked.sort_unstable();

    Ok(MaskPlan {
        grid_h: geometry.grid_h,
        grid_w: geometry.grid_w,
        patch_size: geometry.patch_size,
        ratio: k as f64 / n as f64,
        masked,
        scores: scores.clone(),
        candidates: Vec::new(),
        retained_by_edge: retention.retained.clone(),
        released_by_bound: retention.released.clone(),
        edge_threshold: retention.threshold,
        warnings,
    })
}

fn median_sorted(sorted: &[f64]) -> Option<f64> {
    let m = sorted.len();
    match m {
        0 => None,
        _ if m % 2 == 1 => Some(sorted[m / 2]),
        _ => Some(0.5 * (sorted[m / 2 - 1] + sorted[m / 2])),
    }
}

/// The masking decision for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskPlan {
    pub grid_h: usize,
    pub grid_w: usize,
    pub patch_size: usize,
    /// Masked patch indices, ascending.
    pub masked: Vec<usize>,
    pub ratio: f64,
    /// Final per-patch ranking scores. Serialized with `null` for the
    /// `+inf` candidate and `-inf` retained sentinels.
    #[serde(serialize_with = "finite_or_null", deserialize_with = "null_as_nan")]
    pub scores: Vec<f64>,
    pub candidates: Vec<usize>,
    pub retained_by_edge: Vec<usize>,
    pub released_by_bound: Vec<usize>,
    pub edge_threshold: Option<f64>,
    pub warnings: Vec<String>,
}

impl MaskPlan {
    /// A plan carrying only geometry and mask indices.
    pub fn bare(grid_h: usize, grid_w: usize, patch_size: usize, mut masked: Vec<usize>) -> Self {
        masked.sort_unstable();
        masked.dedup();
        let n = (grid_h * grid_w).max(1);
        Self {
            grid_h,
            grid_w,
            patch_size,
            ratio: masked.len() as f64 / n as f64,
            masked,
            scores: Vec::new(),
            candidates: Vec::new(),
            retained_by_edge: Vec::new(),
            released_by_bound: Vec::new(),
            edge_threshold: None,
            warnings: Vec::new(),
        }
    }

    pub fn n_patches(&self) -> usize {
        self.grid_h * self.grid_w
    }

    pub fn is_masked(&self, index: usize) -> bool {
        self.masked.binary_search(&index).is_ok()
    }

    /// Unmasked patch indices, ascending.
    pub fn kept(&self) -> Vec<usize> {
        (0..self.n_patches()).filter(|&p| !self.is_masked(p)).collect()
    }
}

fn finite_or_null<S: Serializer>(v: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|x| x.is_finite().then_some(*x)))
}

fn null_as_nan<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
    let v: Vec<Option<f64>> = Vec::deserialize(d)?;
    Ok(v.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect())
}

/// Pipeline stages, reported to a [`StageObserver`] as each one begins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Edge,
    Similarity,
    Sinkhorn,
    Selection,
    Done,
}

pub trait StageObserver {
    fn enter(&mut self, stage: Stage);
}

impl StageObserver for () {
    fn enter(&mut self, _: Stage) {}
}

/// Edge scores for the whole image; all zero when edge retention is off.
pub fn edge_stage(image: &Image, geometry: &GridGeometry, cfg: &MaskingConfig) -> Result<EdgeScores> {
    match cfg.edge {
        None => Ok(EdgeScores::zeros(geometry.n_patches())),
        Some(detector) => {
            let em = detector.detect(&to_grayscale(image))?;
            patch_edge_scores(&em, geometry)
        }
    }
}

/// Blended feature/image similarity at weight `alpha`.
pub fn similarity_stage(grid: &PatchGrid, features: &EmbeddingMatrix, alpha: f64) -> Result<SimilarityMatrix> {
    if features.rows() != grid.n_patches() {
        return Err(PgsError::shape(format!("{} feature rows for {} patches", features.rows(), grid.n_patches())));
    }
    let sx = feature_similarity(features);
    let si = image_similarity(grid);
    blend(&sx, &si, alpha)
}

/// Full mask generation with default (no-op) stage observation.
pub fn generate_mask(image: &Image, features: &EmbeddingMatrix, epoch: usize, cfg: &PgsConfig) -> Result<MaskPlan> {
    generate_mask_observed(image, features, epoch, cfg, &mut ())
}

/// Grayscale and edge scores, blended similarity, Sinkhorn refinement,
/// candidate expansion, edge retention and bounded selection.
pub fn generate_mask_observed(
    image: &Image,
    features: &EmbeddingMatrix,
    epoch: usize,
    cfg: &PgsConfig,
    observer: &mut dyn StageObserver,
) -> Result<MaskPlan> {
    cfg.validate()?;
    let grid = patchify(image, cfg.patch_size)?;
    let geometry = grid.geometry();

    observer.enter(Stage::Edge);
    let edge = edge_stage(image, &geometry, &cfg.masking)?;

    observer.enter(Stage::Similarity);
    let alpha = alpha_schedule(epoch, &cfg.schedule);
    let s = similarity_stage(&grid, features, alpha)?;

    observer.enter(Stage::Sinkhorn);
    let s_prime = if cfg.masking.otn { refine_with_report(&s, &cfg.sinkhorn)?.0 } else { s };

    observer.enter(Stage::Selection);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.masking.seed);
    let cand = init_candidates(geometry.n_patches(), &cfg.masking, &mut rng);
    let scores = expansion_scores(&s_prime, &cand, &cfg.masking, geometry.into())?;
    let retention = match cfg.masking.edge {
        Some(_) => apply_edge_retention(&scores, &edge, &cfg.masking)?,
        None => Retention::none(scores),
    };
    let mut plan = select_mask(&retention, &cfg.masking, &geometry)?;
    plan.candidates = cand.indices;
    observer.enter(Stage::Done);
    Ok(plan)
}

/// Uniform random masking of `floor(upper_ratio * n)` patches.
pub fn random_mask(geometry: &GridGeometry, cfg: &MaskingConfig) -> MaskPlan {
    let n = geometry.n_patches();
    let k = cfg.upper_count(n);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    MaskPlan::bare(geometry.grid_h, geometry.grid_w, geometry.patch_size, order[..k].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use proptest::prelude::*;
    use rand::Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn geometry(grid_h: usize, grid_w: usize) -> GridGeometry {
        GridGeometry::for_dims(grid_w, grid_h, 1).unwrap()
    }

    #[test]
    fn candidate_counts() {
        let cfg = MaskingConfig::default();
        assert_eq!(init_candidates(196, &cfg, &mut rng(1)).indices.len(), 10);
        assert_eq!(init_candidates(4, &cfg, &mut rng(1)).indices.len(), 1);
        assert_eq!(init_candidates(196, &cfg, &mut rng(5)), init_candidates(196, &cfg, &mut rng(5)));
    }

    #[test]
    fn candidates_are_sorted_unique() {
        let c = init_candidates(196, &MaskingConfig { initial_ratio: 0.3, ..Default::default() }, &mut rng(2));
        assert_eq!(c.indices.len(), 59);
        assert!(c.indices.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn bounds_counts_for_reference_grid() {
        let fixed = MaskingConfig::fixed();
        assert_eq!((fixed.lower_count(196), fixed.upper_count(196)), (98, 98));
        let dynamic = MaskingConfig::dynamic();
        assert_eq!((dynamic.lower_count(196), dynamic.upper_count(196)), (58, 98));
    }

    #[test]
    fn invalid_ratios_rejected() {
        for (i, l, u) in [(0.0, 0.3, 0.5), (0.4, 0.3, 0.5), (0.05, 0.6, 0.5), (0.05, 0.3, 1.0)] {
            let cfg = MaskingConfig { initial_ratio: i, lower_ratio: l, upper_ratio: u, ..Default::default() };
            assert!(matches!(cfg.validate(), Err(PgsError::Config(_))), "{i} {l} {u}");
        }
    }

    #[test]
    fn single_candidate_global_scores_are_its_column() {
        let mut m = Matrix::zeros(4, 4);
        for i in 0..4 {
            for j in 0..4 {
                m[(i, j)] = (i * 4 + j) as f64 / 10.0;
            }
        }
        let s = SimilarityMatrix::new(m.clone()).unwrap();
        let cfg = MaskingConfig { neighborhood: Neighborhood::Global, ..Default::default() };
        let cand = CandidateSet { indices: vec![2] };
        let scores = expansion_scores(&s, &cand, &cfg, GridShape { grid_h: 2, grid_w: 2 }).unwrap();
        for p in [0, 1, 3] {
            assert_eq!(scores[p], m[(p, 2)]);
        }
        assert_eq!(scores[2], f64::INFINITY);
    }

    #[test]
    fn equal_rows_give_equal_scores() {
        let s = SimilarityMatrix::new(Matrix::filled(6, 6, 0.3)).unwrap();
        let cand = CandidateSet { indices: vec![1, 4] };
        let scores =
            expansion_scores(&s, &cand, &MaskingConfig::default(), GridShape { grid_h: 2, grid_w: 3 }).unwrap();
        let finite: Vec<f64> = scores.iter().copied().filter(|s| s.is_finite()).collect();
        assert_eq!(finite.len(), 4);
        assert!(finite.iter().all(|&v| v == finite[0]));
    }

    #[test]
    fn center_candidate_adjacent_mode() {
        let mut m = Matrix::zeros(9, 9);
        for p in 0..9 {
            m[(p, 4)] = 0.1 * p as f64 + 0.05;
            m[(p, 0)] = 9.0; // would dominate a global mean over other candidates
        }
        let s = SimilarityMatrix::new(m.clone()).unwrap();
        let cand = CandidateSet { indices: vec![4] };
        let grid = GridShape { grid_h: 3, grid_w: 3 };
        assert_eq!(grid.neighbors(4).collect::<Vec<_>>(), vec![0, 1, 2, 3, 5, 6, 7, 8]);
        let scores = expansion_scores(&s, &cand, &MaskingConfig::default(), grid).unwrap();
        for p in [0, 1, 2, 3, 5, 6, 7, 8] {
            assert_eq!(scores[p], m[(p, 4)]);
        }
    }

    #[test]
    fn adjacent_mode_prefers_neighbors_then_falls_back() {
        // 1x4 strip, candidates at 0 and 3.
        let mut m = Matrix::zeros(4, 4);
        for p in 0..4 {
            m[(p, 0)] = 1.0;
            m[(p, 3)] = 3.0;
        }
        let s = SimilarityMatrix::new(m).unwrap();
        let cand = CandidateSet { indices: vec![0, 3] };
        let scores =
            expansion_scores(&s, &cand, &MaskingConfig::default(), GridShape { grid_h: 1, grid_w: 4 }).unwrap();
        assert_eq!(scores[1], 1.0);
        assert_eq!(scores[2], 3.0);

        // Isolated patch on a 1x5 strip falls back to the global mean.
        let mut m = Matrix::zeros(5, 5);
        for p in 0..5 {
            m[(p, 0)] = 1.0;
            m[(p, 4)] = 3.0;
        }
        let s = SimilarityMatrix::new(m).unwrap();
        let cand = CandidateSet { indices: vec![0, 4] };
        let scores =
            expansion_scores(&s, &cand, &MaskingConfig::default(), GridShape { grid_h: 1, grid_w: 5 }).unwrap();
        assert_eq!(scores[2], 2.0);
    }

    #[test]
    fn no_edges_retains_nothing() {
        let r = apply_edge_retention(&[0.1, 0.2, 0.3], &EdgeScores::zeros(3), &MaskingConfig::default()).unwrap();
        assert!(r.retained.is_empty() && r.released.is_empty());
        assert_eq!(r.threshold, None);
        assert_eq!(r.scores, vec![0.1, 0.2, 0.3]);
    }

    #[test]
    fn strong_edge_patch_is_never_masked() {
        let mut edge = vec![0.0; 16];
        edge[5] = 1.0;
        let cfg = MaskingConfig::fixed();
        let scores: Vec<f64> = (0..16).map(|p| if p == 5 { 10.0 } else { p as f64 / 100.0 }).collect();
        let r = apply_edge_retention(&scores, &EdgeScores(edge), &cfg).unwrap();
        assert_eq!(r.retained, vec![5]);
        let plan = select_mask(&r, &cfg, &geometry(4, 4)).unwrap();
        assert!(!plan.is_masked(5));
        assert_eq!(plan.masked.len(), 8);
    }

    #[test]
    fn release_rule_counting_example() {
        // 100 high-edge patches (scores 0.501..=1.0 after normalization), 96 with no edge.
        let n = 196;
        let edge: Vec<f64> = (0..n).map(|p| if p < 100 { 0.5 + (p + 1) as f64 / 200.0 } else { 0.0 }).collect();
        let cfg = MaskingConfig { lower_ratio: 0.5, upper_ratio: 0.5, edge_quantile: 0.0, ..Default::default() };
        assert_eq!(cfg.lower_count(n), 98);
        let r = apply_edge_retention(&vec![0.0; n], &EdgeScores(edge), &cfg).unwrap();
        assert_eq!(r.released, vec![0, 1]);
        assert_eq!(r.retained.len(), 98);
        assert_eq!(r.warnings.len(), 1);
        let plan = select_mask(&r, &cfg, &GridGeometry::for_dims(14, 14, 1).unwrap()).unwrap();
        assert_eq!(plan.masked.len(), 98);
        assert!(plan.is_masked(0) && plan.is_masked(1));
        assert!(plan.retained_by_edge.iter().all(|&p| !plan.is_masked(p)));
    }

    #[test]
    fn fixed_ratio_on_reference_grid() {
        let mut r = rng(4);
        let scores: Vec<f64> = (0..196).map(|_| r.gen_range(-1.0..1.0)).collect();
        let plan = select_mask(&Retention::none(scores.clone()), &MaskingConfig::fixed(), &geometry(14, 14)).unwrap();
        assert_eq!(plan.masked.len(), 98);
        assert_eq!(plan.ratio, 0.5);
        let dynamic = select_mask(&Retention::none(scores), &MaskingConfig::dynamic(), &geometry(14, 14)).unwrap();
        assert!((58..=98).contains(&dynamic.masked.len()));
    }

    #[test]
    fn ties_break_by_index() {
        let plan = select_mask(&Retention::none(vec![0.5; 4]), &MaskingConfig::fixed(), &geometry(2, 2)).unwrap();
        assert_eq!(plan.masked, vec![0, 1]);
    }

    #[test]
    fn median_rule_between_bounds() {
        // 10 patches, bounds [3, 5]; median of finite scores is 4.5, 5 scores reach it.
        let cfg = MaskingConfig { initial_ratio: 0.1, lower_ratio: 0.3, upper_ratio: 0.5, ..Default::default() };
        let scores: Vec<f64> = (0..10).map(f64::from).collect();
        let plan = select_mask(&Retention::none(scores.clone()), &cfg, &geometry(2, 5)).unwrap();
        assert_eq!(plan.masked, vec![5, 6, 7, 8, 9]);
        // Retaining the top four leaves a median of 2.5 over the rest: 3 reach it.
        let mut retained = scores;
        for s in &mut retained[6..] {
            *s = f64::NEG_INFINITY;
        }
        let plan = select_mask(&Retention::none(retained), &cfg, &geometry(2, 5)).unwrap();
        assert_eq!(plan.masked, vec![3, 4, 5]);
    }

    #[test]
    fn plan_json_uses_null_for_sentinels() {
        let plan = select_mask(
            &Retention::none(vec![f64::INFINITY, 0.25, f64::NEG_INFINITY, 0.5]),
            &MaskingConfig::fixed(),
            &geometry(2, 2),
        )
        .unwrap();
        let json = serde_json::to_string(&plan).unwrap();
        assert!(json.contains("\"scores\":[null,0.25,null,0.5]"), "{json}");
        let back: MaskPlan = serde_json::from_str(&json).unwrap();
        assert_eq!(back.masked, plan.masked);
    }

    #[test]
    fn random_mask_takes_upper_count() {
        let plan = random_mask(&geometry(14, 14), &MaskingConfig::dynamic());
        assert_eq!(plan.masked.len(), 98);
    }

    proptest! {
        #[test]
        fn nested_candidates(seed in any::<u64>(), a in 0.01f64..0.5, b in 0.01f64..0.5) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let small = init_candidates(196, &MaskingConfig { initial_ratio: lo, ..Default::default() }, &mut rng(seed));
            let large = init_candidates(196, &MaskingConfig { initial_ratio: hi, ..Default::default() }, &mut rng(seed));
            prop_assert!(small.indices.iter().all(|i| large.contains(*i)));
        }

        #[test]
        fn selection_respects_bounds(seed in any::<u64>(), lower in 0.1f64..0.5, span in 0.0f64..0.4, q in 0.0f64..1.0) {
            let cfg = MaskingConfig { initial_ratio: 0.05, lower_ratio: lower, upper_ratio: (lower + span).min(0.9), edge_quantile: q, ..Default::default() };
            let mut r = rng(seed);
            let n = 49;
            let s: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
            let edge: Vec<f64> = (0..n).map(|_| if r.gen_bool(0.5) { r.gen_range(0.0..1.0) } else { 0.0 }).collect();
            let ret = apply_edge_retention(&s, &EdgeScores(edge.clone()), &cfg).unwrap();
            let plan = select_mask(&ret, &cfg, &geometry(7, 7)).unwrap();
            prop_assert!(plan.masked.len() >= cfg.lower_count(n) && plan.masked.len() <= cfg.upper_count(n));
            prop_assert!(plan.retained_by_edge.iter().all(|&p| !plan.is_masked(p)));
            if let Some(t) = plan.edge_threshold {
                prop_assert!(plan.retained_by_edge.iter().chain(&plan.released_by_bound).all(|&p| edge[p] >= t));
            }
            prop_assert_eq!(plan.released_by_bound.is_empty(), plan.warnings.is_empty());
        }
    }
}
