//! Patch affinity matrices: feature cosine similarity, image cosine
//! similarity, and their epoch-weighted blend.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PgsError, Result};
use crate::image_io::PatchGrid;
use crate::matrix::{dot, Matrix};

/// One embedding row per patch.
pub type EmbeddingMatrix = Matrix;

/// Square patch-by-patch affinity matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimilarityMatrix(Matrix);

impl SimilarityMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        if !m.is_square() {
            return Err(PgsError::shape(format!("similarity matrix must be square, got {}x{}", m.rows(), m.cols())));
        }
        Ok(Self(m))
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.0.rows()
    }

    #[inline]
    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }
}

impl From<SimilarityMatrix> for Matrix {
    fn from(s: SimilarityMatrix) -> Matrix {
        s.0
    }
}

/// Linear ramp of the feature weight α over training epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlendSchedule {
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub ramp_epochs: usize,
}

impl Default for BlendSchedule {
    /// Image-dominant at epoch 0, reaching 0.8 halfway through a 32-epoch run.
    fn default() -> Self {
        Self { alpha_min: 0.0, alpha_max: 0.8, ramp_epochs: 16 }
    }
}

impl BlendSchedule {
    /// Constant α, independent of epoch.
    pub fn constant(alpha: f64) -> Self {
        Self { alpha_min: alpha, alpha_max: alpha, ramp_epochs: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = 0.0..=1.0;
        if !unit.contains(&self.alpha_min) || !unit.contains(&self.alpha_max) {
            return Err(PgsError::config(format!(
                "alpha bounds must lie in [0, 1], got [{}, {}]",
                self.alpha_min, self.alpha_max
            )));
        }
        if self.alpha_min > self.alpha_max {
            return Err(PgsError::config(format!("alpha_min {} exceeds alpha_max {}", self.alpha_min, self.alpha_max)));
        }
        Ok(())
    }
}

pub fn alpha_schedule(epoch: usize, sched: &BlendSchedule) -> f64 {
    if sched.ramp_epochs == 0 {
        return sched.alpha_max;
    }
    let progress = (epoch as f64 / sched.ramp_epochs as f64).min(1.0);
    let alpha = sched.alpha_min + (sched.alpha_max - sched.alpha_min) * progress;
    alpha.clamp(sched.alpha_min, sched.alpha_max)
}

/// Scales each nonzero row to unit L2 norm; zero rows stay zero.
pub fn normalize_rows(x: &EmbeddingMatrix) -> EmbeddingMatrix {
    let mut out = x.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let norm = dot(row, row).sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
    out
}

/// Gram matrix `X Xᵀ` of row-normalized embeddings. Only the upper triangle
/// is computed, so the result is exactly symmetric.
pub fn cosine_similarity(x: &EmbeddingMatrix) -> SimilarityMatrix {
    SimilarityMatrix(x.gram())
}

/// `alpha * feature + (1 - alpha) * image`, elementwise.
pub fn blend(feature: &SimilarityMatrix, image: &SimilarityMatrix, alpha: f64) -> Result<SimilarityMatrix> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(PgsError::config(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    if feature.n() != image.n() {
        return Err(PgsError::shape(format!("cannot blend {n}x{n} with {m}x{m}", n = feature.n(), m = image.n())));
    }
    let data =
        feature.0.as_slice().iter().zip(image.0.as_slice()).map(|(f, i)| alpha * f + (1.0 - alpha) * i).collect();
    Ok(SimilarityMatrix(Matrix::from_vec(feature.n(), feature.n(), data)?))
}

/// Flattened patch pixels, each patch shifted to zero mean.
pub fn pixel_embeddings(grid: &PatchGrid) -> EmbeddingMatrix {
    let len = grid.geometry().patch_len();
    let mut data = Vec::with_capacity(grid.n_patches() * len);
    for patch in grid.iter() {
        let mean = patch.iter().map(|&v| f64::from(v)).sum::<f64>() / len as f64;
        data.extend(patch.iter().map(|&v| f64::from(v) - mean));
    }
    Matrix::from_vec(grid.n_patches(), len, data).expect("patch buffer length is grid-consistent")
}

/// Image affinity: cosine similarity of mean-centered patch pixels.
///
/// Computed from exact integer sums: with `G = Σ a·b` and patch sums `s`,
/// `L · (centered dot) = L·G - s_a·s_b`, so there is no cancellation error.
/// Constant patches have zero rows.
pub fn image_similarity(grid: &PatchGrid) -> SimilarityMatrix {
    let n = grid.n_patches();
    let len = grid.geometry().patch_len();
    // L * G <= L^2 * 255^2 must fit in an i64
    if len > 11_000_000 {
        return cosine_similarity(&normalize_rows(&pixel_embeddings(grid)));
    }
    let len = len as i64;
    let patches: Vec<&[u8]> = grid.iter().collect();
    let gram = byte_gram(&patches);
    let sums: Vec<i64> = patches.iter().map(|p| p.iter().map(|&v| i64::from(v)).sum()).collect();
    let centered = |i: usize, j: usize| len * gram[i * n + j] as i64 - sums[i] * sums[j];
    let norms: Vec<f64> = (0..n).map(|i| (centered(i, i) as f64).sqrt()).collect();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let d = norms[i] * norms[j];
            let v = if d > 0.0 { centered(i, j) as f64 / d } else { 0.0 };
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    SimilarityMatrix(out)
}

/// Upper triangle (row-major, `n x n`) of pairwise byte dot products.
fn byte_gram(patches: &[&[u8]]) -> Vec<u64> {
    // Widened once so the inner loop maps onto pairwise i16 multiply-add.
    let len = patches.first().map_or(0, |p| p.len());
    let wide: Vec<i16> = patches.iter().flat_map(|p| p.iter().map(|&v| i16::from(v))).collect();
    #[cfg(target_arch = "x86_64")]
    if std::is_x86_feature_detected!("avx2") {
        // SAFETY: the feature was detected at runtime just above.
        return unsafe { byte_gram_avx2(&wide, patches.len(), len) };
    }
    byte_gram_portable(&wide, patches.len(), len)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn byte_gram_avx2(wide: &[i16], n: usize, len: usize) -> Vec<u64> {
    byte_gram_portable(wide, n, len)
}

#[inline(always)]
fn byte_gram_portable(wide: &[i16], n: usize, len: usize) -> Vec<u64> {
    let mut out = vec![0u64; n * n];
    if len == 0 {
        return out;
    }
    let row = |i: usize| &wide[i * len..(i + 1) * len];
    for i in 0..n {
        for j in i..n {
            out[i * n + j] = wide_dot(row(i), row(j));
        }
    }
    out
}

#[inline(always)]
fn wide_dot(a: &[i16], b: &[i16]) -> u64 {
    // 32768 products of at most 255^2 fit in an i32, so wrapping ops are
    // exact here and keep overflow checks out of the vector loop.
    const CHUNK: usize = 32768;
    a.chunks(CHUNK)
        .zip(b.chunks(CHUNK))
        .map(|(x, y)| {
            x.iter().zip(y).fold(0i32, |acc, (&p, &q)| acc.wrapping_add(i32::from(p).wrapping_mul(i32::from(q)))) as u64
        })
        .sum()
}

/// Feature affinity: cosine similarity of the given patch features.
pub fn feature_similarity(features: &EmbeddingMatrix) -> SimilarityMatrix {
    cosine_similarity(&normalize_rows(features))
}

/// Fixed random linear patch embedding used when no trained encoder is
/// available. Weights are uniform with variance `1 / input_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomProjection {
    weights: Matrix,
}

impl RandomProjection {
    pub const DEFAULT_DIM: usize = 32;

    pub fn new(input_dim: usize, output_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = (3.0 / input_dim.max(1) as f64).sqrt();
        let data = (0..input_dim * output_dim).map(|_| rng.gen_range(-bound..bound)).collect();
        Self { weights: Matrix::from_vec(output_dim, input_dim, data).expect("sized above") }
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }

    /// Projects every patch of `grid` (pixels scaled to `[0, 1]`).
    pub fn embed(&self, grid: &PatchGrid) -> Result<EmbeddingMatrix> {
        let len = grid.geometry().patch_len();
        if len != self.weights.cols() {
            return Err(PgsError::shape(format!(
                "projection expects patches of {} values, grid has {len}",
                self.weights.cols()
            )));
        }
        let mut out = Matrix::zeros(grid.n_patches(), self.output_dim());
        let mut scaled = vec![0.0; len];
        for (i, patch) in grid.iter().enumerate() {
            for (s, &v) in scaled.iter_mut().zip(patch) {
                *s = f64::from(v) / 255.0;
            }
            for (o, w) in out.row_mut(i).iter_mut().zip(self.weights.iter_rows()) {
                *o = dot(w, &scaled);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalize_rows_cases() {
        let x = Matrix::from_rows(&[[3.0, 4.0], [1.0, 0.0], [0.0, 0.0]]).unwrap();
        let n = normalize_rows(&x);
        assert!((n[(0, 0)] - 0.6).abs() < 1e-15 && (n[(0, 1)] - 0.8).abs() < 1e-15);
        assert_eq!(n.row(1), &[1.0, 0.0]);
        assert_eq!(n.row(2), &[0.0, 0.0]);
    }

    #[test]
    fn cosine_cases() {
        let same = cosine_similarity(&Matrix::from_rows(&[[0.6, 0.8], [0.6, 0.8]]).unwrap());
        assert!(same.matrix().max_abs_diff(&Matrix::filled(2, 2, 1.0)) < 1e-15);

        let ortho = cosine_similarity(&Matrix::identity(3));
        assert_eq!(ortho.matrix(), &Matrix::identity(3));

        let h = std::f64::consts::FRAC_1_SQRT_2;
        let s = cosine_similarity(&Matrix::from_rows(&[[1.0, 0.0], [h, h]]).unwrap());
        assert!((s.get(0, 1) - 0.707_106_781_186_547_5).abs() < 1e-12);
    }

    #[test]
    fn blend_cases() {
        let sx = SimilarityMatrix::new(Matrix::filled(2, 2, 0.2)).unwrap();
        let si = SimilarityMatrix::new(Matrix::filled(2, 2, 0.6)).unwrap();
        assert_eq!(blend(&sx, &si, 1.0).unwrap(), sx);
        assert_eq!(blend(&sx, &si, 0.0).unwrap(), si);
        assert!((blend(&sx, &si, 0.5).unwrap().get(0, 1) - 0.4).abs() < 1e-15);
        assert!(matches!(blend(&sx, &si, 1.5), Err(PgsError::Config(_))));
        let small = SimilarityMatrix::new(Matrix::zeros(1, 1)).unwrap();
        assert!(matches!(blend(&sx, &small, 0.5), Err(PgsError::Shape(_))));
    }

    #[test]
    fn schedule_cases() {
        let s = BlendSchedule { alpha_min: 0.0, alpha_max: 0.8, ramp_epochs: 16 };
        assert_eq!(alpha_schedule(0, &s), 0.0);
        assert_eq!(alpha_schedule(16, &s), 0.8);
        assert_eq!(alpha_schedule(99, &s), 0.8);
        assert!((alpha_schedule(8, &s) - 0.4).abs() < 1e-15);
        let flat = BlendSchedule { ramp_epochs: 0, ..s };
        assert_eq!(alpha_schedule(0, &flat), 0.8);
    }

    #[test]
    fn image_similarity_matches_float_path() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for (w, h, p) in [(12, 8, 4), (32, 32, 16), (10, 10, 5)] {
            let data: Vec<u8> = (0..w * h * 3).map(|_| rng.gen()).collect();
            let mut img = crate::image_io::Image::new(w, h, data).unwrap();
            for y in 0..p {
                for x in 0..p {
                    img.set_pixel(x, y, [7, 7, 7]);
                }
            }
            let grid = crate::image_io::patchify(&img, p).unwrap();
            let float = cosine_similarity(&normalize_rows(&pixel_embeddings(&grid)));
            let exact = image_similarity(&grid);
            assert!(exact.matrix().max_abs_diff(float.matrix()) < 1e-12);
            assert_eq!(exact.matrix(), &exact.matrix().transpose());
            assert_eq!(exact.get(0, 0), 0.0);
        }
    }

    #[test]
    fn uniform_patch_has_zero_image_row() {
        let img = crate::image_io::Image::filled(8, 4, [9, 9, 9]);
        let grid = crate::image_io::patchify(&img, 4).unwrap();
        let s = image_similarity(&grid);
        assert_eq!(s.matrix(), &Matrix::zeros(2, 2));
    }

    fn arb_matrix() -> impl Strategy<Value = Matrix> {
        (1usize..12, 1usize..10).prop_flat_map(|(r, c)| {
            proptest::collection::vec(-5.0f64..5.0, r * c).prop_map(move |d| Matrix::from_vec(r, c, d).unwrap())
        })
    }

    proptest! {
        #[test]
        fn cosine_symmetric_unit_diagonal(x in arb_matrix()) {
            let xn = normalize_rows(&x);
            let s = cosine_similarity(&xn);
            for i in 0..s.n() {
                let nonzero = x.row(i).iter().any(|&v| v != 0.0);
                if nonzero {
                    prop_assert!((s.get(i, i) - 1.0).abs() < 1e-9);
                }
                for j in 0..s.n() {
                    prop_assert!((s.get(i, j) - s.get(j, i)).abs() < 1e-9);
                    prop_assert!(s.get(i, j).abs() <= 1.0 + 1e-12);
                }
            }
        }

        #[test]
        fn blend_monotone_where_feature_dominates(x in arb_matrix(), seed in any::<u64>(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let sx = cosine_similarity(&normalize_rows(&x));
            let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
            let y = Matrix::from_vec(x.rows(), 3, (0..x.rows() * 3).map(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0)).collect()).unwrap();
            let si = cosine_similarity(&normalize_rows(&y));
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let l = blend(&sx, &si, lo).unwrap();
            let h = blend(&sx, &si, hi).unwrap();
            for i in 0..sx.n() {
                for j in 0..sx.n() {
                    if sx.get(i, j) >= si.get(i, j) {
                        prop_assert!(h.get(i, j) >= l.get(i, j) - 1e-15);
                    }
                }
            }
        }

        #[test]
        fn schedule_non_decreasing(lo in 0.0f64..1.0, span in 0.0f64..1.0, ramp in 0usize..40, e in 0usize..60) {
            let s = BlendSchedule { alpha_min: lo, alpha_max: (lo + span).min(1.0), ramp_epochs: ramp };
            prop_assert!(alpha_schedule(e + 1, &s) >= alpha_schedule(e, &s));
            let a = alpha_schedule(e, &s);
            prop_assert!(a >= s.alpha_min && a <= s.alpha_max);
        }
    }
}
