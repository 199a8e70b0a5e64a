use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{PgsError, Result};
use crate::image_io::PatchGrid;
use crate::matrix::{dot, Matrix};
use crate::selector::MaskPlan;

use super::loss::EmbeddingBatch;

/// Small stand-ins for the image and text towers.
///
/// Image: per-patch linear embedding (also the feature source for mask
/// similarity), rectified, mean-pooled over kept patches, then projected.
/// Text: mean of token embeddings, then projected. Both outputs are
/// L2-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyEncoders {
    /// `patch_dim x patch_len`.
    pub patch_embed: Matrix,
    pub patch_bias: Vec<f64>,
    /// `embed_dim x patch_dim`.
    pub image_proj: Matrix,
    /// `vocab x text_dim`.
    pub token_embed: Matrix,
    /// `embed_dim x text_dim`.
    pub text_proj: Matrix,
}

/// Gradients with the same layout as [`ToyEncoders`].
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrads {
    pub patch_embed: Matrix,
    pub patch_bias: Vec<f64>,
    pub image_proj: Matrix,
    pub token_embed: Matrix,
    pub text_proj: Matrix,
}

/// Intermediate values of one image forward pass, kept for backprop.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageForward {
    /// Patches that survived masking, ascending.
    pub kept: Vec<usize>,
    /// Pre-activation embeddings of the kept patches, one row each.
    pub activations: Matrix,
    pub pooled: Vec<f64>,
    pub projected_norm: f64,
    pub embedding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextForward {
    pub tokens: Vec<usize>,
    pub pooled: Vec<f64>,
    pub projected_norm: f64,
    pub embedding: Vec<f64>,
}

fn uniform(rows: usize, cols: usize, fan_in: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let bound = (3.0 / fan_in.max(1) as f64).sqrt();
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect()).expect("sized")
}

#[inline]
fn scaled_pixel(v: u8) -> f64 {
    f64::from(v) / 255.0 - 0.5
}

fn normalize(v: &[f64]) -> (f64, Vec<f64>) {
    let norm = dot(v, v).sqrt().max(1e-12);
    (norm, v.iter().map(|x| x / norm).collect())
}

/// Backprop through `u = z / |z|`: returns d/dz given d/du.
fn normalize_backward(u: &[f64], norm: f64, grad_u: &[f64]) -> Vec<f64> {
    let along = dot(u, grad_u);
    u.iter().zip(grad_u).map(|(ui, gi)| (gi - ui * along) / norm).collect()
}

fn matvec(m: &Matrix, v: &[f64]) -> Vec<f64> {
    m.iter_rows().map(|r| dot(r, v)).collect()
}

/// `m += a bᵀ`.
fn add_outer(m: &mut Matrix, a: &[f64], b: &[f64]) {
    for (i, &ai) in a.iter().enumerate() {
        for (x, &bj) in m.row_mut(i).iter_mut().zip(b) {
            *x += ai * bj;
        }
    }
}

/// `mᵀ v`.
fn matvec_t(m: &Matrix, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m.cols()];
    for (r, &vi) in m.iter_rows().zip(v) {
        for (o, x) in out.iter_mut().zip(r) {
            *o += vi * x;
        }
    }
    out
}

impl ToyEncoders {
    pub fn new(patch_len: usize, patch_dim: usize, text_dim: usize, embed_dim: usize, vocab: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            patch_embed: uniform(patch_dim, patch_len, patch_len, &mut rng),
            patch_bias: vec![0.0; patch_dim],
            image_proj: uniform(embed_dim, patch_dim, patch_dim, &mut rng),
            token_embed: uniform(vocab, text_dim, 1, &mut rng),
            text_proj: uniform(embed_dim, text_dim, text_dim, &mut rng),
        }
    }

    pub fn embed_dim(&self) -> usize {
        self.image_proj.rows()
    }

    pub fn zero_grads(&self) -> EncoderGrads {
        EncoderGrads {
            patch_embed: Matrix::zeros(self.patch_embed.rows(), self.patch_embed.cols()),
            patch_bias: vec![0.0; self.patch_bias.len()],
            image_proj: Matrix::zeros(self.image_proj.rows(), self.image_proj.cols()),
            token_embed: Matrix::zeros(self.token_embed.rows(), self.token_embed.cols()),
            text_proj: Matrix::zeros(self.text_proj.rows(), self.text_proj.cols()),
        }
    }

    fn check_grid(&self, grid: &PatchGrid) -> Result<()> {
        if grid.geometry().patch_len() != self.patch_embed.cols() {
            return Err(PgsError::shape(format!(
                "encoder expects patches of {} values, got {}",
                self.patch_embed.cols(),
                grid.geometry().patch_len()
            )));
        }
        Ok(())
    }

    /// Linear embedding of every patch, `n_patches x patch_dim`.
    pub fn patch_embeddings(&self, grid: &PatchGrid) -> Result<Matrix> {
        self.check_grid(grid)?;
        let mut out = Matrix::zeros(grid.n_patches(), self.patch_embed.rows());
        let mut x = vec![0.0; grid.geometry().patch_len()];
        for (i, patch) in grid.iter().enumerate() {
            for (xi, &v) in x.iter_mut().zip(patch) {
                *xi = scaled_pixel(v);
            }
            for ((o, w), b) in out.row_mut(i).iter_mut().zip(self.patch_embed.iter_rows()).zip(&self.patch_bias) {
                *o = dot(w, &x) + b;
            }
        }
        Ok(out)
    }

    /// Rectifies and pools the precomputed `patch_embeddings` over the
    /// patches `plan` keeps (all of them when `plan` is `None`). Masked
    /// patches are dropped, not zeroed.
    pub fn image_forward(
        &self,
        grid: &PatchGrid,
        patch_embeddings: &Matrix,
        plan: Option<&MaskPlan>,
    ) -> Result<ImageForward> {
        self.check_grid(grid)?;
        let n = grid.n_patches();
        if patch_embeddings.rows() != n {
            return Err(PgsError::shape(format!("{} patch embeddings for {n} patches", patch_embeddings.rows())));
        }
        if let Some(p) = plan {
            if p.n_patches() != n {
                return Err(PgsError::shape(format!("mask plan covers {} patches, grid has {n}", p.n_patches())));
            }
        }
        let kept: Vec<usize> = (0..n).filter(|&i| plan.is_none_or(|p| !p.is_masked(i))).collect();
        if kept.is_empty() {
            return Err(PgsError::Degenerate("every patch is masked".into()));
        }
        let width = patch_embeddings.cols();
        let mut activations = Vec::with_capacity(kept.len() * width);
        let mut pooled = vec![0.0; width];
        for &i in &kept {
            let row = patch_embeddings.row(i);
            activations.extend_from_slice(row);
            for (p, &a) in pooled.iter_mut().zip(row) {
                *p += a.max(0.0);
            }
        }
        let inv = 1.0 / kept.len() as f64;
        pooled.iter_mut().for_each(|v| *v *= inv);
        let (projected_norm, embedding) = normalize(&matvec(&self.image_proj, &pooled));
        let activations = Matrix::from_vec(kept.len(), width, activations)?;
        Ok(ImageForward { kept, activations, pooled, projected_norm, embedding })
    }

    pub fn text_forward(&self, tokens: &[usize]) -> Result<TextForward> {
        if tokens.is_empty() {
            return Err(PgsError::Degenerate("empty caption".into()));
        }
        if let Some(&t) = tokens.iter().find(|&&t| t >= self.token_embed.rows()) {
            return Err(PgsError::shape(format!("token {t} outside vocabulary of {}", self.token_embed.rows())));
        }
        let mut pooled = vec![0.0; self.token_embed.cols()];
        for &t in tokens {
            for (p, e) in pooled.iter_mut().zip(self.token_embed.row(t)) {
                *p += e;
            }
        }
        pooled.iter_mut().for_each(|v| *v /= tokens.len() as f64);
        let (projected_norm, embedding) = normalize(&matvec(&self.text_proj, &pooled));
        Ok(TextForward { tokens: tokens.to_vec(), pooled, projected_norm, embedding })
    }

    /// Embeds a batch of masked images and captions.
    pub fn forward(&self, images: &[PatchGrid], plans: &[MaskPlan], tokens: &[Vec<usize>]) -> Result<EmbeddingBatch> {
        if images.len() != plans.len() || images.len() != tokens.len() {
            return Err(PgsError::shape(format!(
                "{} images, {} plans, {} captions",
                images.len(),
                plans.len(),
                tokens.len()
            )));
        }
        let d = self.embed_dim();
        let mut img = Vec::with_capacity(images.len() * d);
        let mut txt = Vec::with_capacity(images.len() * d);
        for ((grid, plan), toks) in images.iter().zip(plans).zip(tokens) {
            let emb = self.patch_embeddings(grid)?;
            img.extend(self.image_forward(grid, &emb, Some(plan))?.embedding);
            txt.extend(self.text_forward(toks)?.embedding);
        }
        EmbeddingBatch::new(Matrix::from_vec(images.len(), d, img)?, Matrix::from_vec(tokens.len(), d, txt)?)
    }

    pub fn image_backward(
        &self,
        grid: &PatchGrid,
        fwd: &ImageForward,
        grad_embedding: &[f64],
        grads: &mut EncoderGrads,
    ) {
        let grad_proj = normalize_backward(&fwd.embedding, fwd.projected_norm, grad_embedding);
        add_outer(&mut grads.image_proj, &grad_proj, &fwd.pooled);
        let grad_pooled = matvec_t(&self.image_proj, &grad_proj);
        let inv = 1.0 / fwd.kept.len() as f64;
        let mut x = vec![0.0; grid.geometry().patch_len()];
        let mut grad_act = vec![0.0; grad_pooled.len()];
        for (row, &i) in fwd.kept.iter().enumerate() {
            let mut any = false;
            for ((g, &gp), &a) in grad_act.iter_mut().zip(&grad_pooled).zip(fwd.activations.row(row)) {
                *g = if a > 0.0 { gp * inv } else { 0.0 };
                any |= a > 0.0;
            }
            if !any {
                continue;
            }
            for (xi, &v) in x.iter_mut().zip(grid.patch(i)) {
                *xi = scaled_pixel(v);
            }
            add_outer(&mut grads.patch_embed, &grad_act, &x);
            for (g, d) in grads.patch_bias.iter_mut().zip(&grad_act) {
                *g += d;
            }
        }
    }

    pub fn text_backward(&self, fwd: &TextForward, grad_embedding: &[f64], grads: &mut EncoderGrads) {
        let grad_proj = normalize_backward(&fwd.embedding, fwd.projected_norm, grad_embedding);
        add_outer(&mut grads.text_proj, &grad_proj, &fwd.pooled);
        let grad_pooled = matvec_t(&self.text_proj, &grad_proj);
        let share = 1.0 / fwd.tokens.len() as f64;
        for &t in &fwd.tokens {
            for (g, d) in grads.token_embed.row_mut(t).iter_mut().zip(&grad_pooled) {
                *g += d * share;
            }
        }
    }

    /// Plain SGD step.
    pub fn apply(&mut self, grads: &EncoderGrads, lr: f64) {
        fn step(p: &mut [f64], g: &[f64], lr: f64) {
            for (x, d) in p.iter_mut().zip(g) {
                *x -= lr * d;
            }
        }
        step(self.patch_embed.as_mut_slice(), grads.patch_embed.as_slice(), lr);
        step(&mut self.patch_bias, &grads.patch_bias, lr);
        step(self.image_proj.as_mut_slice(), grads.image_proj.as_slice(), lr);
        step(self.token_embed.as_mut_slice(), grads.token_embed.as_slice(), lr);
        step(self.text_proj.as_mut_slice(), grads.text_proj.as_slice(), lr);
    }

    pub fn all_finite(&self) -> bool {
        self.patch_embed.all_finite()
            && self.patch_bias.iter().all(|v| v.is_finite())
            && self.image_proj.all_finite()
            && self.token_embed.all_finite()
            && self.text_proj.all_finite()
    }

    /// Flattened parameters in a fixed order (used by gradient checks).
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.patch_embed.as_slice().to_vec();
        v.extend(&self.patch_bias);
        v.extend(self.image_proj.as_slice());
        v.extend(self.token_embed.as_slice());
        v.extend(self.text_proj.as_slice());
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut rest = flat;
        for dst in [
            self.patch_embed.as_mut_slice(),
            &mut self.patch_bias[..],
            self.image_proj.as_mut_slice(),
            self.token_embed.as_mut_slice(),
            self.text_proj.as_mut_slice(),
        ] {
            let (head, tail) = rest.split_at(dst.len());
            dst.copy_from_slice(head);
            rest = tail;
        }
    }
}

impl EncoderGrads {
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.patch_embed.as_slice().to_vec();
        v.extend(&self.patch_bias);
        v.extend(self.image_proj.as_slice());
        v.extend(self.token_embed.as_slice());
        v.extend(self.text_proj.as_slice());
        v
    }

    pub fn l2_norm(&self) -> f64 {
        self.to_flat().iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contrastive::{finite_diff_check, info_nce, ContrastiveConfig, SyntheticPairs};
    use crate::image_io::{patchify, Image};

    fn encoders() -> ToyEncoders {
        ToyEncoders::new(4 * 4 * 3, 6, 5, 4, SyntheticPairs::VOCAB, 1)
    }

    #[test]
    fn constant_image_embedding_ignores_mask() {
        let enc = encoders();
        let grid = patchify(&Image::filled(16, 16, [120, 30, 200]), 4).unwrap();
        let emb = enc.patch_embeddings(&grid).unwrap();
        let full = enc.image_forward(&grid, &emb, None).unwrap();
        let plan = MaskPlan::bare(4, 4, 4, vec![0, 3, 5, 6, 9, 15]);
        let masked = enc.image_forward(&grid, &emb, Some(&plan)).unwrap();
        assert_eq!(masked.kept.len(), 16 - 6);
        for (a, b) in full.embedding.iter().zip(&masked.embedding) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn different_masks_differ_on_two_patch_image() {
        let enc = encoders();
        let mut img = Image::filled(8, 4, [10, 10, 10]);
        for y in 0..4 {
            for x in 4..8 {
                img.set_pixel(x, y, [250, 0, 90]);
            }
        }
        let grid = patchify(&img, 4).unwrap();
        let emb = enc.patch_embeddings(&grid).unwrap();
        let a = enc.image_forward(&grid, &emb, Some(&MaskPlan::bare(1, 2, 4, vec![0]))).unwrap();
        let b = enc.image_forward(&grid, &emb, Some(&MaskPlan::bare(1, 2, 4, vec![1]))).unwrap();
        assert!(a.embedding.iter().zip(&b.embedding).any(|(x, y)| (x - y).abs() > 1e-6));
    }

    #[test]
    fn fully_masked_image_is_degenerate() {
        let enc = encoders();
        let grid = patchify(&Image::filled(8, 8, [1, 2, 3]), 4).unwrap();
        let emb = enc.patch_embeddings(&grid).unwrap();
        let plan = MaskPlan::bare(2, 2, 4, vec![0, 1, 2, 3]);
        assert!(matches!(enc.image_forward(&grid, &emb, Some(&plan)), Err(PgsError::Degenerate(_))));
    }

    #[test]
    fn forward_outputs_unit_rows() {
        let enc = encoders();
        let data = SyntheticPairs::new(2, 16);
        let samples: Vec<_> = (0..3).map(|i| data.sample(i)).collect();
        let grids: Vec<_> = samples.iter().map(|s| patchify(&s.image, 4).unwrap()).collect();
        let plans = vec![MaskPlan::bare(4, 4, 4, vec![1, 2]); 3];
        let tokens: Vec<_> = samples.iter().map(|s| s.tokens.clone()).collect();
        let batch = enc.forward(&grids, &plans, &tokens).unwrap();
        assert!(batch.is_normalized(1e-9));
    }

    /// End-to-end parameter gradients of loss(encoders) against central differences.
    #[test]
    fn encoder_gradients_match_finite_differences() {
        let base = encoders();
        let data = SyntheticPairs::new(9, 16);
        let samples: Vec<_> = (0..4).map(|i| data.sample(i)).collect();
        let grids: Vec<_> = samples.iter().map(|s| patchify(&s.image, 4).unwrap()).collect();
        let plans: Vec<_> = (0..4).map(|i| MaskPlan::bare(4, 4, 4, vec![i, i + 5, 12])).collect();
        let cfg = ContrastiveConfig { temperature: 0.5, ..Default::default() };

        let f = |flat: &[f64]| {
            let mut enc = base.clone();
            enc.set_flat(flat);
            let mut img_fwd = Vec::new();
            let mut txt_fwd = Vec::new();
            for ((g, p), s) in grids.iter().zip(&plans).zip(&samples) {
                let emb = enc.patch_embeddings(g).unwrap();
                img_fwd.push(enc.image_forward(g, &emb, Some(p)).unwrap());
                txt_fwd.push(enc.text_forward(&s.tokens).unwrap());
            }
            let d = enc.embed_dim();
            let im = Matrix::from_vec(4, d, img_fwd.iter().flat_map(|f| f.embedding.clone()).collect()).unwrap();
            let tx = Matrix::from_vec(4, d, txt_fwd.iter().flat_map(|f| f.embedding.clone()).collect()).unwrap();
            let out = info_nce(&EmbeddingBatch::new(im, tx).unwrap(), &cfg).unwrap();
            let mut grads = enc.zero_grads();
            for (i, f) in img_fwd.iter().enumerate() {
                enc.image_backward(&grids[i], f, out.grad_image.row(i), &mut grads);
            }
            for (i, f) in txt_fwd.iter().enumerate() {
                enc.text_backward(f, out.grad_text.row(i), &mut grads);
            }
            (out.loss, grads.to_flat())
        };
        let check = finite_diff_check(f, &base.to_flat(), 1e-6);
        assert!(check.max_absolute_error < 1e-7, "{check:?}");
    }
}
