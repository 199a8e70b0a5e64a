use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{PgsError, Result};
use crate::image_io::patchify;
use crate::matrix::{dot, Matrix};
use crate::selector::{generate_mask, random_mask, MaskPlan, PgsConfig};

use super::data::SyntheticPairs;
use super::encoders::ToyEncoders;
use super::loss::{info_nce, ContrastiveConfig, EmbeddingBatch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskingMode {
    None,
    Random,
    Pgs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub image_size: usize,
    pub patch_dim: usize,
    pub text_dim: usize,
    pub embed_dim: usize,
    pub heldout: usize,
    /// Steps per epoch; recall is evaluated and α advanced at each epoch boundary.
    pub steps_per_epoch: usize,
    pub masking: MaskingMode,
    /// Masking pipeline settings; `patch_size` also sets the encoder's patch size.
    pub pgs: PgsConfig,
    pub contrastive: ContrastiveConfig,
}

impl Default for TrainConfig {
    /// 56x56 images in 4-pixel patches give the 14x14, 196-patch grid.
    fn default() -> Self {
        let mut pgs = PgsConfig { patch_size: 4, ..PgsConfig::default() };
        pgs.schedule.ramp_epochs = 4;
        Self {
            steps: 200,
            batch_size: 32,
            learning_rate: 0.5,
            seed: 0,
            image_size: 56,
            patch_dim: 32,
            text_dim: 32,
            embed_dim: 32,
            heldout: 64,
            steps_per_epoch: 25,
            masking: MaskingMode::Pgs,
            pgs,
            contrastive: ContrastiveConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(PgsError::EmptyBatch);
        }
        if self.steps_per_epoch == 0 || self.heldout == 0 {
            return Err(PgsError::config("steps_per_epoch and heldout must be positive"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(PgsError::config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.image_size < self.pgs.patch_size.max(8) {
            return Err(PgsError::config(format!(
                "image_size {} too small for patch size {}",
                self.image_size, self.pgs.patch_size
            )));
        }
        self.pgs.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub step: usize,
    pub recall_at_1: f64,
}

/// Wall time split across one run, in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepTiming {
    pub data_secs: f64,
    pub masking_secs: f64,
    pub model_secs: f64,
}

impl StepTiming {
    /// Masking time as a fraction of masking plus forward/backward time.
    pub fn masking_fraction(&self) -> f64 {
        let total = self.masking_secs + self.model_secs;
        if total > 0.0 {
            self.masking_secs / total
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub losses: Vec<f64>,
    /// Mean realized mask ratio per step.
    pub mask_ratios: Vec<f64>,
    pub epochs: Vec<EpochRecord>,
    pub final_recall_at_1: f64,
    pub chance_recall_at_1: f64,
    pub timing: StepTiming,
    /// Temperature after the last step; unchanged unless learnable.
    pub final_temperature: f64,
}

/// Fraction of rows whose highest-scoring column is their own index.
/// Ties resolve to the lowest column.
pub fn recall_at_1(image: &Matrix, text: &Matrix) -> f64 {
    let n = image.rows();
    if n == 0 {
        return 0.0;
    }
    let hits = (0..n)
        .filter(|&i| {
            let scores = (0..text.rows()).map(|j| dot(image.row(i), text.row(j)));
            let best =
                scores.enumerate().fold((0, f64::NEG_INFINITY), |acc, (j, s)| if s > acc.1 { (j, s) } else { acc });
            best.0 == i
        })
        .count();
    hits as f64 / n as f64
}

const HELDOUT_OFFSET: u64 = 1 << 40;

fn evaluate(enc: &ToyEncoders, data: &SyntheticPairs, cfg: &TrainConfig) -> Result<f64> {
    let d = enc.embed_dim();
    let mut img = Vec::with_capacity(cfg.heldout * d);
    let mut txt = Vec::with_capacity(cfg.heldout * d);
    for k in 0..cfg.heldout as u64 {
        let s = data.sample(HELDOUT_OFFSET + k);
        let grid = patchify(&s.image, cfg.pgs.patch_size)?;
        let emb = enc.patch_embeddings(&grid)?;
        img.extend(enc.image_forward(&grid, &emb, None)?.embedding);
        txt.extend(enc.text_forward(&s.tokens)?.embedding);
    }
    Ok(recall_at_1(&Matrix::from_vec(cfg.heldout, d, img)?, &Matrix::from_vec(cfg.heldout, d, txt)?))
}

/// Trains the toy encoders with SGD on the synthetic pair stream.
///
/// Each image's mask seed is `seed + sample index`. Held-out recall is
/// computed on unmasked images at every epoch boundary and after the last step.
pub fn train_toy(cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let data = SyntheticPairs::new(cfg.seed, cfg.image_size);
    let patch = cfg.pgs.patch_size;
    let mut enc = ToyEncoders::new(
        patch * patch * 3,
        cfg.patch_dim,
        cfg.text_dim,
        cfg.embed_dim,
        SyntheticPairs::VOCAB,
        cfg.seed ^ 0x7f4a_7c15,
    );
    let mut report = TrainReport {
        losses: Vec::with_capacity(cfg.steps),
        mask_ratios: Vec::with_capacity(cfg.steps),
        epochs: Vec::new(),
        final_recall_at_1: 0.0,
        chance_recall_at_1: 1.0 / cfg.heldout as f64,
        timing: StepTiming::default(),
        final_temperature: cfg.contrastive.temperature,
    };

    let mut contrastive = cfg.contrastive;
    for step in 0..cfg.steps {
        let epoch = step / cfg.steps_per_epoch;
        let t0 = Instant::now();
        let samples: Vec<_> = (0..cfg.batch_size).map(|b| data.sample((step * cfg.batch_size + b) as u64)).collect();
        let grids = samples.iter().map(|s| patchify(&s.image, patch)).collect::<Result<Vec<_>>>()?;
        let t1 = Instant::now();
        report.timing.data_secs += (t1 - t0).as_secs_f64();

        let mut model_secs = 0.0;
        let mut masking_secs = 0.0;
        let mut patch_embeddings = Vec::with_capacity(cfg.batch_size);
        let mut plans: Vec<Option<MaskPlan>> = Vec::with_capacity(cfg.batch_size);
        for (b, (s, grid)) in samples.iter().zip(&grids).enumerate() {
            let ts = Instant::now();
            let emb = enc.patch_embeddings(grid)?;
            let tm = Instant::now();
            let mut mcfg = cfg.pgs.clone();
            mcfg.masking.seed = cfg.seed.wrapping_add((step * cfg.batch_size + b) as u64);
            let plan = match cfg.masking {
                MaskingMode::None => None,
                MaskingMode::Random => Some(random_mask(&grid.geometry(), &mcfg.masking)),
                MaskingMode::Pgs => Some(generate_mask(&s.image, &emb, epoch, &mcfg)?),
            };
            let te = Instant::now();
            model_secs += (tm - ts).as_secs_f64();
            masking_secs += (te - tm).as_secs_f64();
            patch_embeddings.push(emb);
            plans.push(plan);
        }

        let tf = Instant::now();
        let n = grids[0].n_patches() as f64;
        let ratio = plans.iter().map(|p| p.as_ref().map_or(0.0, |p| p.masked.len() as f64 / n)).sum::<f64>()
            / cfg.batch_size as f64;
        let mut img_fwd = Vec::with_capacity(cfg.batch_size);
        let mut txt_fwd = Vec::with_capacity(cfg.batch_size);
        for ((grid, emb), (plan, s)) in grids.iter().zip(&patch_embeddings).zip(plans.iter().zip(&samples)) {
            img_fwd.push(enc.image_forward(grid, emb, plan.as_ref())?);
            txt_fwd.push(enc.text_forward(&s.tokens)?);
        }
        let d = enc.embed_dim();
        let batch = EmbeddingBatch::new(
            Matrix::from_vec(cfg.batch_size, d, img_fwd.iter().flat_map(|f| f.embedding.iter().copied()).collect())?,
            Matrix::from_vec(cfg.batch_size, d, txt_fwd.iter().flat_map(|f| f.embedding.iter().copied()).collect())?,
        )?;
        let out = info_nce(&batch, &contrastive)?;
        if !out.loss.is_finite() {
            return Err(PgsError::Diverged {
                step,
                diagnostic: format!(
                    "loss {} (image {}, text {}), parameters finite: {}, last loss {:?}",
                    out.loss,
                    out.image_loss,
                    out.text_loss,
                    enc.all_finite(),
                    report.losses.last()
                ),
            });
        }
        let mut grads = enc.zero_grads();
        for (i, f) in img_fwd.iter().enumerate() {
            enc.image_backward(&grids[i], f, out.grad_image.row(i), &mut grads);
        }
        for (i, f) in txt_fwd.iter().enumerate() {
            enc.text_backward(f, out.grad_text.row(i), &mut grads);
        }
        enc.apply(&grads, cfg.learning_rate);
        if contrastive.learnable_temperature {
            contrastive.temperature =
                (contrastive.temperature.ln() - cfg.learning_rate * out.grad_log_temperature).exp();
        }
        model_secs += tf.elapsed().as_secs_f64();

        report.timing.model_secs += model_secs;
        report.timing.masking_secs += masking_secs;
        report.losses.push(out.loss);
        report.mask_ratios.push(ratio);

        if (step + 1) % cfg.steps_per_epoch == 0 || step + 1 == cfg.steps {
            report.epochs.push(EpochRecord { epoch, step: step + 1, recall_at_1: evaluate(&enc, &data, cfg)? });
        }
    }
    report.final_temperature = contrastive.temperature;
    report.final_recall_at_1 = report.epochs.last().map_or(0.0, |e| e.recall_at_1);
    Ok(report)
}
