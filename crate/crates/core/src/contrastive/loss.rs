use serde::{Deserialize, Serialize};

use crate::error::{PgsError, Result};
use crate::matrix::Matrix;
use crate::similarity::normalize_rows;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveConfig {
    pub temperature: f64,
    /// Train `ln(temperature)` alongside the encoders.
    pub learnable_temperature: bool,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        Self { temperature: 0.07, learnable_temperature: false }
    }
}

/// Paired image and text embeddings, one pair per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch {
    pub image: Matrix,
    pub text: Matrix,
}

impl EmbeddingBatch {
    /// Wraps the matrices as given; rows are expected to be unit length.
    pub fn new(image: Matrix, text: Matrix) -> Result<Self> {
        if image.rows() != text.rows() || image.cols() != text.cols() {
            return Err(PgsError::shape(format!(
                "image embeddings {}x{} vs text embeddings {}x{}",
                image.rows(),
                image.cols(),
                text.rows(),
                text.cols()
            )));
        }
        Ok(Self { image, text })
    }

    pub fn normalized(image: &Matrix, text: &Matrix) -> Result<Self> {
        Self::new(normalize_rows(image), normalize_rows(text))
    }

    pub fn batch_size(&self) -> usize {
        self.image.rows()
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        [&self.image, &self.text]
            .iter()
            .all(|m| m.iter_rows().all(|r| (r.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs() <= tol))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfoNceOutput {
    pub loss: f64,
    pub image_loss: f64,
    pub text_loss: f64,
    /// d loss / d image embeddings.
    pub grad_image: Matrix,
    /// d loss / d text embeddings.
    pub grad_text: Matrix,
    /// d loss / d ln(temperature).
    pub grad_log_temperature: f64,
    /// Row-wise softmax of the logits (image to text).
    pub image_to_text: Matrix,
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Symmetric InfoNCE on a square logit matrix whose diagonal holds the
/// matched pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitLoss {
    pub loss: f64,
    /// Mean of `-log softmax` of each row's diagonal entry.
    pub image_loss: f64,
    /// The same over columns.
    pub text_loss: f64,
    /// d loss / d logits = ((P - I) + (Q - I)) / 2B with P, Q the row and column softmaxes.
    pub grad_logits: Matrix,
    /// Row softmax `P`.
    pub row_softmax: Matrix,
}

pub fn info_nce_logits(logits: &Matrix) -> Result<LogitLoss> {
    let b = logits.rows();
    if b == 0 {
        return Err(PgsError::EmptyBatch);
    }
    if !logits.is_square() {
        return Err(PgsError::shape(format!("logits must be square, got {}x{}", b, logits.cols())));
    }
    let row_lse: Vec<f64> = (0..b).map(|i| log_sum_exp(logits.row(i).iter().copied())).collect();
    let col_lse: Vec<f64> = (0..b).map(|j| log_sum_exp((0..b).map(|i| logits[(i, j)]))).collect();
    let image_loss = (0..b).map(|i| row_lse[i] - logits[(i, i)]).sum::<f64>() / b as f64;
    let text_loss = (0..b).map(|j| col_lse[j] - logits[(j, j)]).sum::<f64>() / b as f64;

    let scale = 0.5 / b as f64;
    let mut p = Matrix::zeros(b, b);
    let mut g = Matrix::zeros(b, b);
    for i in 0..b {
        for j in 0..b {
            let l = logits[(i, j)];
            let pij = (l - row_lse[i]).exp();
            let qij = (l - col_lse[j]).exp();
            let delta = if i == j { 2.0 } else { 0.0 };
            p[(i, j)] = pij;
            g[(i, j)] = scale * (pij + qij - delta);
        }
    }
    Ok(LogitLoss { loss: 0.5 * (image_loss + text_loss), image_loss, text_loss, grad_logits: g, row_softmax: p })
}

/// Symmetric InfoNCE over logits `image · textᵀ / temperature`; the loss is
/// the average of the image-to-text and text-to-image terms.
pub fn info_nce(batch: &EmbeddingBatch, cfg: &ContrastiveConfig) -> Result<InfoNceOutput> {
    if !(cfg.temperature > 0.0) {
        return Err(PgsError::config(format!("temperature must be positive, got {}", cfg.temperature)));
    }
    if batch.batch_size() == 0 {
        return Err(PgsError::EmptyBatch);
    }
    let tau = cfg.temperature;
    let mut logits = batch.image.matmul_transposed(&batch.text)?;
    logits.scale(1.0 / tau);
    let l = info_nce_logits(&logits)?;
    let g = &l.grad_logits;

    let grad_log_temperature = -g.as_slice().iter().zip(logits.as_slice()).map(|(a, l)| a * l).sum::<f64>();
    let mut grad_image = g.matmul(&batch.text)?;
    grad_image.scale(1.0 / tau);
    let mut grad_text = g.transpose().matmul(&batch.image)?;
    grad_text.scale(1.0 / tau);

    Ok(InfoNceOutput {
        loss: l.loss,
        image_loss: l.image_loss,
        text_loss: l.text_loss,
        grad_image,
        grad_text,
        grad_log_temperature,
        image_to_text: l.row_softmax,
    })
}
