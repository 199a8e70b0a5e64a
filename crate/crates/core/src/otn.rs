//! Optimal transport normalization: Sinkhorn balancing of a similarity
//! matrix into a doubly stochastic matrix, and the refinement `S + P`.

use serde::{Deserialize, Serialize};

use crate::error::{PgsError, Result};
use crate::matrix::{dot, Matrix};
use crate::similarity::SimilarityMatrix;

/// How a real-valued similarity matrix is made strictly positive before balancing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PositiveKernel {
    /// `S - min(S) + shift_delta` when `S` has any entry `<= 0`; positive inputs pass through.
    Shift,
    /// `exp((S - max(S)) / epsilon)`.
    Entropic { epsilon: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinkhornConfig {
    pub max_iters: usize,
    pub tol: f64,
    pub shift_delta: f64,
    pub kernel: PositiveKernel,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self { max_iters: 50, tol: 1e-6, shift_delta: 1e-6, kernel: PositiveKernel::Shift }
    }
}

impl SinkhornConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(PgsError::config("sinkhorn max_iters must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(PgsError::config(format!("sinkhorn tol must be positive, got {}", self.tol)));
        }
        if !(self.shift_delta > 0.0) {
            return Err(PgsError::config(format!("sinkhorn shift_delta must be positive, got {}", self.shift_delta)));
        }
        if let PositiveKernel::Entropic { epsilon } = self.kernel {
            if !(epsilon > 0.0) {
                return Err(PgsError::config(format!("entropic epsilon must be positive, got {epsilon}")));
            }
        }
        Ok(())
    }
}

/// Nonnegative square matrix whose row and column sums are within `tol` of 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoublyStochasticMatrix {
    pub values: Matrix,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinkhornOutput {
    pub matrix: DoublyStochasticMatrix,
    /// Completed row+column passes.
    pub iterations: usize,
    /// Largest `|sum - 1|` over all rows and columns after the last pass.
    pub deviation: f64,
    /// Deviation after each pass.
    pub trace: Vec<f64>,
    pub converged: bool,
}

/// Worst marginal error of `m`.
pub fn marginal_deviation(m: &Matrix) -> f64 {
    m.row_sums().into_iter().chain(m.col_sums()).map(|s| (s - 1.0).abs()).fold(0.0, f64::max)
}

fn positive_kernel(m: &Matrix, cfg: &SinkhornConfig) -> Matrix {
    let mut k = m.clone();
    match cfg.kernel {
        PositiveKernel::Shift => {
            let min = m.min();
            if min <= 0.0 {
                let shift = cfg.shift_delta - min;
                k.as_mut_slice().iter_mut().for_each(|v| *v += shift);
            }
        }
        PositiveKernel::Entropic { epsilon } => {
            let max = m.max();
            k.as_mut_slice().iter_mut().for_each(|v| *v = ((*v - max) / epsilon).exp());
        }
    }
    k
}

/// `k · x` into `out`.
fn mat_vec(k: &Matrix, x: &[f64], out: &mut [f64]) {
    for (o, row) in out.iter_mut().zip(k.iter_rows()) {
        *o = dot(row, x);
    }
}

/// `kᵀ · x` into `out`, walking `k` row by row.
fn mat_t_vec(k: &Matrix, x: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for (&xi, row) in x.iter().zip(k.iter_rows()) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o += xi * v;
        }
    }
}

fn recip_or_one(s: f64) -> f64 {
    if s > 0.0 {
        1.0 / s
    } else {
        1.0
    }
}

/// Alternating row/column normalization until every marginal is within
/// `cfg.tol` of 1 or `cfg.max_iters` passes have run. Each pass normalizes
/// rows, then columns. An all-zero row or column is left as is.
///
/// The iterate is kept as `diag(u) K diag(v)` and only formed at the end.
pub fn sinkhorn(s: &Matrix, cfg: &SinkhornConfig) -> Result<SinkhornOutput> {
    cfg.validate()?;
    if !s.is_square() {
        return Err(PgsError::shape(format!("sinkhorn needs a square matrix, got {}x{}", s.rows(), s.cols())));
    }
    if !s.all_finite() {
        return Err(PgsError::NumericInput("similarity matrix contains NaN or infinite entries".into()));
    }
    let k = positive_kernel(s, cfg);
    let n = k.rows();
    let mut trace = Vec::new();
    let (mut u, mut v) = (vec![1.0; n], vec![1.0; n]);
    // kv = K v, reused by the next row update; kt = Kᵀ u
    let (mut kv, mut kt) = (vec![0.0; n], vec![0.0; n]);
    let mut deviation = if n == 0 { 0.0 } else { marginal_deviation(&k) };
    if n > 0 {
        mat_vec(&k, &v, &mut kv);
        for _ in 0..cfg.max_iters {
            for (ui, &r) in u.iter_mut().zip(&kv) {
                *ui = recip_or_one(r);
            }
            mat_t_vec(&k, &u, &mut kt);
            for (vj, &c) in v.iter_mut().zip(&kt) {
                *vj = recip_or_one(c);
            }
            mat_vec(&k, &v, &mut kv);
            let rows = u.iter().zip(&kv).map(|(a, b)| (a * b - 1.0).abs());
            let cols = v.iter().zip(&kt).map(|(a, b)| (a * b - 1.0).abs());
            deviation = rows.chain(cols).fold(0.0, f64::max);
            trace.push(deviation);
            if deviation < cfg.tol {
                break;
            }
        }
    }
    let mut p = k;
    for (i, row) in p.as_mut_slice().chunks_mut(n.max(1)).enumerate() {
        for (x, &vj) in row.iter_mut().zip(&v) {
            *x = u[i] * *x * vj;
        }
    }
    Ok(SinkhornOutput {
        iterations: trace.len(),
        converged: deviation < cfg.tol,
        deviation,
        trace,
        matrix: DoublyStochasticMatrix { values: p, tol: cfg.tol },
    })
}

/// `S' = S + sinkhorn(S)`, together with the balancing diagnostics.
pub fn refine_with_report(s: &SimilarityMatrix, cfg: &SinkhornConfig) -> Result<(SimilarityMatrix, SinkhornOutput)> {
    let out = sinkhorn(s.matrix(), cfg)?;
    let mut refined = s.matrix().clone();
    for (r, p) in refined.as_mut_slice().iter_mut().zip(out.matrix.values.as_slice()) {
        *r += p;
    }
    Ok((SimilarityMatrix::new(refined)?, out))
}

pub fn refine(s: &SimilarityMatrix, cfg: &SinkhornConfig) -> Result<SimilarityMatrix> {
    refine_with_report(s, cfg).map(|(r, _)| r)
}
