//! Whole-image edge maps and their per-patch aggregation.

use serde::{Deserialize, Serialize};

use crate::error::{PgsError, Result};
use crate::image_io::{GrayImage, GridGeometry};

pub const SOBEL_X: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
pub const SOBEL_Y: [[f64; 3]; 3] = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];

/// Canny smoothing: 5x5 Gaussian, sigma 1.
pub const CANNY_SIGMA: f64 = 1.0;

/// Per-pixel nonnegative edge strength.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMap {
    pub width: usize,
    pub height: usize,
    pub magnitude: Vec<f64>,
}

impl EdgeMap {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.magnitude[y * self.width + x]
    }
}

/// Per-patch edge scores in `[0, 1]`, max-normalized per image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeScores(pub Vec<f64>);

impl EdgeScores {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EdgeDetector {
    #[default]
    Sobel,
    Canny { low: f64, high: f64 },
}

impl EdgeDetector {
    pub const DEFAULT_CANNY_LOW: f64 = 100.0;
    pub const DEFAULT_CANNY_HIGH: f64 = 200.0;

    pub fn default_canny() -> Self {
        EdgeDetector::Canny { low: Self::DEFAULT_CANNY_LOW, high: Self::DEFAULT_CANNY_HIGH }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EdgeDetector::Sobel => "sobel",
            EdgeDetector::Canny { .. } => "canny",
        }
    }

    pub fn detect(&self, g: &GrayImage) -> Result<EdgeMap> {
        match *self {
            EdgeDetector::Sobel => sobel_magnitude(g),
            EdgeDetector::Canny { low, high } => canny(g, low, high),
        }
    }
}

fn check_kernel_fits(g: &GrayImage) -> Result<()> {
    if g.width < 3 || g.height < 3 {
        return Err(PgsError::config(format!(
            "edge detection needs at least 3x3 pixels, got {}x{}",
            g.width, g.height
        )));
    }
    Ok(())
}

/// Sobel gradients with edge-replicate borders.
/// Calls `f(index, gx, gy)` for every pixel, in row-major order.
fn sobel_each(g: &GrayImage, mut f: impl FnMut(usize, f64, f64)) {
    let (w, h) = (g.width, g.height);
    for y in 0..h {
        let up = y.saturating_sub(1);
        let down = (y + 1).min(h - 1);
        let rows = [&g.data[up * w..(up + 1) * w], &g.data[y * w..(y + 1) * w], &g.data[down * w..(down + 1) * w]];
        for x in 0..w {
            let left = x.saturating_sub(1);
            let right = (x + 1).min(w - 1);
            let cols = [left, x, right];
            let mut sx = 0.0;
            let mut sy = 0.0;
            for (ky, row) in rows.iter().enumerate() {
                for (kx, &cx) in cols.iter().enumerate() {
                    let v = row[cx];
                    sx += SOBEL_X[ky][kx] * v;
                    sy += SOBEL_Y[ky][kx] * v;
                }
            }
            f(y * w + x, sx, sy);
        }
    }
}

fn sobel_gradients(g: &GrayImage) -> (Vec<f64>, Vec<f64>) {
    let n = g.width * g.height;
    let mut gx = vec![0.0; n];
    let mut gy = vec![0.0; n];
    sobel_each(g, |i, sx, sy| {
        gx[i] = sx;
        gy[i] = sy;
    });
    (gx, gy)
}

/// Gradient magnitude `sqrt(gx² + gy²)` of the 3x3 Sobel operator.
pub fn sobel_magnitude(g: &GrayImage) -> Result<EdgeMap> {
    check_kernel_fits(g)?;
    let mut magnitude = Vec::with_capacity(g.width * g.height);
    sobel_each(g, |_, sx, sy| magnitude.push((sx * sx + sy * sy).sqrt()));
    Ok(EdgeMap { width: g.width, height: g.height, magnitude })
}

fn gaussian_kernel_5() -> [f64; 5] {
    let mut k = [0.0; 5];
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - 2.0;
        *v = (-d * d / (2.0 * CANNY_SIGMA * CANNY_SIGMA)).exp();
    }
    let sum: f64 = k.iter().sum();
    k.map(|v| v / sum)
}

/// Separable 5x5 Gaussian blur with edge-replicate borders.
fn gaussian_blur(g: &GrayImage) -> GrayImage {
    let k = gaussian_kernel_5();
    let (w, h) = (g.width, g.height);
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = (0..5).map(|i| k[i] * g.get_clamped(x as isize + i as isize - 2, y as isize)).sum();
        }
    }
    let tmp = GrayImage { width: w, height: h, data: tmp };
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = (0..5).map(|i| k[i] * tmp.get_clamped(x as isize, y as isize + i as isize - 2)).sum();
        }
    }
    GrayImage { width: w, height: h, data: out }
}

/// Binary (0/1) Canny edge map: Gaussian smoothing, Sobel gradients,
/// non-maximum suppression and double-threshold hysteresis.
///
/// A pixel is a weak edge when its suppressed magnitude exceeds `low` and a
/// strong edge when it also reaches `high`; weak edges survive only when
/// 8-connected to a strong one.
pub fn canny(g: &GrayImage, low: f64, high: f64) -> Result<EdgeMap> {
    if low.is_nan() || high.is_nan() || low < 0.0 || low > high {
        return Err(PgsError::config(format!("canny thresholds need 0 <= low <= high, got {low}, {high}")));
    }
    check_kernel_fits(g)?;
    let (w, h) = (g.width, g.height);
    let smoothed = gaussian_blur(g);
    let (gx, gy) = sobel_gradients(&smoothed);
    let mag: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();
    let at = |x: isize, y: isize| -> f64 {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            0.0
        } else {
            mag[y as usize * w + x as usize]
        }
    };

    // 0 = not an edge, 1 = weak, 2 = strong
    let mut class = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let m = mag[i];
            if m <= low {
                continue;
            }
            let mut angle = gy[i].atan2(gx[i]).to_degrees();
            if angle < 0.0 {
                angle += 180.0;
            }
            let (dx, dy): (isize, isize) = if !(22.5..157.5).contains(&angle) {
                (1, 0)
            } else if angle < 67.5 {
                (1, 1)
            } else if angle < 112.5 {
                (0, 1)
            } else {
                (-1, 1)
            };
            let (xi, yi) = (x as isize, y as isize);
            // Strict on one side so a symmetric two-pixel ridge thins to one pixel.
            if m > at(xi - dx, yi - dy) && m >= at(xi + dx, yi + dy) {
                class[i] = if m >= high { 2 } else { 1 };
            }
        }
    }

    let mut out = vec![0.0; w * h];
    let mut stack: Vec<usize> = (0..w * h).filter(|&i| class[i] == 2).collect();
    for &i in &stack {
        out[i] = 1.0;
    }
    while let Some(i) = stack.pop() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if class[j] == 1 && out[j] == 0.0 {
                    out[j] = 1.0;
                    stack.push(j);
                }
            }
        }
    }
    Ok(EdgeMap { width: w, height: h, magnitude: out })
}

/// Mean edge magnitude per patch divided by the largest patch mean.
pub fn patch_edge_scores(em: &EdgeMap, geometry: &GridGeometry) -> Result<EdgeScores> {
    let expected = GridGeometry::for_dims(em.width, em.height, geometry.patch_size)?;
    if expected != *geometry {
        return Err(PgsError::shape(format!(
            "edge map {}x{} does not produce grid {}x{} at patch size {}",
            em.width, em.height, geometry.grid_h, geometry.grid_w, geometry.patch_size
        )));
    }
    let p = geometry.patch_size;
    let area = (p * p) as f64;
    let mut scores: Vec<f64> = (0..geometry.n_patches())
        .map(|index| {
            let (x0, y0) = geometry.patch_origin(index);
            let sum: f64 =
                (y0..y0 + p).map(|y| em.magnitude[y * em.width + x0..y * em.width + x0 + p].iter().sum::<f64>()).sum();
            sum / area
        })
        .collect();
    let max = scores.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        scores.iter_mut().for_each(|s| *s /= max);
    } else {
        scores.iter_mut().for_each(|s| *s = 0.0);
    }
    Ok(EdgeScores(scores))
}
