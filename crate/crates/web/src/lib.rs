//! Browser bindings for the masking demo. Each export wraps a plain Rust
//! function so the logic can be tested natively.

use serde_json::json;
use wasm_bindgen::prelude::*;

use pgs_core::contrastive::SyntheticPairs;
use pgs_core::edge::EdgeDetector;
use pgs_core::image_io::{patchify, render_mask_overlay, to_grayscale};
use pgs_core::otn::{sinkhorn, PositiveKernel, SinkhornConfig};
use pgs_core::selector::similarity_stage;
use pgs_core::similarity::{alpha_schedule, RandomProjection};
use pgs_core::{generate_mask, GridGeometry, Image, MaskPlan, MaskingConfig, PgsConfig};

const FEATURE_DIM: usize = 32;
const DIM: f64 = 0.2;
const RETAINED: [u8; 3] = [40, 220, 90];
const RELEASED: [u8; 3] = [255, 150, 0];

/// Knobs exposed on the page.
#[derive(Debug, Clone, PartialEq)]
pub struct Options {
    pub patch_size: usize,
    pub fixed: bool,
    /// "sobel", "canny" or "none".
    pub edge: String,
    pub otn: bool,
    pub epoch: usize,
    pub seed: u64,
}

impl Options {
    fn config(&self) -> Result<PgsConfig, String> {
        let base = if self.fixed { MaskingConfig::fixed() } else { MaskingConfig::dynamic() };
        let edge = match self.edge.as_str() {
            "none" => None,
            name => Some(detector(name)?),
        };
        let cfg = PgsConfig {
            patch_size: self.patch_size,
            masking: MaskingConfig { edge, otn: self.otn, seed: self.seed, ..base },
            ..PgsConfig::default()
        };
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}

fn detector(name: &str) -> Result<EdgeDetector, String> {
    match name {
        "sobel" => Ok(EdgeDetector::Sobel),
        "canny" => Ok(EdgeDetector::default_canny()),
        other => Err(format!("unknown edge detector {other:?}")),
    }
}

fn features(image: &Image, cfg: &PgsConfig, seed: u64) -> Result<pgs_core::Matrix, String> {
    let grid = patchify(image, cfg.patch_size).map_err(|e| e.to_string())?;
    let projection = RandomProjection::new(grid.geometry().patch_len(), FEATURE_DIM, seed);
    projection.embed(&grid).map_err(|e| e.to_string())
}

pub fn synthetic(seed: u64, index: u64, size: usize) -> (Vec<u8>, String) {
    let s = SyntheticPairs::new(seed, size).sample(index);
    (s.image.to_rgba(), SyntheticPairs::caption(&s.tokens))
}

/// Masked overlay with edge-retained patches outlined green and released ones orange.
pub fn mask_overlay(rgba: &[u8], width: usize, height: usize, opts: &Options) -> Result<(Vec<u8>, String), String> {
    let image = Image::from_rgba(width, height, rgba).map_err(|e| e.to_string())?;
    let cfg = opts.config()?;
    let plan =
        generate_mask(&image, &features(&image, &cfg, opts.seed)?, opts.epoch, &cfg).map_err(|e| e.to_string())?;
    let mut out = render_mask_overlay(&image, &plan, DIM).map_err(|e| e.to_string())?;
    outline(&mut out, &plan, &plan.retained_by_edge, RETAINED);
    outline(&mut out, &plan, &plan.released_by_bound, RELEASED);
    let stats = json!({
        "grid": [plan.grid_h, plan.grid_w],
        "patches": plan.n_patches(),
        "masked": plan.masked.len(),
        "ratio": plan.ratio,
        "candidates": plan.candidates.len(),
        "retained_by_edge": plan.retained_by_edge.len(),
        "released_by_bound": plan.released_by_bound.len(),
        "edge_threshold": plan.edge_threshold,
        "warnings": plan.warnings,
    });
    Ok((out.to_rgba(), stats.to_string()))
}

fn outline(img: &mut Image, plan: &MaskPlan, patches: &[usize], rgb: [u8; 3]) {
    let geometry =
        GridGeometry::for_dims(img.width(), img.height(), plan.patch_size).expect("plan was made for this image");
    let p = plan.patch_size;
    for &i in patches {
        let (x0, y0) = geometry.patch_origin(i);
        for t in 0..p {
            for (x, y) in [(x0 + t, y0), (x0 + t, y0 + p - 1), (x0, y0 + t), (x0 + p - 1, y0 + t)] {
                img.set_pixel(x, y, rgb);
            }
        }
    }
}

/// Edge magnitude scaled to its own maximum, as opaque grayscale RGBA.
pub fn edge_view(rgba: &[u8], width: usize, height: usize, detector_name: &str) -> Result<Vec<u8>, String> {
    let image = Image::from_rgba(width, height, rgba).map_err(|e| e.to_string())?;
    let em = detector(detector_name)?.detect(&to_grayscale(&image)).map_err(|e| e.to_string())?;
    let max = em.magnitude.iter().cloned().fold(0.0, f64::max);
    let scale = if max > 0.0 { 255.0 / max } else { 0.0 };
    Ok(em
        .magnitude
        .iter()
        .flat_map(|&v| {
            let g = (v * scale).round() as u8;
            [g, g, g, 255]
        })
        .collect())
}

/// Sinkhorn on the image's blended patch similarity; JSON with the per-pass
/// marginal deviation.
pub fn sinkhorn_report(
    rgba: &[u8],
    width: usize,
    height: usize,
    opts: &Options,
    entropic: Option<f64>,
    max_iters: usize,
) -> Result<String, String> {
    let image = Image::from_rgba(width, height, rgba).map_err(|e| e.to_string())?;
    let cfg = opts.config()?;
    let grid = patchify(&image, cfg.patch_size).map_err(|e| e.to_string())?;
    let alpha = alpha_schedule(opts.epoch, &cfg.schedule);
    let s = similarity_stage(&grid, &features(&image, &cfg, opts.seed)?, alpha).map_err(|e| e.to_string())?;
    let mut sk = SinkhornConfig { max_iters, ..cfg.sinkhorn };
    if let Some(epsilon) = entropic {
        sk.kernel = PositiveKernel::Entropic { epsilon };
    }
    sk.validate().map_err(|e| e.to_string())?;
    let out = sinkhorn(s.matrix(), &sk).map_err(|e| e.to_string())?;
    Ok(json!({
        "n": s.n(),
        "alpha": alpha,
        "iterations": out.iterations,
        "converged": out.converged,
        "deviation": out.deviation,
        "tol": sk.tol,
        "trace": out.trace,
    })
    .to_string())
}

// wasm-bindgen surface

fn js_err(e: String) -> JsError {
    JsError::new(&e)
}

#[wasm_bindgen]
pub struct MaskResult {
    overlay: Vec<u8>,
    stats: String,
}

#[wasm_bindgen]
impl MaskResult {
    /// RGBA pixels of the overlay.
    #[wasm_bindgen(getter)]
    pub fn overlay(&self) -> Vec<u8> {
        self.overlay.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn stats(&self) -> String {
        self.stats.clone()
    }
}

#[wasm_bindgen]
pub struct Sample {
    rgba: Vec<u8>,
    caption: String,
}

#[wasm_bindgen]
impl Sample {
    #[wasm_bindgen(getter)]
    pub fn rgba(&self) -> Vec<u8> {
        self.rgba.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn caption(&self) -> String {
        self.caption.clone()
    }
}

#[wasm_bindgen(js_name = syntheticSample)]
pub fn synthetic_sample(seed: u32, index: u32, size: usize) -> Sample {
    let (rgba, caption) = synthetic(seed.into(), index.into(), size);
    Sample { rgba, caption }
}

#[allow(clippy::too_many_arguments)]
#[wasm_bindgen(js_name = maskImage)]
pub fn mask_image(
    rgba: &[u8],
    width: usize,
    height: usize,
    patch_size: usize,
    fixed: bool,
    edge: String,
    otn: bool,
    epoch: usize,
    seed: u32,
) -> Result<MaskResult, JsError> {
    let opts = Options { patch_size, fixed, edge, otn, epoch, seed: seed.into() };
    let (overlay, stats) = mask_overlay(rgba, width, height, &opts).map_err(js_err)?;
    Ok(MaskResult { overlay, stats })
}

#[wasm_bindgen(js_name = edgeMap)]
pub fn edge_map(rgba: &[u8], width: usize, height: usize, detector: &str) -> Result<Vec<u8>, JsError> {
    edge_view(rgba, width, height, detector).map_err(js_err)
}

/// `epsilon <= 0` selects the shift kernel.
#[allow(clippy::too_many_arguments)]
#[wasm_bindgen(js_name = sinkhornTrace)]
pub fn sinkhorn_trace(
    rgba: &[u8],
    width: usize,
    height: usize,
    patch_size: usize,
    epoch: usize,
    seed: u32,
    epsilon: f64,
    max_iters: usize,
) -> Result<String, JsError> {
    let opts = Options { patch_size, fixed: false, edge: "none".into(), otn: true, epoch, seed: seed.into() };
    let entropic = (epsilon > 0.0).then_some(epsilon);
    sinkhorn_report(rgba, width, height, &opts, entropic, max_iters).map_err(js_err)
}
