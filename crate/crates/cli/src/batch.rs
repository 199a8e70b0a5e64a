//! Batch masking over files. Output order follows the sorted input paths and
//! every image gets its own seed, so results do not depend on thread count.

use std::hash::Hasher;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use fnv::FnvHasher;
use rayon::prelude::*;
use serde::Serialize;

use pgs_core::edge::EdgeMap;
use pgs_core::image_io::{encode_ppm, load_image, patchify, png_adapter, render_mask_overlay, to_grayscale};
use pgs_core::similarity::RandomProjection;
use pgs_core::{generate_mask, Image, MaskPlan};

use crate::config::{ConfigEcho, Settings};

/// Brightness kept by masked patches in overlays.
pub const OVERLAY_DIM: f64 = 0.2;

/// Expands glob patterns and plain paths into a sorted, deduplicated list.
/// A plain path that does not exist is kept so it is reported as a failure.
pub fn expand_inputs(patterns: &[String]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in patterns {
        if p.contains(['*', '?', '[']) {
            for entry in glob::glob(p).with_context(|| format!("bad glob pattern {p:?}"))? {
                let path = entry?;
                if path.is_file() {
                    out.push(path);
                }
            }
        } else {
            out.push(PathBuf::from(p));
        }
    }
    out.sort();
    out.dedup();
    Ok(out)
}

/// FNV-1a of the path as written; stable across runs and platforms.
pub fn path_hash(path: &Path) -> u64 {
    let mut h = FnvHasher::default();
    h.write(path.to_string_lossy().as_bytes());
    h.finish()
}

pub fn image_seed(global: u64, path: &Path) -> u64 {
    global.wrapping_add(path_hash(path))
}

#[derive(Debug, Serialize)]
pub struct MaskRecord<'a> {
    pub image_id: String,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub plan: &'a MaskPlan,
    pub config: &'a ConfigEcho,
}

/// Result of masking one file.
#[derive(Debug)]
pub struct Masked {
    pub path: PathBuf,
    pub image: Image,
    pub plan: MaskPlan,
    pub seed: u64,
}

pub fn read_image(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    load_image(&bytes).with_context(|| format!("decoding {}", path.display()))
}

pub fn mask_image(path: &Path, image: Image, settings: &Settings, projection: &RandomProjection) -> Result<Masked> {
    let seed = image_seed(settings.seed, path);
    let cfg = settings.for_image(seed);
    let grid = patchify(&image, cfg.patch_size)?;
    let features = projection.embed(&grid)?;
    let plan = generate_mask(&image, &features, settings.epoch, &cfg)?;
    Ok(Masked { path: path.to_path_buf(), image, plan, seed })
}

pub fn projection_for(settings: &Settings) -> RandomProjection {
    let p = settings.pgs.patch_size;
    RandomProjection::new(p * p * 3, settings.feature_dim, settings.seed)
}

pub fn record_line(m: &Masked, echo: &ConfigEcho) -> Result<String> {
    let rec = MaskRecord {
        image_id: m.path.to_string_lossy().into_owned(),
        width: m.image.width(),
        height: m.image.height(),
        seed: m.seed,
        plan: &m.plan,
        config: echo,
    };
    Ok(serde_json::to_string(&rec)?)
}

/// Writes PNG unless the extension asks for PPM.
pub fn write_image(path: &Path, img: &Image) -> Result<()> {
    let is_ppm = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("ppm"));
    let bytes = if is_ppm { encode_ppm(img) } else { png_adapter::encode(img)? };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn overlay(m: &Masked) -> Result<Image> {
    Ok(render_mask_overlay(&m.image, &m.plan, OVERLAY_DIM)?)
}

/// Grayscale rendering of an edge map scaled to its own maximum.
pub fn edge_image(em: &EdgeMap) -> Image {
    let max = em.magnitude.iter().cloned().fold(0.0, f64::max);
    let scale = if max > 0.0 { 255.0 / max } else { 0.0 };
    let data = em.magnitude.iter().flat_map(|&v| [(v * scale).round() as u8; 3]).collect();
    Image::new(em.width, em.height, data).expect("edge map dims match its buffer")
}

pub fn edge_map(img: &Image, settings: &Settings) -> Result<EdgeMap> {
    Ok(settings.detector().detect(&to_grayscale(img))?)
}

#[derive(Debug, Default)]
pub struct BatchOutcome {
    /// JSON lines in input order.
    pub lines: Vec<String>,
    pub failures: Vec<(PathBuf, String)>,
    pub overlays_written: usize,
}

/// Masks every input on a pool of `threads` workers (0 = all cores).
pub fn run_batch(
    inputs: &[PathBuf],
    settings: &Settings,
    threads: usize,
    overlay_dir: Option<&Path>,
    records: bool,
) -> Result<BatchOutcome> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    let projection = projection_for(settings);
    let echo = settings.echo();
    let results: Vec<Result<(Option<String>, bool)>> = pool.install(|| {
        inputs
            .par_iter()
            .map(|path| {
                let m = mask_image(path, read_image(path)?, settings, &projection)?;
                let line = if records { Some(record_line(&m, &echo)?) } else { None };
                if let Some(dir) = overlay_dir {
                    let stem = path.file_stem().ok_or_else(|| anyhow!("{} has no file name", path.display()))?;
                    write_image(&dir.join(stem).with_extension("png"), &overlay(&m)?)?;
                }
                Ok((line, overlay_dir.is_some()))
            })
            .collect()
    });
    let mut out = BatchOutcome::default();
    for (path, r) in inputs.iter().zip(results) {
        match r {
            Ok((line, wrote)) => {
                out.lines.extend(line);
                out.overlays_written += wrote as usize;
            }
            Err(e) => out.failures.push((path.clone(), format!("{e:#}"))),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_fnv1a() {
        // FNV-1a 64 of the empty string is the offset basis.
        assert_eq!(path_hash(Path::new("")), 0xcbf2_9ce4_8422_2325);
        assert_eq!(image_seed(1, Path::new("a.ppm")), image_seed(0, Path::new("a.ppm")).wrapping_add(1));
        assert_ne!(path_hash(Path::new("a.ppm")), path_hash(Path::new("b.ppm")));
    }

    #[test]
    fn plain_paths_survive_expansion_sorted() {
        let got = expand_inputs(&["b.ppm".into(), "a.ppm".into(), "b.ppm".into()]).unwrap();
        assert_eq!(got, vec![PathBuf::from("a.ppm"), PathBuf::from("b.ppm")]);
    }

    #[test]
    fn edge_image_scales_to_white() {
        let em = EdgeMap { width: 2, height: 1, magnitude: vec![0.0, 4.0] };
        assert_eq!(edge_image(&em).data(), &[0, 0, 0, 255, 255, 255]);
    }
}
