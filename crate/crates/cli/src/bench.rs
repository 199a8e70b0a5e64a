//! Per-stage wall-clock timing of the masking pipeline.

use std::time::{Duration, Instant};

use anyhow::Result;
use serde::Serialize;

use pgs_core::contrastive::{train_toy, MaskingMode, SyntheticPairs, TrainConfig};
use pgs_core::image_io::{encode_ppm, load_image, patchify};
use pgs_core::selector::{generate_mask_observed, random_mask, Stage, StageObserver};
use pgs_core::similarity::RandomProjection;
use pgs_core::{Image, MaskPlan, PgsConfig};

use crate::config::Settings;

/// Median per-stage times in microseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StageTimes {
    pub decode: f64,
    pub edge: f64,
    pub similarity: f64,
    pub sinkhorn: f64,
    pub selection: f64,
}

/// Stages grouped the way overhead is usually quoted: mask ratio/selection
/// (MR), edge detection (ED) and transport normalization (OTN, which here
/// includes building the similarity matrix it normalizes).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StageGroups {
    pub mr_us: f64,
    pub ed_us: f64,
    pub otn_us: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToyStepCost {
    pub steps: usize,
    pub batch_size: usize,
    pub masking_ms_per_step: f64,
    pub model_ms_per_step: f64,
    /// Masking time over masking plus forward/backward time.
    pub masking_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub image_id: String,
    pub width: usize,
    pub height: usize,
    pub patch_size: usize,
    pub n_patches: usize,
    pub warmup: usize,
    pub repeat: usize,
    pub stages_us: StageTimes,
    pub groups: StageGroups,
    /// Median of whole runs, decode included.
    pub total_us: f64,
    /// Median of whole runs, decode excluded.
    pub masking_us: f64,
    pub random_mask_us: f64,
    /// `masking_us / random_mask_us`.
    pub pgs_vs_random: f64,
    pub masked: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub toy_step: Option<ToyStepCost>,
}

#[derive(Default)]
struct Clock {
    last: Option<(Stage, Instant)>,
    times: Vec<(Stage, Duration)>,
}

impl StageObserver for Clock {
    fn enter(&mut self, stage: Stage) {
        let now = Instant::now();
        if let Some((prev, t)) = self.last.take() {
            self.times.push((prev, now - t));
        }
        self.last = Some((stage, now));
    }
}

impl Clock {
    fn micros(&self, stage: Stage) -> f64 {
        self.times.iter().filter(|(s, _)| *s == stage).map(|(_, d)| d.as_secs_f64() * 1e6).sum()
    }
}

pub fn median(xs: &mut [f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        (xs[m - 1] + xs[m]) / 2.0
    }
}

/// Default subject: a 224x224 synthetic shape image, stored as PPM bytes so
/// decoding is timed as well.
pub fn synthetic_subject(seed: u64) -> Vec<u8> {
    encode_ppm(&SyntheticPairs::new(seed, 224).sample(0).image)
}

/// Times `repeat` runs after `warmup` untimed ones. `repeat` is clamped to 1.
pub fn bench_image(
    image_id: &str,
    bytes: &[u8],
    settings: &Settings,
    warmup: usize,
    repeat: usize,
) -> Result<BenchReport> {
    let repeat = repeat.max(1);
    let cfg: PgsConfig = settings.for_image(settings.seed);
    let first: Image = load_image(bytes)?;
    let grid = patchify(&first, cfg.patch_size)?;
    let geometry = grid.geometry();
    let projection = RandomProjection::new(geometry.patch_len(), settings.feature_dim, settings.seed);
    let features = projection.embed(&grid)?;

    let mut cols: [Vec<f64>; 5] = Default::default();
    let (mut totals, mut maskings, mut randoms) = (Vec::new(), Vec::new(), Vec::new());
    let mut plan: Option<MaskPlan> = None;
    for i in 0..warmup + repeat {
        let t0 = Instant::now();
        let img = load_image(bytes)?;
        let t1 = Instant::now();
        let mut clock = Clock::default();
        let p = generate_mask_observed(&img, &features, settings.epoch, &cfg, &mut clock)?;
        let t2 = Instant::now();
        let r = random_mask(&geometry, &cfg.masking);
        let t3 = Instant::now();
        std::hint::black_box(&r);
        if i < warmup {
            continue;
        }
        cols[0].push((t1 - t0).as_secs_f64() * 1e6);
        cols[1].push(clock.micros(Stage::Edge));
        cols[2].push(clock.micros(Stage::Similarity));
        cols[3].push(clock.micros(Stage::Sinkhorn));
        cols[4].push(clock.micros(Stage::Selection));
        totals.push((t2 - t0).as_secs_f64() * 1e6);
        maskings.push((t2 - t1).as_secs_f64() * 1e6);
        randoms.push((t3 - t2).as_secs_f64() * 1e6);
        plan = Some(p);
    }
    let [d, e, s, k, sel] = cols.map(|mut c| median(&mut c));
    let masking_us = median(&mut maskings);
    let random_mask_us = median(&mut randoms);
    Ok(BenchReport {
        image_id: image_id.to_string(),
        width: first.width(),
        height: first.height(),
        patch_size: cfg.patch_size,
        n_patches: geometry.n_patches(),
        warmup,
        repeat,
        stages_us: StageTimes { decode: d, edge: e, similarity: s, sinkhorn: k, selection: sel },
        groups: StageGroups { mr_us: sel, ed_us: e, otn_us: s + k },
        total_us: median(&mut totals),
        masking_us,
        random_mask_us,
        pgs_vs_random: if random_mask_us > 0.0 { masking_us / random_mask_us } else { f64::INFINITY },
        masked: plan.map_or(0, |p| p.masked.len()),
        toy_step: None,
    })
}

/// Masking share of a toy training step with PGS masking on the 196-patch grid.
pub fn toy_step_cost(steps: usize, seed: u64) -> Result<ToyStepCost> {
    let cfg =
        TrainConfig { steps, seed, masking: MaskingMode::Pgs, steps_per_epoch: steps.max(1), ..TrainConfig::default() };
    let r = train_toy(&cfg)?;
    let per = |secs: f64| secs * 1e3 / steps.max(1) as f64;
    Ok(ToyStepCost {
        steps,
        batch_size: cfg.batch_size,
        masking_ms_per_step: per(r.timing.masking_secs),
        model_ms_per_step: per(r.timing.model_secs),
        masking_fraction: r.timing.masking_fraction(),
    })
}
