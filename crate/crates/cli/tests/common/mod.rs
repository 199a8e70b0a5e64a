#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pgs_core::contrastive::SyntheticPairs;
use pgs_core::image_io::{encode_ppm, png_adapter};

pub fn pgs() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_pgs"));
    c.env_remove("PGS_SEED");
    c
}

pub fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// Writes `count` synthetic shape images of side `size`, alternating PPM and PNG.
pub fn write_corpus(dir: &Path, count: usize, size: usize, seed: u64) -> Vec<PathBuf> {
    let data = SyntheticPairs::new(seed, size);
    (0..count)
        .map(|i| {
            let img = data.sample(i as u64).image;
            let (name, bytes) = if i % 2 == 0 {
                (format!("img{i:03}.ppm"), encode_ppm(&img))
            } else {
                (format!("img{i:03}.png"), png_adapter::encode(&img).unwrap())
            };
            let path = dir.join(name);
            std::fs::write(&path, bytes).unwrap();
            path
        })
        .collect()
}

pub fn json_lines(text: &str) -> Vec<serde_json::Value> {
    text.lines().map(|l| serde_json::from_str(l).expect("each line is JSON")).collect()
}
