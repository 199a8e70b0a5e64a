//! Frozen reference values (computed independently in float64) and
//! public-API invariants.

use pgs_core::contrastive::{info_nce, ContrastiveConfig, EmbeddingBatch, SyntheticPairs};
use pgs_core::edge::sobel_magnitude;
use pgs_core::image_io::patchify;
use pgs_core::otn::{sinkhorn, SinkhornConfig};
use pgs_core::similarity::RandomProjection;
use pgs_core::{generate_mask, GrayImage, Image, MaskingConfig, Matrix, PgsConfig};
use proptest::prelude::*;

fn close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        assert!((x - y).abs() <= tol, "entry {i}: {x} vs {y}");
    }
}

#[test]
fn sinkhorn_limit_of_small_matrix() {
    let k = Matrix::from_vec(3, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 10.0]).unwrap();
    let cfg = SinkhornConfig { max_iters: 500, tol: 1e-14, ..SinkhornConfig::default() };
    let out = sinkhorn(&k, &cfg).unwrap();
    assert!(out.converged);
    #[rustfmt::skip]
    let expected = [
        0.24602816280696543, 0.35317174899220316, 0.40080008820083135,
        0.36876905086312634, 0.3308534101889356, 0.3003775389479381,
        0.3852027863299082, 0.31597484081886124, 0.29882237285123053,
    ];
    close(out.matrix.values.as_slice(), &expected, 1e-12);
}

#[test]
fn sobel_with_replicated_border() {
    let g = GrayImage::new(4, 3, vec![0.0, 10.0, 20.0, 30.0, 5.0, 15.0, 25.0, 35.0, 50.0, 60.0, 70.0, 80.0]).unwrap();
    #[rustfmt::skip]
    let expected = [
        44.721359549995796, 82.46211251235322, 82.46211251235322, 44.721359549995796,
        203.9607805437114, 215.40659228538016, 215.40659228538016, 203.9607805437114,
        184.39088914585776, 196.9771560359221, 196.9771560359221, 184.39088914585776,
    ];
    close(&sobel_magnitude(&g).unwrap().magnitude, &expected, 1e-9);
}

#[test]
fn info_nce_three_pairs() {
    let img = Matrix::from_vec(3, 2, vec![1.0, 0.0, 0.6, 0.8, 0.0, 1.0]).unwrap();
    let txt = Matrix::from_vec(3, 2, vec![0.8, 0.6, 1.0, 0.0, 0.0, 1.0]).unwrap();
    let cfg = ContrastiveConfig { temperature: 0.5, learnable_temperature: false };
    let out = info_nce(&EmbeddingBatch::new(img, txt).unwrap(), &cfg).unwrap();
    assert!((out.loss - 0.9885335332017408).abs() < 1e-12, "{}", out.loss);
}

fn masked_for(image: &Image, cfg: &PgsConfig) -> Vec<usize> {
    let grid = patchify(image, cfg.patch_size).unwrap();
    let feats = RandomProjection::new(grid.geometry().patch_len(), 16, 0).embed(&grid).unwrap();
    generate_mask(image, &feats, 0, cfg).unwrap().masked
}

#[test]
fn uniform_image_masks_upper_bound() {
    // Identical, edgeless patches tie on every score, which lands on the upper bound.
    let img = Image::filled(64, 64, [90, 90, 90]);
    let cfg = PgsConfig { patch_size: 8, ..PgsConfig::default() };
    let k = masked_for(&img, &cfg).len();
    assert_eq!(k, 32);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mask_is_deterministic_and_bounded(seed in any::<u64>(), index in 0u64..500, fixed in any::<bool>()) {
        let img = SyntheticPairs::new(seed, 64).sample(index).image;
        let masking = if fixed { MaskingConfig::fixed() } else { MaskingConfig::dynamic() };
        let cfg = PgsConfig { patch_size: 8, masking: MaskingConfig { seed, ..masking }, ..PgsConfig::default() };
        let a = masked_for(&img, &cfg);
        prop_assert_eq!(&a, &masked_for(&img, &cfg));
        if fixed {
            prop_assert_eq!(a.len(), 32);
        } else {
            prop_assert!((19..=32).contains(&a.len()));
        }
        let mut sorted = a.clone();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), a.len());
        prop_assert!(a.iter().all(|&i| i < 64));
    }

    #[test]
    fn sinkhorn_is_scale_invariant(vals in prop::collection::vec(0.01f64..1.0, 16), c in 0.1f64..10.0) {
        let m = Matrix::from_vec(4, 4, vals.clone()).unwrap();
        let scaled = Matrix::from_vec(4, 4, vals.iter().map(|v| v * c).collect()).unwrap();
        let cfg = SinkhornConfig { max_iters: 500, tol: 1e-12, ..SinkhornConfig::default() };
        let a = sinkhorn(&m, &cfg).unwrap().matrix.values;
        let b = sinkhorn(&scaled, &cfg).unwrap().matrix.values;
        prop_assert!(a.max_abs_diff(&b) < 1e-9);
    }
}
