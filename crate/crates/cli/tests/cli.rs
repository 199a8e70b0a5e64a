mod common;

use common::*;
use serde_json::Value;

#[test]
fn fixed_single_image_masks_98() {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_corpus(dir.path(), 1, 224, 0);
    let o = run(pgs().arg("mask").arg(&paths[0]).arg("--fixed"));
    assert!(o.status.success(), "{}", stderr(&o));
    let recs = json_lines(&stdout(&o));
    assert_eq!(recs.len(), 1);
    let r = &recs[0];
    assert_eq!(r["masked"].as_array().unwrap().len(), 98);
    assert_eq!((r["grid_h"].as_u64(), r["grid_w"].as_u64(), r["patch_size"].as_u64()), (Some(14), Some(14), Some(16)));
    assert_eq!(r["ratio"].as_f64(), Some(0.5));
    assert_eq!(r["config"]["variant"], "fixed");
    assert!(r["config"]["k_rule"].as_str().unwrap().contains("median"));
    assert!(r["image_id"].as_str().unwrap().ends_with("img000.ppm"));
    assert_eq!(r["scores"].as_array().unwrap().len(), 196);
}

#[test]
fn empty_glob_is_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let pattern = format!("{}/*.ppm", dir.path().display());
    let o = run(pgs().args(["mask", &pattern]));
    assert!(o.status.success());
    assert!(stdout(&o).is_empty());
    assert!(stderr(&o).contains("warning"));
}

#[test]
fn bad_file_is_listed_and_others_still_emitted() {
    let dir = tempfile::tempdir().unwrap();
    write_corpus(dir.path(), 3, 64, 1);
    std::fs::write(dir.path().join("broken.ppm"), b"P6\n4 4\n255\nxx").unwrap();
    let pattern = format!("{}/*", dir.path().display());
    let o = run(pgs().args(["mask", &pattern, "--patch-size", "8"]));
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(json_lines(&stdout(&o)).len(), 3);
    assert!(stderr(&o).contains("broken.ppm"));
}

#[test]
fn invalid_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_corpus(dir.path(), 1, 64, 0);
    let o = run(pgs().arg("mask").arg(&paths[0]).args(["--lower-ratio", "0.9"]));
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let conf = dir.path().join("bad.conf");
    std::fs::write(&conf, "colour = red\n").unwrap();
    let o = run(pgs().arg("mask").arg(&paths[0]).arg("--config").arg(&conf));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("colour"));
}

#[test]
fn precedence_flag_file_env() {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_corpus(dir.path(), 1, 64, 0);
    let conf = dir.path().join("run.conf");
    std::fs::write(&conf, "seed = 5\nupper_ratio = 0.4\npatch-size = 8\n").unwrap();
    let seed_of = |extra: &[&str], env: Option<&str>| -> Value {
        let mut c = pgs();
        c.arg("mask").arg(&paths[0]).arg("--config").arg(&conf).args(extra);
        if let Some(e) = env {
            c.env("PGS_SEED", e);
        }
        let o = run(&mut c);
        assert!(o.status.success(), "{}", stderr(&o));
        json_lines(&stdout(&o)).remove(0)["config"].clone()
    };
    let c = seed_of(&[], Some("9"));
    assert_eq!(
        (c["seed"].as_u64(), c["upper_ratio"].as_f64(), c["patch_size"].as_u64()),
        (Some(5), Some(0.4), Some(8))
    );
    assert_eq!(seed_of(&["--seed", "7"], Some("9"))["seed"].as_u64(), Some(7));

    let o = run(pgs().arg("mask").arg(&paths[0]).args(["--patch-size", "8"]).env("PGS_SEED", "9"));
    assert_eq!(json_lines(&stdout(&o))[0]["config"]["seed"].as_u64(), Some(9));
}

#[test]
fn overlays_and_visualize_write_images() {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_corpus(dir.path(), 2, 64, 2);
    let out = dir.path().join("ov");
    let o =
        run(pgs().arg("mask").args(&paths).args(["--patch-size", "8", "--format", "both", "--overlay-dir"]).arg(&out));
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(json_lines(&stdout(&o)).len(), 2);
    for stem in ["img000", "img001"] {
        let img = pgs_core::image_io::load_image(&std::fs::read(out.join(format!("{stem}.png"))).unwrap()).unwrap();
        assert_eq!((img.width(), img.height()), (64, 64));
    }
    let o = run(pgs()
        .arg("mask")
        .arg(&paths[0])
        .args(["--patch-size", "8", "--format", "overlay", "--overlay-dir"])
        .arg(&out));
    assert!(o.status.success() && stdout(&o).is_empty());

    let ov = dir.path().join("v.ppm");
    let em = dir.path().join("e.png");
    let o = run(pgs()
        .arg("visualize")
        .arg(&paths[0])
        .arg("--output")
        .arg(&ov)
        .arg("--edge-map")
        .arg(&em)
        .args(["--patch-size", "8"]));
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(json_lines(&stdout(&o)).len(), 1);
    assert!(std::fs::read(&ov).unwrap().starts_with(b"P6"));
    assert!(em.exists());
}

#[test]
fn sinkhorn_debug_examples() {
    let dir = tempfile::tempdir().unwrap();
    let ident = dir.path().join("i.csv");
    std::fs::write(&ident, "1,0\n0,1\n").unwrap();
    let o = run(pgs().arg("sinkhorn-debug").arg(&ident));
    assert!(o.status.success());
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["iterations"], 1);
    assert!(v["deviation"].as_f64().unwrap() <= 1e-15);

    let rect = dir.path().join("r.csv");
    std::fs::write(&rect, "1,2,3\n4,5,6\n").unwrap();
    let o = run(pgs().arg("sinkhorn-debug").arg(&rect));
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("2x3"), "{}", stderr(&o));

    let bad = dir.path().join("b.json");
    std::fs::write(&bad, "[[1, 2],\n [3, oops]]").unwrap();
    let o = run(pgs().arg("sinkhorn-debug").arg(&bad));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));

    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let rows: Vec<Vec<f64>> = (0..5).map(|_| (0..5).map(|_| rng.gen_range(0.01..1.0)).collect()).collect();
    let m = dir.path().join("m.json");
    std::fs::write(&m, serde_json::to_string(&rows).unwrap()).unwrap();
    let o = run(pgs().arg("sinkhorn-debug").arg(&m));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let trace: Vec<f64> = v["trace"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert!(trace.windows(2).all(|w| w[1] < w[0]), "{trace:?}");
    assert!(*trace.last().unwrap() < 1e-6);
}

#[test]
fn toy_train_writes_curve() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("loss.csv");
    let o = run(pgs()
        .args([
            "toy-train",
            "--steps",
            "4",
            "--batch-size",
            "8",
            "--heldout",
            "8",
            "--steps-per-epoch",
            "2",
            "--masking",
            "random",
            "--csv",
        ])
        .arg(&csv));
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["report"]["losses"].as_array().unwrap().len(), 4);
    assert_eq!(v["config"]["masking"], "random");
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.starts_with("step,loss,mask_ratio"));
}

#[test]
fn bench_reports_stages() {
    let o = run(pgs().args(["bench", "--warmup", "0", "--repeat", "1", "--toy-steps", "0"]));
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    for k in ["decode", "edge", "similarity", "sinkhorn", "selection"] {
        assert!(v["stages_us"][k].as_f64().unwrap() >= 0.0);
    }
    for k in ["mr_us", "ed_us", "otn_us"] {
        assert!(v["groups"][k].is_number());
    }
    assert_eq!(v["n_patches"], 196);
    assert!(v.get("toy_step").is_none());
}
