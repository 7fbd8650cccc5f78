mod common;

use std::fs;
use std::path::Path;

use common::{background_root, blob, cli, copy_tree, foreground_root, s, tree, write_instances};
use instmatte::{AlphaPlane, ErrorKind};
use instmatte_cli::layout::instance_file;
use instmatte_cli::raster::{self, BitDepth};
use instmatte_cli::report::{read_records, recompute_summary, Record};

fn three_instance_gt(root: &Path, name: &str) -> Vec<AlphaPlane> {
    let planes = vec![
        blob(48, 32, 10.0, 16.0, 8.0, 12.0),
        blob(48, 32, 26.0, 14.0, 7.0, 10.0),
        blob(48, 32, 40.0, 18.0, 6.0, 9.0),
    ];
    write_instances(&root.join("alphas").join(name), &planes);
    planes
}

fn summary(records: &[Record]) -> instmatte::DatasetSummary {
    records
        .iter()
        .find_map(|r| match r {
            Record::Summary { summary, .. } => Some(summary.clone()),
            _ => None,
        })
        .expect("summary record")
}

#[test]
fn evaluate_perfect_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let gt = dir.path().join("gt");
    three_instance_gt(&gt, "a");
    three_instance_gt(&gt, "b");
    let pred = dir.path().join("pred");
    copy_tree(&gt.join("alphas"), &pred.join("alphas"));
    let report = dir.path().join("r.jsonl");
    let o = cli(&["evaluate", s(&pred), s(&gt), "--out", s(&report)]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert!(o.stdout.contains("IMQ"));
    let records = read_records(&report).unwrap();
    let sum = summary(&records);
    for kind in ErrorKind::ALL {
        assert_eq!(sum.kind(kind).unwrap().imq, 100.0, "{kind}");
    }
    assert_eq!(recompute_summary(&records).unwrap(), sum);
    assert!(matches!(&records[0], Record::Header { schema_version: 1, .. }));
}

#[test]
fn evaluate_empty_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let gt = dir.path().join("gt");
    three_instance_gt(&gt, "a");
    let pred = dir.path().join("pred");
    fs::create_dir_all(pred.join("alphas").join("a")).unwrap();
    let report = dir.path().join("r.jsonl");
    let o = cli(&["evaluate", s(&pred), s(&gt), "--out", s(&report), "--errors", "mad,grad"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let records = read_records(&report).unwrap();
    let sum = summary(&records);
    assert_eq!(sum.counts.fn_, 3);
    assert_eq!(sum.counts.tp, 0);
    assert_eq!(sum.kind(ErrorKind::Mad).unwrap().imq, 0.0);
    assert!(sum.kind(ErrorKind::Conn).is_none());
}

#[test]
fn evaluate_misaligned_layouts() {
    let dir = tempfile::tempdir().unwrap();
    let gt = dir.path().join("gt");
    three_instance_gt(&gt, "a");
    three_instance_gt(&gt, "b");
    let pred = dir.path().join("pred");
    copy_tree(&gt.join("alphas").join("a"), &pred.join("alphas").join("a"));
    let o = cli(&["evaluate", s(&pred), s(&gt), "--out", s(&dir.path().join("r.jsonl"))]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains('b'), "{}", o.stderr);

    copy_tree(&gt.join("alphas").join("a"), &pred.join("alphas").join("b"));
    copy_tree(&gt.join("alphas").join("a"), &pred.join("alphas").join("zzz"));
    let o = cli(&["evaluate", s(&pred), s(&gt), "--out", s(&dir.path().join("r.jsonl"))]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("zzz"), "{}", o.stderr);

    let o = cli(&["evaluate", s(&dir.path().join("nope")), s(&gt)]);
    assert_eq!(o.code, 2);
}

#[test]
fn evaluate_skips_unreadable_rasters() {
    let dir = tempfile::tempdir().unwrap();
    let gt = dir.path().join("gt");
    three_instance_gt(&gt, "a");
    three_instance_gt(&gt, "b");
    let pred = dir.path().join("pred");
    copy_tree(&gt.join("alphas"), &pred.join("alphas"));
    fs::write(pred.join("alphas").join("b").join(instance_file(1)), b"not a png").unwrap();
    let report = dir.path().join("r.jsonl");
    let o = cli(&["evaluate", s(&pred), s(&gt), "--out", s(&report)]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert!(o.stdout.contains("skipped 1 image(s): b"), "{}", o.stdout);
    let records = read_records(&report).unwrap();
    assert!(records.iter().any(|r| matches!(r, Record::Error { name, .. } if name == "b")));
    match records.last().unwrap() {
        Record::Summary { summary, skipped } => {
            assert_eq!(skipped, &vec!["b".to_string()]);
            assert_eq!(summary.images, 1);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn evaluate_reproduces_a_reported_mq_rq_pair() {
    // 179 true positives and 10 FP + 10 FN give RQ 94.71; a constant alpha
    // offset of 4878 codes gives every pair S = 0.25567, so MQ is 25.57
    let dir = tempfile::tempdir().unwrap();
    let (gt, pred) = (dir.path().join("gt/alphas"), dir.path().join("pred/alphas"));
    let quadrant = |q: usize, code: u16| -> Vec<u16> {
        (0..256)
            .map(|p| {
                let (x, y) = (p % 16, p / 16);
                if (x / 8) + 2 * (y / 8) == q { code } else { 0 }
            })
            .collect()
    };
    let write = |dir: &Path, planes: Vec<Vec<u16>>| {
        fs::create_dir_all(dir).unwrap();
        for (k, codes) in planes.into_iter().enumerate() {
            raster::write_codes(&dir.join(instance_file(k)), 16, 16, codes, BitDepth::Sixteen).unwrap();
        }
    };
    let (g, p) = (52428u16, 52428u16 - 4878);
    for i in 0..45 {
        let n = if i < 44 { 4 } else { 3 };
        write(&gt.join(format!("m{i:02}")), (0..n).map(|q| quadrant(q, g)).collect());
        write(&pred.join(format!("m{i:02}")), (0..n).map(|q| quadrant(q, p)).collect());
    }
    for i in 0..10 {
        write(&gt.join(format!("u{i:02}")), vec![quadrant(0, g)]);
        write(&pred.join(format!("u{i:02}")), vec![quadrant(1, p)]);
    }
    let report = dir.path().join("r.jsonl");
    let o = cli(&[
        "evaluate",
        s(&dir.path().join("pred")),
        s(&dir.path().join("gt")),
        "--out",
        s(&report),
        "--errors",
        "mad",
        "--agg",
        "pooled",
    ]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let sum = summary(&read_records(&report).unwrap());
    let k = sum.kind(ErrorKind::Mad).unwrap();
    assert_eq!((sum.counts.tp, sum.counts.fp, sum.counts.fn_), (179, 10, 10));
    assert!((k.rq - 94.71).abs() < 0.01, "{k:?}");
    assert!((k.mq - 25.57).abs() < 0.01, "{k:?}");
    assert!((k.imq - 24.22).abs() <= 0.01, "{k:?}");
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(cli(&["bogus"]).code, 1);
    assert_eq!(cli(&["evaluate"]).code, 1);
    assert_eq!(cli(&["--help"]).code, 0);
    let dir = tempfile::tempdir().unwrap();
    let gt = dir.path().join("gt");
    three_instance_gt(&gt, "a");
    assert_eq!(cli(&["evaluate", s(&gt), s(&gt), "--w", "-1"]).code, 1);
    assert_eq!(cli(&["evaluate", s(&gt), s(&gt), "--errors", "nope"]).code, 1);
    assert_eq!(cli(&["evaluate", s(&gt), s(&gt), "--bit-depth", "12"]).code, 1);
}

fn compose(dir: &Path, seed: &str, extra: &[&str]) -> (std::path::PathBuf, common::Outcome) {
    let fg = dir.join("fg");
    let bg = dir.join("bg");
    if !fg.exists() {
        foreground_root(&fg, 5);
        background_root(&bg, 2, 320, 96);
    }
    let out = dir.join(format!("scenes_{seed}_{}", extra.join("_")));
    let mut args = vec!["compose", s(&fg), s(&bg), "--out", s(&out), "--scenes", "4", "--seed", seed];
    args.extend_from_slice(extra);
    let o = cli(&args);
    (out, o)
}

#[test]
fn compose_is_deterministic_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let (a, o) = compose(dir.path(), "7", &[]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let first = tree(&a);
    fs::remove_dir_all(&a).unwrap();
    let (a, o) = compose(dir.path(), "7", &[]);
    assert_eq!(o.code, 0);
    assert_eq!(tree(&a), first);
    let (b, _) = compose(dir.path(), "8", &[]);
    assert_ne!(tree(&b), first);
    assert!(first.contains_key(Path::new("layers/scene_0000/manifest.json")));

    // partition of unity survives 16-bit quantization
    for name in ["scene_0000", "scene_0003"] {
        let stored = instmatte_cli::commands::compose::read_scene(&a, name).unwrap();
        for p in 0..stored.background_alpha.len() {
            let sum: f64 = stored.background_alpha.values()[p]
                + stored.effective.planes().map(|e| e.values()[p]).sum::<f64>();
            assert!((sum - 1.0).abs() <= 1e-9, "{name} pixel {p}: {sum}");
        }
    }

    // ground truth against itself scores 100
    let report = dir.path().join("self.jsonl");
    let o = cli(&["evaluate", s(&a), s(&a), "--out", s(&report)]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let sum = summary(&read_records(&report).unwrap());
    for kind in ErrorKind::ALL {
        assert_eq!(sum.kind(kind).unwrap().imq, 100.0);
    }
}

#[test]
fn compose_rejects_bad_counts_and_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let (_, o) = compose(dir.path(), "1", &["--count", "1"]);
    assert_eq!(o.code, 1, "{}", o.stderr);
    let (_, o) = compose(dir.path(), "1", &["--count", "6"]);
    assert_eq!(o.code, 1);
    let empty = dir.path().join("empty");
    fs::create_dir_all(empty.join("images")).unwrap();
    fs::create_dir_all(empty.join("alphas")).unwrap();
    let o = cli(&["compose", s(&empty), s(&dir.path().join("bg")), "--out", s(&dir.path().join("x"))]);
    assert_eq!(o.code, 1);
}

#[test]
fn trimask_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("data");
    three_instance_gt(&root, "multi");
    write_instances(&root.join("alphas").join("single"), &[blob(48, 32, 20.0, 16.0, 8.0, 8.0)]);
    let out = dir.path().join("out");
    let o = cli(&["trimask", s(&root), "--out", s(&out), "--band-k", "0"]);
    assert_eq!(o.code, 0, "{}", o.stderr);

    let r = raster::read_mask(&out.join("trimasks/single/instance_00_r.png")).unwrap();
    assert!(r.is_all_zero());
    let rm = raster::read_alpha(&out.join("trimattes/single/instance_00_r.png")).unwrap();
    assert!(rm.is_all_zero());
    for k in 0..3 {
        let part = |p: &str| raster::read_mask(&out.join(format!("trimasks/multi/instance_{k:02}_{p}.png"))).unwrap();
        let (t, r, b) = (part("t"), part("r"), part("b"));
        // the blobs are disjoint, so the triple partitions the image
        assert!(t.and(&r).unwrap().is_all_zero());
        assert_eq!(t.or(&r).unwrap().or(&b).unwrap().count(), 48 * 32);
        assert_eq!(t.xor(&r).unwrap().xor(&b).unwrap().count(), 48 * 32);
        let band = raster::read_mask(&out.join(format!("bands/multi/{}", instance_file(k)))).unwrap();
        assert!(band.is_all_zero());
    }

    let o = cli(&["trimask", s(&root), "--out", s(&out), "--band-k", "3", "--target", "0"]);
    assert_eq!(o.code, 0);
    assert!(!raster::read_mask(&out.join("bands/single/instance_00.png")).unwrap().is_all_zero());

    let o = cli(&["trimask", s(&root), "--out", s(&out), "--target", "1"]);
    assert_eq!(o.code, 1, "{}", o.stderr);

    let aug = |seed: &str| {
        let out = dir.path().join(format!("aug{seed}"));
        let o = cli(&["trimask", s(&root), "--out", s(&out), "--augment", "--seed", seed]);
        assert_eq!(o.code, 0, "{}", o.stderr);
        tree(&out.join("trimasks"))
    };
    assert_eq!(aug("3"), aug("3"));
}

fn write_triples(dir: &Path, triples: &[(f64, f64, f64)], w: usize, h: usize) {
    fs::create_dir_all(dir).unwrap();
    for (k, &(t, r, b)) in triples.iter().enumerate() {
        for (part, v) in [("t", t), ("r", r), ("b", b)] {
            let plane = AlphaPlane::filled(w, h, v).unwrap();
            raster::write_alpha(&dir.join(format!("instance_{k:02}_{part}.png")), &plane, BitDepth::Sixteen).unwrap();
        }
    }
}

fn refine_summary(out: &Path) -> serde_json::Value {
    let text = fs::read_to_string(out.join("refine_report.jsonl")).unwrap();
    serde_json::from_str(text.lines().last().unwrap()).unwrap()
}

#[test]
fn refine_on_ground_truth_is_a_no_op() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("data");
    three_instance_gt(&root, "a");
    let masks = dir.path().join("masks");
    assert_eq!(cli(&["trimask", s(&root), "--out", s(&masks)]).code, 0);
    let out = dir.path().join("refined");
    let o = cli(&["refine", s(&masks), "--out", s(&out)]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert_eq!(refine_summary(&out)["patches"], 0);
    let before = tree(&masks.join("trimattes"));
    let mut after = tree(&out);
    after.remove(Path::new("refine_report.jsonl"));
    assert_eq!(after, before);
}

#[test]
fn refine_reduces_error_and_exposes_order() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("tm");
    write_triples(&root.join("img"), &[(0.8, 0.3, 0.1), (0.3, 0.6, 0.1)], 20, 10);
    let out = dir.path().join("par");
    let o = cli(&["refine", s(&root), "--out", s(&out), "--mode", "parallel"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let sum = refine_summary(&out);
    let (pre, post) = (sum["pre_mean_error"].as_f64().unwrap(), sum["post_mean_error"].as_f64().unwrap());
    assert!(post < pre, "{pre} -> {post}");
    assert_eq!(sum["patches"], 1);

    let conflict = dir.path().join("conflict");
    write_triples(&conflict.join("img"), &[(1.0, 0.0, 0.0), (1.0, 0.0, 0.0)], 8, 8);
    let o = cli(&["refine", s(&conflict), "--out", s(&dir.path().join("c")), "--mode", "cycle"]);
    assert_eq!(o.code, 1, "{}", o.stderr);
    let o = cli(&["refine", s(&conflict), "--out", s(&dir.path().join("c")), "--mode", "cycle", "--order", "1,1"]);
    assert_eq!(o.code, 1);
    let o = cli(&["refine", s(&conflict), "--out", s(&dir.path().join("c")), "--mode", "cycle", "--order", "1,2,3"]);
    assert_eq!(o.code, 1);

    let run = |order: &str| {
        let out = dir.path().join(format!("cycle_{}", order.replace(',', "")));
        let o = cli(&["refine", s(&conflict), "--out", s(&out), "--mode", "cycle", "--order", order]);
        assert_eq!(o.code, 0, "{}", o.stderr);
        raster::read_alpha(&out.join("img/instance_00_t.png")).unwrap().values()[0]
    };
    // outputs are 16-bit, so compare within one code
    assert!(run("1,2").abs() <= 1.0 / 65535.0);
    assert!((run("2,1") - 0.75).abs() <= 1.0 / 65535.0);
}

#[test]
fn audit_reports_overlap_counts() {
    let dir = tempfile::tempdir().unwrap();
    let (disjoint, o) = compose(dir.path(), "5", &["--count", "2", "--overlap-min", "-0.3", "--overlap-max", "-0.1"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let o = cli(&["audit", s(&disjoint)]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert!(o.stdout.contains("0.0000% above 2"), "{}", o.stdout);
    let csv = fs::read_to_string(disjoint.join("audit.csv")).unwrap();
    assert!(csv.lines().last().unwrap().starts_with("all,"));

    let crowded = dir.path().join("crowded");
    let planes: Vec<AlphaPlane> = (0..3).map(|_| AlphaPlane::filled(4, 4, 0.25).unwrap()).collect();
    write_instances(&crowded.join("alphas").join("pile"), &planes);
    let o = cli(&["audit", s(&crowded), "--out", s(&dir.path().join("c.csv"))]);
    assert_eq!(o.code, 0);
    assert!(o.stdout.contains("100.0000% above 2"), "{}", o.stdout);

    let single = dir.path().join("single");
    write_instances(&single.join("alphas").join("one"), &[blob(10, 10, 5.0, 5.0, 3.0, 3.0)]);
    let o = cli(&["audit", s(&single)]);
    assert!(o.stdout.contains("max 2"), "{}", o.stdout);
}

#[test]
fn config_file_sets_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let gt = dir.path().join("gt");
    three_instance_gt(&gt, "a");
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "errors = \"mad\"\nw = 20.0\nseed = 42\n").unwrap();
    let report = dir.path().join("r.jsonl");
    let o = cli(&["evaluate", s(&gt), s(&gt), "--out", s(&report), "--config", s(&cfg), "--w", "5"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    match &read_records(&report).unwrap()[0] {
        Record::Header { config, seed, .. } => {
            assert_eq!(config.w, 5.0);
            assert_eq!(config.error_kinds, vec![ErrorKind::Mad]);
            assert_eq!(*seed, 42);
        }
        other => panic!("{other:?}"),
    }
    fs::write(&cfg, "unknown-key = 1\n").unwrap();
    assert_eq!(cli(&["evaluate", s(&gt), s(&gt), "--config", s(&cfg)]).code, 1);
}
