//! End-to-end tests driving the built binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mono3d"))
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("mono3d-cli-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn binary");
    assert!(
        out.status.success(),
        "command failed: {:?}\nstdout: {}\nstderr: {}",
        cmd,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn synth(dir: &Path, extra: &[&str]) {
    let mut cmd = bin();
    cmd.args([
        "synth",
        "--out-dir",
        dir.to_str().unwrap(),
        "--frames",
        "4",
        "--seed",
        "11",
    ])
    .args(extra);
    run_ok(&mut cmd);
}

fn report_aps(report: &serde_json::Value, metric: &str) -> [f64; 3] {
    let ap = &report["metrics"][metric]["ap"];
    [
        ap["easy"].as_f64().unwrap(),
        ap["moderate"].as_f64().unwrap(),
        ap["hard"].as_f64().unwrap(),
    ]
}

#[test]
fn synth_is_deterministic_and_parseable() {
    let a = temp_dir("synth-a");
    let b = temp_dir("synth-b");
    synth(&a, &[]);
    synth(&b, &[]);
    for frame in 0..4 {
        let name = format!("label_2/{frame:06}.txt");
        let text_a = fs::read_to_string(a.join(&name)).unwrap();
        let text_b = fs::read_to_string(b.join(&name)).unwrap();
        assert_eq!(text_a, text_b, "same seed must give identical files");
        let labels = mono3d::kitti::parse_label_file(&text_a).unwrap();
        assert!(!labels.is_empty());
        for label in &labels {
            assert!(label.location.z >= 5.0 && label.location.z <= 80.0);
        }
        mono3d::kitti::parse_calibration(
            &fs::read_to_string(a.join(format!("calib/{frame:06}.txt"))).unwrap(),
        )
        .unwrap();
    }
    let split = mono3d::kitti::SplitList::parse(
        &fs::read_to_string(a.join("split.txt")).unwrap(),
    )
    .unwrap();
    assert_eq!(split.ids(), &[0, 1, 2, 3]);
}

#[test]
fn zero_noise_predictions_evaluate_to_perfect_ap() {
    let dir = temp_dir("eval");
    synth(&dir, &["--predictions"]);
    let report_path = dir.join("report.json");
    let pr_dir = dir.join("pr");
    run_ok(bin().args([
        "eval",
        "--gt-dir",
        dir.join("label_2").to_str().unwrap(),
        "--pred-dir",
        dir.join("pred").to_str().unwrap(),
        "--calib-dir",
        dir.join("calib").to_str().unwrap(),
        "--out",
        report_path.to_str().unwrap(),
        "--pr-csv-dir",
        pr_dir.to_str().unwrap(),
        "--jobs",
        "2",
    ]));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report_path).unwrap()).unwrap();
    for metric in ["2d", "bev", "3d"] {
        assert_eq!(report_aps(&report, metric), [1.0, 1.0, 1.0]);
    }
    let pr = fs::read_to_string(pr_dir.join("pr_bev_moderate.csv")).unwrap();
    assert!(pr.starts_with("# schema: mono3d.pr.v1\nrecall,precision\n"));
    assert!(pr.lines().count() > 2);
}

#[test]
fn empty_predictions_evaluate_to_zero_ap() {
    let dir = temp_dir("eval-empty");
    synth(&dir, &[]);
    let empty = dir.join("empty");
    fs::create_dir_all(&empty).unwrap();
    for frame in 0..4 {
        fs::write(empty.join(format!("{frame:06}.txt")), "").unwrap();
    }
    let report_path = dir.join("report.json");
    run_ok(bin().args([
        "eval",
        "--gt-dir",
        dir.join("label_2").to_str().unwrap(),
        "--pred-dir",
        empty.to_str().unwrap(),
        "--calib-dir",
        dir.join("calib").to_str().unwrap(),
        "--metric",
        "2d",
        "--out",
        report_path.to_str().unwrap(),
    ]));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report_aps(&report, "2d"), [0.0, 0.0, 0.0]);
}

#[test]
fn decode_pipeline_reaches_perfect_ap_and_offset_ablation_hurts_bev() {
    let dir = temp_dir("decode");
    // Near, off-axis scenes make the 2D/3D center gap visible.
    synth(
        &dir,
        &[
            "--raw-heads-dir",
            dir.join("heads").to_str().unwrap(),
            "--codec",
            "lid",
            "--depth-min",
            "5",
            "--depth-max",
            "22",
            "--lateral-min",
            "2.5",
            "--lateral-max",
            "10",
        ],
    );
    let decoded = dir.join("decoded");
    run_ok(bin().args([
        "decode",
        "--raw-heads",
        dir.join("heads").to_str().unwrap(),
        "--calib-dir",
        dir.join("calib").to_str().unwrap(),
        "--out-dir",
        decoded.to_str().unwrap(),
        "--codec",
        "lid",
    ]));
    let report_path = dir.join("report.json");
    run_ok(bin().args([
        "eval",
        "--gt-dir",
        dir.join("label_2").to_str().unwrap(),
        "--pred-dir",
        decoded.to_str().unwrap(),
        "--calib-dir",
        dir.join("calib").to_str().unwrap(),
        "--out",
        report_path.to_str().unwrap(),
    ]));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report_path).unwrap()).unwrap();
    for metric in ["2d", "bev", "3d"] {
        assert_eq!(report_aps(&report, metric), [1.0, 1.0, 1.0], "{metric}");
    }

    // Same heads with the center offset zeroed out.
    let zeroed = dir.join("zeroed");
    run_ok(bin().args([
        "decode",
        "--raw-heads",
        dir.join("heads").to_str().unwrap(),
        "--calib-dir",
        dir.join("calib").to_str().unwrap(),
        "--out-dir",
        zeroed.to_str().unwrap(),
        "--codec",
        "lid",
        "--zero-offset3d",
    ]));
    let ablation_path = dir.join("ablation.json");
    run_ok(bin().args([
        "eval",
        "--gt-dir",
        dir.join("label_2").to_str().unwrap(),
        "--pred-dir",
        zeroed.to_str().unwrap(),
        "--calib-dir",
        dir.join("calib").to_str().unwrap(),
        "--out",
        ablation_path.to_str().unwrap(),
    ]));
    let ablation: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&ablation_path).unwrap()).unwrap();
    assert_eq!(report_aps(&ablation, "2d"), [1.0, 1.0, 1.0]);
    assert!(report_aps(&ablation, "bev")[1] < 1.0);
    assert!(report_aps(&ablation, "3d")[1] < 1.0);
}

#[test]
fn eval_missing_frames_exits_2_with_frame_list() {
    let dir = temp_dir("missing");
    synth(&dir, &["--predictions"]);
    fs::remove_file(dir.join("pred/000002.txt")).unwrap();
    let out = bin()
        .args([
            "eval",
            "--gt-dir",
            dir.join("label_2").to_str().unwrap(),
            "--pred-dir",
            dir.join("pred").to_str().unwrap(),
            "--calib-dir",
            dir.join("calib").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("000002.txt"), "stderr: {stderr}");
}

#[test]
fn decode_rejects_malformed_json_with_pointer() {
    let dir = temp_dir("badjson");
    synth(&dir, &[]);
    let heads = dir.join("heads");
    fs::create_dir_all(&heads).unwrap();
    fs::write(
        heads.join("000000.json"),
        r#"{"schema_version":1,"frame":"000000","instances":[{"class":"Car","cell":[1,2],"center_offset":[0,0],"size_px":[10,10],"offset3d":[[0,0]],"depth":[{"kind":"eigen"}],"dims":[1,1,1],"orientation":[0,1,0,1,0,0,0,0],"score":1}]}"#,
    )
    .unwrap();
    let out = bin()
        .args([
            "decode",
            "--raw-heads",
            heads.to_str().unwrap(),
            "--calib-dir",
            dir.join("calib").to_str().unwrap(),
            "--out-dir",
            dir.join("out").to_str().unwrap(),
            "--codec",
            "eigen",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("/instances/0/depth/0"), "stderr: {stderr}");
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn codec_table_matches_bin_layout() {
    let dir = temp_dir("bins");
    let lid = dir.join("lid.csv");
    run_ok(bin().args([
        "codec-table",
        "--codec",
        "lid",
        "--out",
        lid.to_str().unwrap(),
    ]));
    let rows = read_csv(&lid);
    assert_eq!(rows.len(), 80);
    let width0: f64 = rows[0][3].parse().unwrap();
    assert!((width0 - 180.0 / 6480.0).abs() < 1e-9, "width {width0}");
    // Widths increase arithmetically.
    let widths: Vec<f64> = rows.iter().map(|r| r[3].parse().unwrap()).collect();
    for pair in widths.windows(2) {
        assert!((pair[1] - pair[0] - width0).abs() < 1e-9);
    }

    let sid = dir.join("sid.csv");
    run_ok(bin().args([
        "codec-table",
        "--codec",
        "sid",
        "--out",
        sid.to_str().unwrap(),
    ]));
    let rows = read_csv(&sid);
    let five = rows
        .iter()
        .find(|r| {
            let lo: f64 = r[1].parse().unwrap();
            let hi: f64 = r[2].parse().unwrap();
            lo <= 5.0 && 5.0 < hi
        })
        .expect("bin containing 5 m");
    assert_eq!(five[0], "28", "5 m sits in the 29th (0-based 28) bin");

    let single = dir.join("single.csv");
    run_ok(bin().args([
        "codec-table",
        "--codec",
        "lid",
        "--bins",
        "1",
        "--out",
        single.to_str().unwrap(),
    ]));
    let rows = read_csv(&single);
    assert_eq!(rows.len(), 1);
    let (lo, hi): (f64, f64) = (rows[0][1].parse().unwrap(), rows[0][2].parse().unwrap());
    assert_eq!((lo, hi), (1.0, 91.0));

    // The plain exponential codec has no bin table.
    let out = bin()
        .args(["codec-table", "--codec", "eigen", "--out", "x.csv"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn codec_roundtrip_residual_errors_vanish() {
    let dir = temp_dir("roundtrip");
    let path = dir.join("rt.csv");
    run_ok(bin().args([
        "codec-roundtrip",
        "--samples",
        "2000",
        "--out",
        path.to_str().unwrap(),
    ]));
    let header: Vec<String> = fs::read_to_string(&path)
        .unwrap()
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .map(str::to_string)
        .collect();
    assert_eq!(
        header,
        ["depth", "sid_median_err", "sid_full_err", "lid_median_err", "lid_full_err"]
    );
    let rows = read_csv(&path);
    assert_eq!(rows.len(), 2000);
    let mut checked_example = false;
    for row in &rows {
        let depth: f64 = row[0].parse().unwrap();
        let sid_full: f64 = row[2].parse().unwrap();
        let lid_median: f64 = row[3].parse().unwrap();
        let lid_full: f64 = row[4].parse().unwrap();
        assert!(sid_full < 1e-9 && lid_full < 1e-9, "residual decode is exact");
        if (depth - 5.0).abs() < 0.03 {
            // Half the width of the LID bin holding 5 m (0-based 16).
            let delta = 2.0 * 90.0 / (80.0 * 81.0);
            assert!(lid_median <= delta * 17.0 / 2.0);
            checked_example = true;
        }
    }
    assert!(checked_example, "grid must probe near 5 m");

    let out = bin()
        .args(["codec-roundtrip", "--samples", "1", "--out", "x.csv"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn depth_hist_counts_exactly() {
    let dir = temp_dir("hist");
    let labels = dir.join("label_2");
    fs::create_dir_all(&labels).unwrap();
    let line = |z: f64, class: &str| {
        format!("{class} 0.00 0 0.00 100.00 100.00 200.00 150.00 1.50 1.70 4.20 0.00 1.65 {z:.2} 0.00\n")
    };
    fs::write(
        labels.join("000000.txt"),
        format!("{}{}{}", line(10.0, "Car"), line(12.0, "Car"), line(31.0, "Car")),
    )
    .unwrap();
    fs::write(labels.join("000001.txt"), line(15.0, "Van")).unwrap();
    let path = dir.join("hist.csv");
    run_ok(bin().args([
        "depth-hist",
        "--label-dir",
        labels.to_str().unwrap(),
        "--bin-width",
        "10",
        "--out",
        path.to_str().unwrap(),
    ]));
    let rows = read_csv(&path);
    let counts: Vec<u64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert_eq!(counts, vec![0, 2, 0, 1], "Van line must not count");

    // Invalid bin width is rejected before touching files.
    let out = bin()
        .args([
            "depth-hist",
            "--label-dir",
            "does-not-exist",
            "--bin-width",
            "0",
            "--out",
            "x.csv",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
