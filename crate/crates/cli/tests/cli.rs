use std::path::Path;
use std::process::{Command, Output};

fn biatrium(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_biatrium"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn biatrium")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = biatrium(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const SMALL_PHANTOM: &str = r#"{
    "shape": [60, 52, 16],
    "spacing": [1.0, 1.0, 2.0],
    "left_atrium": {"center_mm": [38.0, 26.0, 15.0], "radii_mm": [8.0, 7.0, 8.0]},
    "right_atrium": {"center_mm": [19.0, 26.0, 15.0], "radii_mm": [7.0, 7.0, 8.0]},
    "wall_thickness_mm": 2.0
}"#;

fn phantom(dir: &Path) {
    std::fs::write(dir.join("spec.json"), SMALL_PHANTOM).unwrap();
    ok(dir, &["phantom", "img.nii.gz", "gt.nii.gz", "--spec", "spec.json", "--seed", "3"]);
}

#[test]
fn manual_stage_chain_restores_ground_truth() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    phantom(d);
    ok(d, &["enhance", "img.nii.gz", "enh.nii.gz"]);
    ok(d, &["standardize", "enh.nii.gz", "std.nii.gz", "--shape", "64,48,16", "--placement", "std.json"]);
    ok(d, &["standardize", "gt.nii.gz", "gt_std.nii.gz", "--shape", "64,48,16", "--placement", "std_gt.json", "--labels"]);
    assert_eq!(
        std::fs::read(d.join("std.json")).unwrap(),
        std::fs::read(d.join("std_gt.json")).unwrap()
    );
    ok(d, &["downsample", "gt_std.nii.gz", "coarse.nii.gz", "--factors", "4,4,1", "--labels"]);
    ok(d, &["downsample", "std.nii.gz", "coarse_img.nii.gz", "--factors", "4,4,1"]);
    let bbox = ok(d, &["bbox", "coarse.nii.gz", "--scale", "4,4,1", "--margin", "2"]);
    std::fs::write(d.join("box.json"), &bbox).unwrap();
    assert!(bbox.contains("\"lo\""), "{bbox}");
    ok(d, &["crop-roi", "gt_std.nii.gz", "fine.nii.gz", "--bbox", "box.json", "--window", "48,40,16", "--placement", "crop.json", "--labels"]);
    ok(d, &["stitch", "fine.nii.gz", "back.nii.gz", "--placement", "crop.json", "--placement", "std.json"]);
    let csv = ok(d, &["evaluate", "--pred", "back.nii.gz", "--gt", "gt.nii.gz", "--case-id", "p"]);
    assert_eq!(
        csv,
        "case_id,class,dice,hd95_mm,flags\np,wall,1,0,\np,right_atrium,1,0,\np,left_atrium,1,0,\n"
    );
}

#[test]
fn evaluate_percent_and_region() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    phantom(d);
    ok(d, &["standardize", "gt.nii.gz", "shifted.nii.gz", "--shape", "60,52,18", "--placement", "p.json", "--labels"]);
    ok(d, &["standardize", "shifted.nii.gz", "back.nii.gz", "--shape", "60,52,16", "--placement", "q.json", "--labels"]);
    let csv = ok(d, &["evaluate", "--pred", "back.nii.gz", "--gt", "gt.nii.gz", "--percent", "--region"]);
    assert!(csv.lines().nth(1).unwrap().starts_with("case,wall,100,0"), "{csv}");
    let out = biatrium(d, &["evaluate", "--pred", "shifted.nii.gz", "--gt", "gt.nii.gz"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("shape mismatch"));
}

#[test]
fn loss_scalar_and_grad_check() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    phantom(d);
    // the phantom image in [0, 1] read as a foreground probability
    let v: f64 = ok(d, &["loss", "--probs", "img.nii.gz", "--gt", "gt.nii.gz", "--classes", "3"])
        .trim()
        .parse()
        .unwrap();
    assert!(v.is_finite() && v > 0.0);
    let out = ok(d, &["loss", "grad-check", "--samples", "300", "--seed", "1"]);
    assert!(out.contains("300 samples") && out.trim_end().ends_with("ok"), "{out}");
    assert!(!biatrium(d, &["loss", "--probs", "img.nii.gz", "--gt", "gt.nii.gz", "--margin", "1.5"]).status.success());
}

#[test]
fn run_reports_failures_through_exit_status() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    phantom(d);
    let config = |cases: &str| {
        format!(
            r#"{{
            "cases": {cases},
            "output_dir": "out",
            "standard_shape": [64, 48, 16],
            "fine_window": [48, 40, 16],
            "bbox_margin_vox": 2,
            "coarse_backend": {{"kind": "copy-file", "source_path": "gt.nii.gz"}},
            "fine_backend": {{"kind": "external", "command_template": "cp {{input}} /dev/null && false {{output}}"}}
        }}"#
        )
    };
    std::fs::write(d.join("bad.json"), config(r#"[{"id": "p", "image": "img.nii.gz", "gt": "gt.nii.gz"}]"#)).unwrap();
    let out = biatrium(d, &["run", "--config", "bad.json", "--workers", "1"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("case p failed"));
    let summary = std::fs::read_to_string(d.join("out/summary.csv")).unwrap();
    assert!(summary.ends_with("p,failed,,,,,,\n"), "{summary}");

    let bad_key = config("[]").replace("\"bbox_margin_vox\"", "\"bbox_margin\"");
    std::fs::write(d.join("typo.json"), bad_key).unwrap();
    let out = biatrium(d, &["run", "--config", "typo.json"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bbox_margin"));
}

#[test]
fn usage_errors_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert!(!biatrium(d, &["crop-roi", "a.nii", "b.nii", "--placement", "p.json"]).status.success());
    assert!(!biatrium(d, &["standardize", "a.nii", "b.nii", "--shape", "1,2", "--placement", "p.json"]).status.success());
    let out = biatrium(d, &["enhance", "missing.nii", "o.nii"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.nii"));
}
