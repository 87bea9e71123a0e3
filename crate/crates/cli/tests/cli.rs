use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pidkit_core::dataset::{fuse_labels, write_dataset, FrameRecord, MaskRef, Split};
use pidkit_core::geometry::BBox;
use pidkit_core::mask::BinaryMask;

fn pidkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pidkit")).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn road() -> BinaryMask {
    BinaryMask::from_fn(64, 48, |_, y| y >= 24).unwrap()
}

fn write_fixture(dir: &Path) -> String {
    fs::write(dir.join("road.pgm"), road().to_pgm()).unwrap();
    let boxes = [BBox::new(4, 2, 14, 20).unwrap(), BBox::new(30, 20, 40, 40).unwrap()];
    let records = vec![FrameRecord {
        frame_id: "f0".into(),
        city: "bonn".into(),
        split: Split::Val,
        image_w: 64,
        image_h: 48,
        mask: MaskRef::Path("road.pgm".into()),
        cases: fuse_labels(&road(), &boxes, 20),
    }];
    let path = dir.join("set.jsonl");
    write_dataset(&records, &path).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = write_fixture(dir.path());
    assert_eq!(
        stdout(&pidkit(&["validate", "--dataset", &dataset])),
        "ok: 1 frames, 2 cases\n"
    );

    let malformed = dir.path().join("bad.jsonl");
    fs::write(&malformed, "{not json\n").unwrap();
    let out = pidkit(&["validate", "--dataset", malformed.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let text = fs::read_to_string(&dataset).unwrap().replace("\"f0\"", "\"\"");
    let semantic = dir.path().join("semantic.jsonl");
    fs::write(&semantic, text).unwrap();
    let out = pidkit(&["validate", "--dataset", semantic.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));

    let out = pidkit(&[
        "validate",
        "--dataset",
        dir.path().join("missing.jsonl").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn evaluate_perfect_detections() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = write_fixture(dir.path());
    let dets = dir.path().join("model.jsonl");
    fs::write(
        &dets,
        r#"{"frame_id":"f0","detections":[{"x0":4,"y0":2,"x1":14,"y1":20,"confidence":0.95},{"x0":30,"y0":20,"x1":40,"y1":40,"confidence":0.9}]}"#,
    )
    .unwrap();
    let text = stdout(&pidkit(&[
        "evaluate",
        "--dataset",
        &dataset,
        "--detections",
        dets.to_str().unwrap(),
    ]));
    assert!(text.contains("model: model"), "{text}");
    assert!(text.contains("PID_Acc: 1.000000"), "{text}");
    assert!(text.contains("PID_AP@p_t=20: 1.000000"), "{text}");

    fs::write(&dets, r#"{"frame_id":"nope","detections":[]}"#).unwrap();
    let out = pidkit(&[
        "evaluate",
        "--dataset",
        &dataset,
        "--detections",
        dets.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn judge_and_fuse() {
    let dir = tempfile::tempdir().unwrap();
    let mask = dir.path().join("road.rle");
    fs::write(&mask, road().to_rle()).unwrap();
    let boxes = dir.path().join("boxes.txt");
    fs::write(&boxes, "# x0 y0 x1 y1 conf\n4 2 14 20 0.95\n30,20,40,40,0.5\n").unwrap();
    let (m, b) = (mask.to_str().unwrap(), boxes.to_str().unwrap());

    let judged = stdout(&pidkit(&["judge", "--mask", m, "--boxes", b]));
    assert_eq!(judged, "4 2 14 20 0.95 0 N\n");

    let review = dir.path().join("review.jsonl");
    let fused = stdout(&pidkit(&[
        "fuse",
        "--mask",
        m,
        "--boxes",
        b,
        "--review",
        review.to_str().unwrap(),
    ]));
    let lines: Vec<&str> = fused.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].contains("\"intrusion\":\"N\"") && lines[1].contains("\"intrusion\":\"Y\""));
    assert!(review.exists());

    fs::write(&boxes, "4 2 99 20\n").unwrap();
    assert_eq!(pidkit(&["judge", "--mask", m, "--boxes", b]).status.code(), Some(3));
}

#[test]
fn stats_and_arch() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = write_fixture(dir.path());
    let text = stdout(&pidkit(&["stats", "--dataset", &dataset, "--by-split"]));
    assert!(
        text.contains("[all]\ncities: 1\nimages: 1\nintrusion_cases: 1\nno_intrusion_cases: 1\n"),
        "{text}"
    );
    assert!(text.contains("[val]"), "{text}");

    let csv = stdout(&pidkit(&["analyze-arch", "--preset", "resnet18", "--format", "csv"]));
    assert!(csv.lines().nth(1).unwrap().starts_with("resnet18,11689512,"), "{csv}");
    let out = pidkit(&["analyze-arch", "--preset", "no-such-net"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn simulate_rejects_bad_parameters() {
    assert_eq!(
        pidkit(&["simulate", "--scenes", "2", "--alpha", "0.5"]).status.code(),
        Some(3)
    );
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.json");
    fs::write(&cfg, r#"{"scenes": 3, "seed": 1, "typo": true}"#).unwrap();
    assert_eq!(
        pidkit(&["simulate", "--config", cfg.to_str().unwrap()]).status.code(),
        Some(2)
    );
    fs::write(&cfg, r#"{"scenes": 3, "seed": 1, "noise": {"jitter_px": 0}}"#).unwrap();
    let csv = stdout(&pidkit(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--format",
        "csv",
    ]));
    assert!(csv.starts_with("confidence,recall,precision\n"), "{csv}");
}
