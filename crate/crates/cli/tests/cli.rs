use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_splatpg"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn splatpg")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const MINIMAL: &str = r#"{
  "iterations": 4,
  "seed": 3,
  "camera": {"width": 16, "height": 16, "scale": 0.125},
  "init": {"n_gaussians": 6},
  "pg": {"enabled": true, "reward": "compression", "pg_weight": 10.0},
  "snapshot_every": 2
}"#;

fn optimize(dir: &Path, config: &str, out: &str) -> Output {
    let cfg = dir.join("config.json");
    fs::write(&cfg, config).unwrap();
    run(&["optimize", cfg.to_str().unwrap(), "--out", dir.join(out).to_str().unwrap()])
}

#[test]
fn missing_config_names_path() {
    let o = run(&["optimize", "/definitely/not/here.json"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("/definitely/not/here.json"), "{}", stderr(&o));
}

#[test]
fn unknown_key_reports_key_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let o = optimize(dir.path(), "{\n  \"iterations\": 2,\n  \"sede\": 1\n}", "out");
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.contains("sede") && err.contains("line 3"), "{err}");
}

#[test]
fn minimal_config_produces_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let o = optimize(dir.path(), MINIMAL, "out");
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("out");
    for name in ["manifest.json", "metrics.csv", "scene_final.json", "snap_000002.ppm", "snap_000004.ppm"] {
        assert!(out.join(name).exists(), "{name} missing");
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["version"], "splatpg-run-v1");
    assert_eq!(manifest["config"]["iterations"], 4);
    for key in ["scene", "metrics", "snapshot_dir"] {
        assert!(Path::new(manifest["artifacts"][key].as_str().unwrap()).exists());
    }
    let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    assert!(optimize(dir.path(), MINIMAL, "a").status.success());
    assert!(optimize(dir.path(), MINIMAL, "b").status.success());
    for name in ["metrics.csv", "scene_final.json", "snap_000004.ppm"] {
        let a = fs::read(dir.path().join("a").join(name)).unwrap();
        let b = fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs");
    }
}

#[test]
fn render_matches_golden_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("view.ppm");
    let o = run(&[
        "render",
        fixture("scene.json").to_str().unwrap(),
        "--azimuth",
        "0.6",
        "--elevation",
        "0.3",
        "--width",
        "32",
        "--height",
        "32",
        "--scale",
        "0.0625",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(&out).unwrap(), fs::read(fixture("golden.ppm")).unwrap());
    assert_eq!(fs::read(out.with_extension("pgm")).unwrap(), fs::read(fixture("golden.pgm")).unwrap());
}

#[test]
fn empty_scene_renders_solid_background() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bg.ppm");
    let o = run(&[
        "render",
        fixture("empty_gray.json").to_str().unwrap(),
        "--azimuth",
        "0",
        "--elevation",
        "0",
        "--width",
        "4",
        "--height",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let bytes = fs::read(&out).unwrap();
    let header = b"P6\n4 3\n255\n";
    assert_eq!(&bytes[..header.len()], header);
    assert!(bytes[header.len()..].iter().all(|&b| b == 128));
    assert_eq!(bytes.len(), header.len() + 36);
}

#[test]
fn render_round_trip_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let scene = fs::read_to_string(fixture("scene.json")).unwrap();
    let parsed = splatpg::renderer::io::scene_from_json(&scene).unwrap();
    let copy = dir.path().join("copy.json");
    splatpg::renderer::io::write_scene(&copy, &parsed).unwrap();
    let render_to = |scene: &Path, name: &str| {
        let out = dir.path().join(name);
        let o = run(&[
            "render",
            scene.to_str().unwrap(),
            "--azimuth",
            "2.0",
            "--elevation",
            "-0.4",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read(out).unwrap()
    };
    assert_eq!(render_to(&fixture("scene.json"), "a.ppm"), render_to(&copy, "b.ppm"));
}

#[test]
fn malformed_scene_names_field() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"version": "splatscene-v1", "background": [0, 0, 0], "gaussians": [{"position": [0, 0, 0]}]}"#).unwrap();
    for args in [vec!["eval", bad.to_str().unwrap()], vec!["render", bad.to_str().unwrap(), "--azimuth", "0", "--elevation", "0", "--out", "x.ppm"]] {
        let o = run(&args);
        assert!(!o.status.success());
        assert!(stderr(&o).contains("log_scale"), "{}", stderr(&o));
    }
}

fn eval_values(text: &str) -> (String, f64, f64) {
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_string();
    let mut value = |key: &str| {
        let line = lines.next().unwrap();
        let rest = line.strip_prefix(key).unwrap_or_else(|| panic!("expected {key} in {line}"));
        rest.trim().parse::<f64>().unwrap()
    };
    let aes = value("mean_aes_proxy");
    let comp = value("mean_compression_reward");
    (header, aes, comp)
}

#[test]
fn eval_matches_fixture() {
    let o = run(&["eval", fixture("scene.json").to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, aes, comp) = eval_values(&stdout(&o));
    assert_eq!(header, "views 20 azimuth_step 0.31415926535897931 elevation 0");
    // pinned from the reference build
    assert!((aes - 0.18791799664144723).abs() < 1e-9, "{aes}");
    assert!((comp - -0.307_796_223_958_333_3).abs() < 1e-9, "{comp}");
}

#[test]
fn eval_of_gray_empty_scene_has_zero_aesthetic() {
    let o = run(&["eval", fixture("empty_gray.json").to_str().unwrap()]);
    assert!(o.status.success());
    let (_, aes, comp) = eval_values(&stdout(&o));
    assert_eq!(aes, 0.0);
    assert!(comp < 0.0);
}

#[test]
fn grad_check_passes_and_lists_groups() {
    let o = run(&["grad-check", "--size", "8", "--cases", "2"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let text = stdout(&o);
    for group in ["position", "log_scale", "rotation", "color", "opacity_logit", "background", "aes_proxy", "brightness", "logprob_grad/mixture", "eps_vjp/single"] {
        assert!(text.contains(group), "missing {group}");
    }
    assert!(text.contains("all suites passed"));
}

#[test]
fn corrupted_gradient_fails_grad_check() {
    let o = run(&["grad-check", "--size", "8", "--cases", "1", "--corrupt"]);
    assert!(!o.status.success());
    assert!(stdout(&o).contains("FAIL"));
}
