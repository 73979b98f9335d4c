use std::path::Path;
use std::process::{Command, Output};

use loomflow::cli::config::{Layers, RunConfig, KEYS};
use loomflow::cli::resolve_args;

/// Two distinct valid values per key.
fn values(key: &str) -> (&'static str, &'static str) {
    match key {
        "mode" => ("pixel", "angular"),
        "orientation" => ("h_over_v", "v_over_h"),
        "direction_test" => ("signed", "unsigned"),
        "poly_n" | "win_size" => ("5", "9"),
        "levels" | "iterations" | "frames" | "border" | "trim_rounds" | "threads" | "min_area" => ("2", "3"),
        "width" | "height" => ("64", "80"),
        "texture_seed" => ("11", "12"),
        _ => ("0.25", "0.75"),
    }
}

fn resolved_value(cfg: &RunConfig, key: &str) -> String {
    if key == "threads" {
        return cfg.threads.to_string();
    }
    let text = cfg.to_config_text();
    let layers: Layers = text.parse().unwrap();
    layers.get(key).unwrap().to_string()
}

#[test]
fn flag_overrides_config_file_for_every_key() {
    let dir = tempfile::tempdir().unwrap();
    for (key, _) in KEYS {
        let (in_file, on_flag) = values(key);
        let path = dir.path().join(format!("{key}.cfg"));
        std::fs::write(&path, format!("{key}={in_file}\n")).unwrap();
        let path = path.to_str().unwrap();

        let from_file = resolve_args(["loomflow", "--config", path, "foe", "x.flo"]).unwrap();
        let flag = format!("--{}", key.replace('_', "-"));
        let from_flag = resolve_args(["loomflow", "--config", path, "foe", "x.flo", &flag, on_flag]).unwrap();
        let from_set = resolve_args([
            "loomflow",
            "--config",
            path,
            "foe",
            "x.flo",
            "--set",
            &format!("{key}={on_flag}"),
        ])
        .unwrap();

        let parsed = |v: &str| v.parse::<f64>().map(|x| x.to_string()).unwrap_or_else(|_| v.to_string());
        assert_eq!(resolved_value(&from_file, key), parsed(in_file), "{key} from file");
        assert_eq!(resolved_value(&from_flag, key), parsed(on_flag), "{key} from flag");
        assert_eq!(resolved_value(&from_set, key), parsed(on_flag), "{key} from --set");
    }
}

#[test]
fn sprite_keys_via_set() {
    let cfg = resolve_args([
        "loomflow",
        "sim",
        "--out",
        "x",
        "--set",
        "sprite.0.depth=25",
        "--set",
        "sprite.0.size_w=4",
        "--set",
        "sprite.0.size_h=3",
        "--set",
        "sprite.0.vel_x=0.3",
    ])
    .unwrap();
    assert_eq!(cfg.scene.sprites.len(), 1);
    assert_eq!(cfg.scene.sprites[0].size, (4.0, 3.0));
    assert!(resolve_args(["loomflow", "sim", "--out", "x", "--set", "sprite.0.colour=1"]).is_err());
}

fn loomflow(args: &[&str], dir: &Path, threads_env: Option<&str>) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_loomflow"));
    c.args(args).current_dir(dir).env_remove("THREADS");
    if let Some(t) = threads_env {
        c.env("THREADS", t);
    }
    c.output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn threads_environment_has_lowest_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let small = ["--width", "48", "--height", "40", "--frames", "2"];
    let sim = |extra: &[&str], env| {
        let mut args = vec!["sim", "--out", "f"];
        args.extend_from_slice(&small);
        args.extend_from_slice(extra);
        loomflow(&args, dir.path(), env)
    };
    assert_eq!(sim(&[], Some("bogus")).status.code(), Some(2));
    std::fs::write(dir.path().join("t.cfg"), "threads=2\n").unwrap();
    assert_eq!(sim(&["--config", "t.cfg"], Some("bogus")).status.code(), Some(0));
    assert_eq!(sim(&["--threads", "1"], Some("bogus")).status.code(), Some(0));
    assert_eq!(sim(&[], Some("4")).status.code(), Some(0));
}

#[test]
fn sim_then_pipeline_produces_every_pair() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = loomflow(&["sim", "--out", "frames", "--frames", "5", "--truth"], d, None);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = loomflow(&["pipeline", "frames", "--out", "out"], d, None);
    assert!(o.status.success(), "{}", stderr(&o));
    for i in 0..4 {
        for name in [
            format!("flow_{i:06}.flo"),
            format!("ratio_{i:06}.lmap"),
            format!("viz_{i:06}.ppm"),
            format!("mask_{i:06}.pgm"),
        ] {
            assert!(d.join("out").join(&name).is_file(), "{name}");
        }
    }
    let log = std::fs::read_to_string(d.join("out/run.log")).unwrap();
    assert!(log.contains("plane_depth=40"));
    assert_eq!(log.lines().filter(|l| l.starts_with("pair ")).count(), 4);

    let o = loomflow(&["foe", "frames/truth/flow_000000.flo"], d, None);
    assert!(o.status.success());
    let line = String::from_utf8(o.stdout).unwrap();
    let fields: Vec<f64> = line.split_whitespace().map(|v| v.parse().unwrap()).collect();
    assert_eq!(fields.len(), 4);
    assert!((fields[0] - 160.0).abs() < 1e-6 && (fields[1] - 120.0).abs() < 1e-6);

    let o = loomflow(&["transform", "out/flow_000000.flo", "-o", "r.lmap", "--mode", "angular"], d, None);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = loomflow(&["viz", "r.lmap", "-o", "r.ppm", "--mode", "pixel"], d, None);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("mode mismatch"));
    let o = loomflow(&["viz", "r.lmap", "-o", "r.ppm"], d, None);
    assert!(o.status.success());

    let o = loomflow(&["detect", "frames/truth/flow_000000.flo", "-o", "m.pgm"], d, None);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(String::from_utf8(o.stdout).unwrap().trim(), "0");
}

#[test]
fn empty_input_directory_fails_at_ingestion() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("empty")).unwrap();
    let o = loomflow(&["pipeline", "empty", "--out", "out"], dir.path(), None);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("ingest"), "{}", stderr(&o));
    let o = loomflow(&["pipeline", "missing", "--out", "out"], dir.path(), None);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn static_camera_reports_degenerate_frames_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = loomflow(&["sim", "--out", "frames", "--frames", "4", "--vel-z", "0"], d, None);
    assert!(o.status.success());
    let o = loomflow(&["pipeline", "frames", "--out", "out"], d, None);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stderr(&o).matches("warning").count(), 3);
    let log = std::fs::read_to_string(d.join("out/run.log")).unwrap();
    assert_eq!(log.matches("detection skipped").count(), 3);
    assert!(!d.join("out/mask_000000.pgm").exists());
    assert!(d.join("out/flow_000000.flo").exists());

    let o = loomflow(&["foe", "out/flow_000000.flo"], d, None);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["nonsense"],
        vec!["sim"],
        vec!["sim", "--out", "x", "--poly-n", "4"],
        vec!["sim", "--out", "x", "--set", "unknown=1"],
        vec!["sim", "--out", "x", "--config", "missing.cfg"],
    ] {
        let o = loomflow(&args, dir.path(), None);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn corrupt_inputs_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.flo"), b"not a flow file").unwrap();
    let o = loomflow(&["foe", "bad.flo"], dir.path(), None);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("bad.flo"), "{}", stderr(&o));
}
