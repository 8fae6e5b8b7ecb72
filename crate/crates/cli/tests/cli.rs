use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use agricaf::fixture::{write_fixture, DEFAULT_SEED};

fn agricaf(args: &[&str], config: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_agricaf"))
        .args(args)
        .arg("--config")
        .arg(config)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn forecast_before_screen_names_missing_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_fixture(dir.path(), DEFAULT_SEED).unwrap();
    let out = agricaf(&["forecast"], &cfg);
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
    assert!(stderr(&out).contains("screening.json"), "{}", stderr(&out));
}

#[test]
fn hard_violation_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_fixture(dir.path(), DEFAULT_SEED).unwrap();
    let prices = dir.path().join("prices.csv");
    let text = fs::read_to_string(&prices).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut fields: Vec<String> = lines[5].split(',').map(str::to_string).collect();
    fields[3] = "-12.5".into();
    lines[5] = fields.join(",");
    fs::write(&prices, lines.join("\n") + "\n").unwrap();

    let out = agricaf(&["validate"], &cfg);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("non-positive price"), "{}", stderr(&out));
    // the report is still written for inspection
    assert!(dir.path().join("out/validation.json").is_file());

    let out = agricaf(&["assemble"], &cfg);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn unparsable_input_is_a_validation_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_fixture(dir.path(), DEFAULT_SEED).unwrap();
    let regions = dir.path().join("regions.csv");
    fs::write(&regions, "country,region,valid_from,valid_to\nUSA,NAM,nineteen,2100\n").unwrap();
    let out = agricaf(&["validate"], &cfg);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("valid_from"), "{}", stderr(&out));
}

#[test]
fn usage_and_config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_fixture(dir.path(), DEFAULT_SEED).unwrap();
    assert_eq!(agricaf(&["train"], &cfg).status.code(), Some(1));
    assert_eq!(agricaf(&["validate", "--only-month", "13"], &cfg).status.code(), Some(1));
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"commodity": "maize", "inputs": {}, "colour": 1}"#).unwrap();
    assert_eq!(agricaf(&["validate"], &bad).status.code(), Some(1));
}

#[test]
fn single_cell_run_completes_every_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_fixture(dir.path(), DEFAULT_SEED).unwrap();
    let out = agricaf(&["all", "--only-month", "4", "--only-horizon", "1", "--jobs", "2"], &cfg);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    let out_dir = dir.path().join("out");
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["month"], 4);

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    for stage in ["validate", "assemble", "screen", "forecast", "explain", "report"] {
        let rec = &manifest["stages"][stage];
        assert_eq!(rec["completed"], true, "{stage}");
        for (file, digest) in rec["outputs"].as_object().unwrap() {
            let bytes = fs::read(out_dir.join(file)).unwrap();
            assert_eq!(digest.as_str().unwrap(), sha256_hex(&bytes), "{file}");
        }
    }
    // no temporary files are left behind
    for entry in fs::read_dir(&out_dir).unwrap() {
        let name = entry.unwrap().file_name();
        assert!(!name.to_string_lossy().ends_with(".tmp"), "{name:?}");
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}
