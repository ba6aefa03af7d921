use serde_json::Value;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn kawasaki(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kawasaki")).args(args).output().expect("binary runs")
}

fn run_config(dir: &Path, name: &str, text: &str) -> (Output, std::path::PathBuf) {
    let cfg = dir.join(format!("{name}.toml"));
    fs::write(&cfg, text).unwrap();
    let out = dir.join(name);
    let o = kawasaki(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--jobs", "2"]);
    (o, out)
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn stderr_report(o: &Output) -> Value {
    let text = String::from_utf8_lossy(&o.stderr);
    let line = text.lines().find(|l| l.starts_with('{')).expect("report line");
    serde_json::from_str(line).unwrap()
}

#[test]
fn validate_rates_for_ssep_passes_with_unit_lambda() {
    let tmp = tempfile::tempdir().unwrap();
    let (o, out) = run_config(tmp.path(), "v", "kind = \"validate-rates\"\n[rate]\nkind = \"ssep\"\n");
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["pass"], true);
    assert_eq!(m["invariants"][0]["detail"], "pass, λ=1");
}

#[test]
fn duality_writes_gap_table_and_summarizes() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "kind = \"duality\"\n[rate]\nkind = \"speed_change\"\na = 0.5\n[geometry]\nd = 1\nsides = [3, 5, 9]\n[density]\nvalues = [0.5]\n";
    let (o, out) = run_config(tmp.path(), "dual", text);
    assert_eq!(o.status.code(), Some(0));
    let mut reader = csv::Reader::from_path(out.join("duality.csv")).unwrap();
    assert_eq!(reader.headers().unwrap().iter().collect::<Vec<_>>(), ["L", "rho", "cbar", "cbar_star", "gap"]);
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 3);
    for r in &rows {
        assert!(r[4].parse::<f64>().unwrap() >= 0.0);
    }
    let records = json(&out.join("results.json"));
    let first = &records[0];
    for key in ["model", "rho", "L", "d", "quantity", "value", "residual"] {
        assert!(first.get(key).is_some(), "missing {key}");
    }
    let timings = json(&out.join("timings.json"));
    assert!(timings[0]["wallclock"].as_f64().unwrap() >= 0.0);
    let s = kawasaki(&["summarize", out.to_str().unwrap()]);
    assert_eq!(s.status.code(), Some(0));
    let text = String::from_utf8_lossy(&s.stdout);
    assert!(text.contains("gap") && text.contains("PASS"), "{text}");
}

#[test]
fn exact_suites_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "kind = \"corrector\"\n[rate]\nkind = \"cooperative\"\na = 1.0\n[geometry]\nsides = [5]\n[density]\nvalues = [0.3]\n";
    let (_, a) = run_config(tmp.path(), "a", text);
    let (_, b) = run_config(tmp.path(), "b", text);
    for f in ["results.json", "manifest.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn malformed_config_exits_2_with_position() {
    let tmp = tempfile::tempdir().unwrap();
    let (o, _) = run_config(tmp.path(), "bad", "kind = \"duality\"\n[rate\nkind = \"ssep\"\n");
    assert_eq!(o.status.code(), Some(2));
    let r = stderr_report(&o);
    assert_eq!(r["error"], "parse");
    assert_eq!(r["line"], 2);
    assert!(r["column"].as_u64().unwrap() >= 1);
}

#[test]
fn missing_config_file_exits_2() {
    let o = kawasaki(&["run", "/nonexistent/config.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_key_and_bad_values_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    for (name, text) in [
        ("unknown", "kind = \"duality\"\nspeed = 2\n[rate]\nkind = \"ssep\"\n"),
        ("section", "kind = \"duality\"\n[rate]\nkind = \"ssep\"\n[extras]\nx = 1\n"),
        ("rho", "kind = \"duality\"\n[rate]\nkind = \"ssep\"\n[density]\nvalues = [1.5]\n"),
        ("kind", "kind = \"duality\"\n[rate]\nkind = \"glauber\"\n"),
        ("missing_a", "kind = \"duality\"\n[rate]\nkind = \"speed_change\"\n"),
        ("negative_a", "kind = \"duality\"\n[rate]\nkind = \"speed_change\"\na = -1.0\n"),
        ("disorder_needs_field", "kind = \"disorder\"\n[rate]\nkind = \"ssep\"\n"),
        ("too_big", "kind = \"conductivity\"\n[rate]\nkind = \"ssep\"\n[geometry]\nd = 2\nsides = [7]\n"),
    ] {
        let (o, _) = run_config(tmp.path(), name, text);
        assert_eq!(o.status.code(), Some(3), "{name}: {}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(stderr_report(&o)["error"], "validation", "{name}");
    }
}

#[test]
fn failed_assertion_exits_1_with_report() {
    // Two nearly equal sizes with a handful of replicas cannot show a
    // significant decrease.
    let tmp = tempfile::tempdir().unwrap();
    let text = "kind = \"hydro\"\nseed = 1\n[rate]\nkind = \"ssep\"\n[hydro]\nsizes = [16, 18]\nhorizon = 0.01\nreplicas = 4\ngrid = 32\nreference_side = 3\n";
    let (o, out) = run_config(tmp.path(), "weak", text);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stderr_report(&o)["error"], "assertion");
    let failures = json(&out.join("failures.json"));
    assert_eq!(failures[0]["name"], "sup_error_strictly_decreasing");
    let snap = fs::read_to_string(out.join("snapshots_N16.jsonl")).unwrap();
    let line: Value = serde_json::from_str(snap.lines().next().unwrap()).unwrap();
    assert!(line["t"].is_number() && line["modes"].is_array() && line["particle_count"].is_number());
    let mut reader = csv::Reader::from_path(out.join("hydro.csv")).unwrap();
    assert_eq!(
        reader.headers().unwrap().iter().collect::<Vec<_>>(),
        ["N", "t", "mean_sq_error", "stderr", "replicas", "alpha", "table_ref_L"]
    );
}

#[test]
fn hydro_is_reproducible_across_job_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "kind = \"hydro\"\nseed = 3\n[rate]\nkind = \"ssep\"\n[hydro]\nsizes = [16, 32]\nhorizon = 0.01\nreplicas = 8\ngrid = 32\nreference_side = 3\nrequire_decreasing = false\n";
    let cfg = tmp.path().join("h.toml");
    fs::write(&cfg, text).unwrap();
    let mut outs = Vec::new();
    for jobs in ["1", "3"] {
        let out = tmp.path().join(format!("h{jobs}"));
        let o = kawasaki(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--jobs", jobs]);
        assert_eq!(o.status.code(), Some(0));
        outs.push(fs::read(out.join("hydro.csv")).unwrap());
    }
    assert_eq!(outs[0], outs[1]);
}

#[test]
fn summarize_without_artifacts_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let o = kawasaki(&["summarize", tmp.path().to_str().unwrap()]);
    assert_ne!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no artifacts"));
}

#[test]
fn every_experiment_kind_runs() {
    let tmp = tempfile::tempdir().unwrap();
    for (name, text) in [
        ("conductivity", "kind = \"conductivity\"\n[rate]\nkind = \"cooperative\"\na = 1.0\n[geometry]\nsides = [5]\n[density]\nvalues = [0.25, 0.75]\n"),
        ("clt", "kind = \"clt\"\n[rate]\nkind = \"speed_change\"\na = 0.5\n[geometry]\nsides = [3]\n[clt]\nexteriors = 2\n"),
        ("lifting", "kind = \"lifting\"\n[rate]\nkind = \"ssep\"\n[lifting]\nfunctions = 2\nsites = 2\n"),
        ("disorder", "kind = \"disorder\"\n[rate]\nkind = \"disordered\"\na_max = 0.5\n[disorder]\nsamples = 8\nlevels = [0, 1]\n"),
        ("suite", "kind = \"inequality-suite\"\nseed = 5\n[rate]\nkind = \"ssep\"\n[suite]\ncases = 20\n"),
        ("triadic", "kind = \"duality\"\n[rate]\nkind = \"speed_change\"\na = 0.5\n[geometry]\ntriadic = [0, 1]\n"),
    ] {
        let (o, out) = run_config(tmp.path(), name, text);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(json(&out.join("manifest.json"))["pass"], true, "{name}");
    }
}
