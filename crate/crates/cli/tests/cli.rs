use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tracelab"))
}

fn config(name: &str) -> PathBuf {
    [env!("CARGO_MANIFEST_DIR"), "..", "..", "configs", name].iter().collect()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("tracelab-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    dir
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn minimax_demo_prints_the_gap() {
    let o = run(&["minimax-demo"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("sup_inf=1 inf_sup=4 y*=0"), "{}", stdout(&o));
}

#[test]
fn halfline_run_reports_the_convex_boundary() {
    let out = scratch("halfline");
    let o = run(&["run", "--config", config("halfline.json").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["schema"], 1);
    assert!(r["notes"][0].as_str().unwrap().starts_with("convex boundary"));
    assert!(out.join("summary.csv").exists() && out.join("minimizers.csv").exists());
    assert!(!out.join("plot.svg").exists());
    fs::remove_dir_all(out).unwrap();
}

#[test]
fn counterexample_subcommand() {
    let o = run(&["counterexample", "halfline", "--gammas=-1,0.5,3"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("halfline verdict=true"));
}

#[test]
fn small_mu_is_a_precondition_error() {
    let out = scratch("small-mu");
    let o = run(&[
        "verify",
        "2.7",
        "--config",
        config("theorem_2_7_small_mu.json").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("precondition violated"));
    assert!(!out.exists());
}

#[test]
fn verify_checks_the_selected_pipeline() {
    let o = run(&["verify", "1.1", "--config", config("halfline.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("different pipeline"));
}

#[test]
fn grid_oracle_prints_the_argmin() {
    let o = run(&["grid-oracle", "--config", config("grid_oracle_disk.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("argmin=[0.5,0.0]"), "{}", stdout(&o));
}

#[test]
fn search_eta_on_cos_two_theta() {
    let out = scratch("cos2");
    let o =
        run(&["search-eta", "--config", config("search_cos2.json").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let r = report(&out);
    let eta: Vec<f64> = serde_json::from_value(r["eta"].clone()).unwrap();
    assert!(eta.iter().all(|e| e.abs() < 1e-6), "{eta:?}");
    assert_eq!(r["details"]["eta_search"]["boundary_minima"].as_array().unwrap().len(), 2);
    assert!(fs::read_to_string(out.join("plot.svg")).unwrap().starts_with("<svg"));
    fs::remove_dir_all(out).unwrap();
}

#[test]
fn unresolvable_search_exits_with_two() {
    let out = scratch("not-found");
    let cfg = out.with_extension("json");
    fs::write(
        &cfg,
        r#"{"seed": 1, "body": {"type": "ball", "center": [0, 0], "radius": 1},
            "trace": {"type": "trig", "cos": [1.0]}, "search": {"sep_min": 3.0},
            "pipeline": {"type": "search_eta"}}"#,
    )
    .unwrap();
    let o = run(&["search-eta", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(report(&out)["status"], "not_found_at_resolution");
    fs::remove_dir_all(out).unwrap();
    fs::remove_file(cfg).unwrap();
}

#[test]
fn schema_violations_exit_with_one() {
    let cfg = scratch("bad").with_extension("json");
    fs::write(&cfg, r#"{"seed": 1, "pipeline": {"type": "halfline"}, "extra": true}"#).unwrap();
    let o = run(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown field"));
    fs::remove_file(cfg).unwrap();
}

#[test]
fn reports_are_byte_identical_across_runs_and_jobs() {
    let (a, b) = (scratch("det-a"), scratch("det-b"));
    let c = config("theorem_2_6_disk.json");
    let c = c.to_str().unwrap();
    assert_eq!(run(&["run", "--config", c, "--out", a.to_str().unwrap(), "--trace-iterates"]).status.code(), Some(0));
    assert_eq!(
        run(&["--jobs", "1", "run", "--config", c, "--out", b.to_str().unwrap(), "--trace-iterates"]).status.code(),
        Some(0)
    );
    for f in ["report.json", "summary.csv", "plot.svg", "iterates.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let s = run(&["run", "--config", c, "--out", b.to_str().unwrap(), "--seed", "99"]);
    assert_eq!(s.status.code(), Some(0));
    assert_ne!(report(&a)["inputs_digest"], report(&b)["inputs_digest"]);
    fs::remove_dir_all(a).unwrap();
    fs::remove_dir_all(b).unwrap();
}
