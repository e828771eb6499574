use std::path::Path;
use std::process::{Command, Output};

fn cablenet(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cablenet"))
        .env_remove("CABLENET_OUTPUT_ROOT")
        .arg("--output-root")
        .arg(root)
        .args(args)
        .output()
        .unwrap()
}

fn text(o: &Output) -> String {
    format!(
        "{}{}",
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    )
}

#[test]
fn missing_scenario_file_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = cablenet(dir.path(), &["run", "missing.toml"]);
    assert_eq!(o.status.code(), Some(1), "{}", text(&o));
    assert!(text(&o).contains("file not found"), "{}", text(&o));
    let o = cablenet(dir.path(), &["run", "no_such_scenario"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn run_writes_trace_plot_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("tmt");
    let o = cablenet(dir.path(), &["run", "fig3_tmt_sim", "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    let parsed = cablenet::trace::parse_trace(&trace).unwrap();
    assert_eq!(parsed.header.get("scenario"), Some("fig3_tmt_sim"));
    assert!(!parsed.rows.is_empty());
    assert!(std::fs::read_to_string(out.join("g.svg")).unwrap().contains("<svg"));
    let summary = std::fs::read_to_string(out.join("summary.toml")).unwrap();
    assert!(summary.contains("final_g"), "{summary}");
}

#[test]
fn same_seed_gives_identical_traces() {
    let dir = tempfile::tempdir().unwrap();
    let read = |sub: &str| {
        let out = dir.path().join(sub);
        let o = cablenet(
            dir.path(),
            &["run", "fig3_cpa_sim", "--seed", "3", "-o", out.to_str().unwrap()],
        );
        assert!(o.status.success(), "{}", text(&o));
        let parsed = cablenet::trace::parse_trace(&std::fs::read_to_string(out.join("trace.csv")).unwrap()).unwrap();
        (parsed.header.get("hash").unwrap().to_string(), parsed.rows)
    };
    assert_eq!(read("a"), read("b"));
}

#[test]
fn unmet_target_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = cablenet(
        dir.path(),
        &["run", "fig2_cpa", "--seed", "3", "--max-iterations", "20"],
    );
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));
    assert!(dir.path().join("fig2_cpa/seed-3/trace.csv").exists());
}

#[test]
fn output_root_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_cablenet"))
        .env("CABLENET_OUTPUT_ROOT", dir.path())
        .args(["run", "fig3_invis_sim"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", text(&o));
    assert!(dir.path().join("fig3_invis_sim/seed-1/trace.csv").exists());
}

#[test]
fn check_grad_reports_small_error() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["fig2_cpa", "fig3_tmt_sim"] {
        let o = cablenet(dir.path(), &["check-grad", name]);
        assert_eq!(o.status.code(), Some(0), "{}", text(&o));
        assert!(text(&o).contains("max relative error"), "{}", text(&o));
    }
}

#[test]
fn batch_writes_one_directory_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let o = cablenet(
        dir.path(),
        &["batch", "fig3_tmt_sim", "fig3_cpa_sim", "--seeds", "1,2,5"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    for name in ["fig3_tmt_sim", "fig3_cpa_sim"] {
        for seed in [1, 2, 5] {
            assert!(dir.path().join(format!("{name}/seed-{seed}/trace.csv")).exists());
        }
    }
    let o = cablenet(dir.path(), &["batch", "fig3_tmt_sim", "--seeds", "2..1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn emit_plot_renders_an_existing_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert!(
        cablenet(dir.path(), &["run", "fig3_tmt_sim", "-o", out.to_str().unwrap()])
            .status
            .success()
    );
    let svg = dir.path().join("plot.svg");
    let o = cablenet(
        dir.path(),
        &[
            "emit-plot",
            out.join("trace.csv").to_str().unwrap(),
            "-o",
            svg.to_str().unwrap(),
        ],
    );
    assert!(o.status.success(), "{}", text(&o));
    assert!(std::fs::read_to_string(svg).unwrap().contains("polyline"));
    let o = cablenet(
        dir.path(),
        &["emit-plot", dir.path().join("none.csv").to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn list_names_all_bundled_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    let o = cablenet(dir.path(), &["list"]);
    assert!(o.status.success());
    for (name, _) in cablenet::scenario::BUNDLED {
        assert!(text(&o).contains(name));
    }
}
