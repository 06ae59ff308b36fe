mod common;

use std::fs;

use common::{decay_trace, nutation_trace, run, stdout, write_decay_dir};
use qudit_cli::ingest::ingest_trace_dir;
use qudit_cli::run::exit;

fn read_output(dir: &std::path::Path, prefix: &str) -> String {
    let mut hits: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.file_name().unwrap().to_string_lossy().starts_with(prefix))
        .collect();
    assert_eq!(hits.len(), 1, "{prefix}: {hits:?}");
    fs::read_to_string(hits.pop().unwrap()).unwrap()
}

#[test]
fn universality_verdicts() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&["universality", "--preset", "gd2"], out.path());
    assert_eq!(o.status.code(), Some(exit::OK));
    assert_eq!(stdout(&o), "universal=true components=1");
    let o = run(&["universality", "--preset", "gd2", "--set", "J_K=0"], out.path());
    assert!(stdout(&o).starts_with("universal=false"));
}

#[test]
fn kramers_levels() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&["levels", "--preset", "lagd", "--set", "B_T=0"], out.path());
    assert_eq!(o.status.code(), Some(exit::OK));
    let text = read_output(out.path(), "levels_lagd_");
    let e: Vec<f64> = text.lines().filter(|l| !l.starts_with('#')).skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(e.len(), 8);
    for pair in e.chunks(2) {
        assert!((pair[0] - pair[1]).abs() < 1e-9);
    }
    assert!(e[2] - e[1] > 1.0);
}

#[test]
fn outputs_carry_hash_and_version() {
    let out = tempfile::tempdir().unwrap();
    run(&["rabi-map", "--preset", "gdlu"], out.path());
    let text = read_output(out.path(), "rabi-map_gdlu_");
    let hash_line = text.lines().find(|l| l.starts_with("# config_hash=")).unwrap();
    let hash = hash_line.trim_start_matches("# config_hash=");
    assert_eq!(hash.len(), 64);
    assert!(text.contains(&format!("# version={}", env!("CARGO_PKG_VERSION"))));
    let name = fs::read_dir(out.path()).unwrap().next().unwrap().unwrap().file_name();
    assert_eq!(name.to_string_lossy(), format!("rabi-map_gdlu_{}.csv", &hash[..12]));
}

#[test]
fn thread_count_does_not_change_results() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["chi", "--preset", "gd2", "--set", "ensemble.n_orientations=40", "--set", "thermal.n_points=30"];
    let mut cmd = common::qudit();
    assert!(cmd.args(args).arg("--out").arg(a.path()).arg("--threads").arg("1").output().unwrap().status.success());
    let mut cmd = common::qudit();
    assert!(cmd.args(args).arg("--out").arg(b.path()).arg("--threads").arg("3").output().unwrap().status.success());
    let parse = |t: String| -> Vec<f64> {
        t.lines().filter(|l| !l.starts_with('#')).skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect()
    };
    let x = parse(read_output(a.path(), "chi_"));
    let y = parse(read_output(b.path(), "chi_"));
    for (p, q) in x.iter().zip(&y) {
        assert!((p - q).abs() <= 1e-10 * p.abs().max(1.0));
    }
}

#[test]
fn config_errors_exit_with_config_code() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&["levels", "--preset", "gd2", "--set", "system.site1.D=0.1"], out.path());
    assert_eq!(o.status.code(), Some(exit::CONFIG));
    assert!(String::from_utf8_lossy(&o.stderr).contains("system.site1.D"));
    let o = run(&["levels", "--preset", "nosuch"], out.path());
    assert_eq!(o.status.code(), Some(exit::CONFIG));
}

#[test]
fn config_file_is_accepted() {
    let out = tempfile::tempdir().unwrap();
    let cfg = out.path().join("run.toml");
    fs::write(&cfg, qudit_cli::presets::text("lagd").unwrap()).unwrap();
    let o = run(&["levels", "--config", cfg.to_str().unwrap(), "--set", "B_T=0"], out.path());
    assert_eq!(o.status.code(), Some(exit::OK), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn ingest_sorts_by_field() {
    let dir = tempfile::tempdir().unwrap();
    write_decay_dir(dir.path(), 12);
    let report = ingest_trace_dir(dir.path()).unwrap();
    assert_eq!(report.traces.len(), 12);
    assert!(report.failures.is_empty());
    assert!(report.traces.windows(2).all(|w| w[0].1.field < w[1].1.field));
}

#[test]
fn empty_dir_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(ingest_trace_dir(dir.path()).is_err());
    let out = tempfile::tempdir().unwrap();
    let o = run(&["fit-decay", dir.path().to_str().unwrap()], out.path());
    assert_eq!(o.status.code(), Some(exit::MISSING_DATA));
    let o = run(&["fit-decay", "/nonexistent/trace.csv"], out.path());
    assert_eq!(o.status.code(), Some(exit::MISSING_DATA));
}

#[test]
fn corrupt_file_gives_partial_result() {
    let dir = tempfile::tempdir().unwrap();
    let files = write_decay_dir(dir.path(), 12);
    fs::write(&files[3], "t_us,amplitude\nnot,numbers\n").unwrap();
    let report = ingest_trace_dir(dir.path()).unwrap();
    assert_eq!(report.traces.len(), 11);
    assert_eq!(report.failures.len(), 1);
    assert_eq!(report.failures[0].0, files[3]);

    let out = tempfile::tempdir().unwrap();
    let o = run(&["fit-decay", dir.path().to_str().unwrap(), "--preset", "gd2"], out.path());
    assert_eq!(o.status.code(), Some(exit::PARTIAL));
    assert!(stdout(&o).starts_with("fitted=11"));
    assert!(String::from_utf8_lossy(&o.stderr).contains("trace_03.csv"));
    let report_csv = read_output(out.path(), "fit-decay_gd2_");
    assert_eq!(report_csv.lines().filter(|l| l.starts_with("trace_")).count(), 11);
}

#[test]
fn non_ascending_file_rejected_with_row() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = decay_trace(350.0, 0.0, 0).to_csv();
    // swap two data rows: lines 4 and 5 are the first two samples
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines.swap(3, 4);
    text = lines.join("\n");
    fs::write(dir.path().join("bad.csv"), text).unwrap();
    fs::write(dir.path().join("good.csv"), decay_trace(400.0, 0.0, 0).to_csv()).unwrap();
    let report = ingest_trace_dir(dir.path()).unwrap();
    assert_eq!(report.traces.len(), 1);
    assert!(report.failures[0].1.contains("row 5"), "{}", report.failures[0].1);
}

#[test]
fn malformed_single_file_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.csv");
    fs::write(&path, "garbage").unwrap();
    let o = run(&["nutation", path.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(exit::MALFORMED_DATA));
}

#[test]
fn nutation_reports_labels() {
    let dir = tempfile::tempdir().unwrap();
    let tr = nutation_trace(&[(12.0, 1.0), (2.524, 0.5), (17.46, 0.4)], 400, 0.004, 410.0);
    let path = dir.path().join("nut.csv");
    fs::write(&path, tr.to_csv()).unwrap();
    let out = tempfile::tempdir().unwrap();
    let o = run(&["nutation", path.to_str().unwrap(), "--preset", "gd2"], out.path());
    assert_eq!(o.status.code(), Some(exit::OK));
    assert_eq!(stdout(&o), "traces=1 peaks=3 ambiguous=1 failed=0");
    let peaks = read_output(out.path(), "nutation_gd2_");
    assert!(peaks.contains(",rabi,") && peaks.contains(",two_x_larmor_N,") && peaks.contains(",larmor_H,larmor_H;rabi,"));
    read_output(out.path(), "nutation-spectrum_gd2_");
}
