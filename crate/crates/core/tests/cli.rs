use std::fs;
use std::path::Path;
use std::process::Command;

use brw_lab::cli::{cmd_backward, cmd_boundary, cmd_classify, cmd_simulate, run};
use brw_lab::config::Config;
use brw_lab::report::RunReport;
use brw_lab::table::Table;

const BBM_15: &str = "[model]\nkind = bbm\nbbm_drift = -1.5\n";

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn args(list: &[&str]) -> Vec<String> {
    std::iter::once("brw-lab").chain(list.iter().copied()).map(String::from).collect()
}

#[test]
fn classify_examples() {
    let r = cmd_classify(&BBM_15.parse().unwrap()).unwrap();
    assert_eq!(r.get("root_1", "verdict"), Some("extinct"));
    assert_eq!(r.get("root_2", "verdict"), Some("persistent"));

    let r = cmd_classify(&"[model]\nkind = bbm\nbbm_drift = -1\n".parse().unwrap()).unwrap();
    assert_eq!(r.get("profile", "roots"), Some("[]"));
    assert!(r.notes.iter().any(|n| n.contains("no exponential equilibrium intensity")));

    let text = "[model]\nkind = iid\ncount = poisson\ncount_param = 0.5\ndisp = gaussian\ndisp_params = 0, 1\n";
    let r = cmd_classify(&text.parse().unwrap()).unwrap();
    assert_eq!(r.get("root_1", "verdict"), Some("persistent"));
    assert_eq!(r.get("root_2", "verdict"), Some("persistent"));

    let r = cmd_classify(&"[model]\nkind = bbm\nbbm_drift = -1.4142135623730951\n".parse().unwrap()).unwrap();
    assert_eq!(r.get("root_1", "verdict"), Some("inconclusive"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = write(dir.path(), "good.ini", BBM_15);
    let bad = write(dir.path(), "bad.ini", "[model]\nkind = bbm\nbbm_drift = -1.5\nspeed = 3\n");
    let one_sided = write(
        dir.path(),
        "one_sided.ini",
        "[model]\nkind = iid\ncount = fixed\ncount_param = 2\ndisp = atoms\ndisp_params = -1, 0.5, -2, 0.5\n",
    );
    let capped = write(
        dir.path(),
        "capped.ini",
        "[model]\nkind = iid\ncount = fixed\ncount_param = 3\ndisp = gaussian\ndisp_params = 0, 1\n[scenario]\nlambda = 3\nn_gens = 12\nobs_lo = -1\nobs_hi = 1\n[test]\nengine = forward\npopulation_cap = 1000\n",
    );
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    assert_eq!(run(args(&["classify", "--config", &good])), 0);
    assert_eq!(run(args(&["classify", "--config", &bad])), 2);
    assert_eq!(run(args(&["classify", "--config", "/nonexistent/x.ini"])), 2);
    assert_eq!(run(args(&["classify"])), 2);
    assert_eq!(run(args(&["frobnicate"])), 2);
    assert_eq!(run(args(&["classify", "--config", &one_sided])), 3);
    assert_eq!(run(args(&["simulate", "--config", &capped, "--out", out])), 4);
    assert_eq!(run(args(&["boundary", "--config", &good, "--out", out])), 2);
}

#[test]
fn binary_reports_exit_status() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.ini", "[model]\nkind = bbm\n");
    let st = Command::new(env!("CARGO_BIN_EXE_brw-lab")).args(["classify", "--config", &bad]).output().unwrap();
    assert_eq!(st.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&st.stderr).contains("bbm_drift"));
    let good = write(dir.path(), "good.ini", BBM_15);
    let st = Command::new(env!("CARGO_BIN_EXE_brw-lab")).args(["classify", "--config", &good]).output().unwrap();
    assert_eq!(st.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&st.stdout).contains("verdict = persistent"));
}

#[test]
fn frozen_simulation_rows_are_constant() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[model]\nkind = iid\ncount = fixed\ncount_param = 1\ndisp = atoms\ndisp_params = 0, 1\n[scenario]\nlambda = 1\nn_gens = 8\nobs_lo = -3\nobs_hi = 3\nreplicates = 4\n[test]\nbins = 6\n";
    let cfg: Config = text.parse().unwrap();
    let report = cmd_simulate(&cfg, dir.path()).unwrap();
    assert_eq!(report.get("scenario", "engine"), Some("forward"));
    let t = Table::parse(&fs::read_to_string(dir.path().join("generations.csv")).unwrap()).unwrap();
    assert_eq!(t.rows.len(), 4 * 9);
    for rep in t.rows.chunks(9) {
        for row in rep {
            assert_eq!(row[2..], rep[0][2..]);
        }
    }
    let echoed = RunReport::config_echo(&fs::read_to_string(dir.path().join("report.txt")).unwrap()).unwrap();
    assert_eq!(echoed, cfg);
    let csv = Table::parse(&fs::read_to_string(dir.path().join("report.csv")).unwrap()).unwrap();
    assert!(csv.rows.iter().all(|r| r[4] == cfg.seed.to_string() && r[5] == env!("CARGO_PKG_VERSION")));
}

#[test]
fn backward_frozen_and_bbm() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[model]\nkind = iid\ncount = fixed\ncount_param = 1\ndisp = atoms\ndisp_params = 0, 1\n[scenario]\nlambda = 1\n[test]\ndepth = 10\na = -1\nreps = 50\n";
    let r = cmd_backward(&text.parse().unwrap(), dir.path()).unwrap();
    assert_eq!(r.get("backward", "verdict"), Some("stable-consistent"));
    assert_eq!(r.get("backward", "hits_total"), Some("0"));
    let t = Table::parse(&fs::read_to_string(dir.path().join("backward.csv")).unwrap()).unwrap();
    assert_eq!(t.rows.len(), 500);
    assert!(t.rows.iter().all(|r| r[5] == "0"));
    let err = cmd_backward(&BBM_15.parse().unwrap(), dir.path()).unwrap_err();
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn boundary_refuses_other_drifts_unless_negative_control() {
    let dir = tempfile::tempdir().unwrap();
    let cfg: Config = format!("{BBM_15}[test]\nreps = 200\nn_list = 0, 2\n").parse().unwrap();
    assert_eq!(cmd_boundary(&cfg, dir.path(), false).unwrap_err().exit_code(), 2);
    let r = cmd_boundary(&cfg, dir.path(), true).unwrap();
    assert_eq!(r.get("n_0", "c_hat"), Some("1"));
}

#[test]
fn report_merge_concatenates() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.csv", "x,y\n1,2\n");
    let b = write(dir.path(), "b.csv", "x,y\n3,4\n");
    let c = write(dir.path(), "c.csv", "x,z\n3,4\n");
    let d = write(dir.path(), "d.csv", "x,y\n3\n");
    let out = dir.path().join("m");
    let o = out.to_str().unwrap();
    assert_eq!(run(args(&["report-merge", &a, &b, "--out", o])), 0);
    assert_eq!(fs::read_to_string(out.join("merged.csv")).unwrap(), "x,y\n1,2\n3,4\n");
    assert_eq!(run(args(&["report-merge", &a, &c, "--out", o])), 2);
    assert_eq!(run(args(&["report-merge", &a, &d, "--out", o])), 2);
}

#[test]
fn seed_override_and_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[model]\nkind = bbm\nbbm_drift = -1.5\n[scenario]\nn_gens = 3\nobs_lo = -1\nobs_hi = 2\nreplicates = 3\n[test]\nengine = windowed\nbins = 3\n";
    let cfg = write(dir.path(), "s.ini", text);
    let (o1, o2) = (dir.path().join("1"), dir.path().join("2"));
    assert_eq!(run(args(&["simulate", "--config", &cfg, "--out", o1.to_str().unwrap(), "--seed-override", "9", "--jobs", "1"])), 0);
    assert_eq!(run(args(&["simulate", "--config", &cfg, "--out", o2.to_str().unwrap(), "--seed-override", "9", "--jobs", "2"])), 0);
    let g1 = fs::read(o1.join("generations.csv")).unwrap();
    assert_eq!(g1, fs::read(o2.join("generations.csv")).unwrap());
    assert!(fs::read_to_string(o1.join("report.txt")).unwrap().contains("seed = 9"));
}
