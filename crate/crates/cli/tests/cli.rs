use std::path::Path;
use std::process::{Command, Output};

use mchom::experiments::{read_csv, RunManifest, CSV_HEADER};

fn mchom(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mchom"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env_remove("MCHOM_THREADS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL: &[&str] = &["--case", "0", "--M", "4", "--layers", "2"];

fn with(base: &[&'static str], extra: &[&'static str]) -> Vec<&'static str> {
    base.iter().chain(extra).copied().collect()
}

#[test]
fn run_case_appends_csv_row_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = mchom(dir.path(), &with(&["run-case"], SMALL));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), CSV_HEADER);
    let rows = read_csv(&dir.path().join("results.csv")).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].case, 0);
    assert_eq!(rows[0].l, 2);
    assert_eq!(rows[0].e2.len(), 1);

    let tag = "case0_M4_n40_l2-0-1_mixed";
    for f in ["coarse.txt", "coarse.json", "errors.json", "manifest.json"] {
        assert!(dir.path().join(format!("{tag}.{f}")).exists(), "missing {f}");
    }
    let m = RunManifest::load(&dir.path().join(format!("{tag}.manifest.json"))).unwrap();
    assert_eq!(m.command, "run-case");
    assert_eq!(m.config_hash.len(), 64);
    assert_eq!(m.row.as_ref().unwrap().deterministic_part(), rows[0].deterministic_part());
    let cfg = m.config().unwrap();
    assert_eq!(cfg.m, 4);
    assert_eq!(cfg.hash(), m.config_hash);
    assert!(m.outputs.iter().all(|p| p.exists()));

    // A second run appends without repeating the header.
    let again = mchom(dir.path(), &with(&["run-case"], SMALL));
    assert_eq!(code(&again), 0);
    let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| *l == CSV_HEADER).count(), 1);
    let rows2 = read_csv(&dir.path().join("results.csv")).unwrap();
    assert_eq!(rows2[0].deterministic_part(), rows2[1].deterministic_part());
}

#[test]
fn sweep_writes_one_row_per_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let out = mchom(dir.path(), &["sweep", "--case", "0", "--layers", "2", "--pairs", "4,5"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_csv(&dir.path().join("results.csv")).unwrap();
    assert_eq!(rows.len(), 2);
    assert!((rows[0].h - 0.25).abs() < 1e-12 && (rows[1].h - 0.2).abs() < 1e-12);
    assert!(stdout(&out).contains("over the sweep"));
}

#[test]
fn cells_dump_decay_emits_json_lines() {
    let dir = tempfile::tempdir().unwrap();
    let out = mchom(dir.path(), &with(&["cells", "--block", "1,2", "--dump-decay", "--decay-layers", "1,2"], SMALL));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let records: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    // Five mixed columns for one continuum, at two widths.
    assert_eq!(records.len(), 10);
    for r in &records {
        assert_eq!(r["block"], serde_json::json!([1, 2]));
        assert!(r["ratio"].as_f64().unwrap() >= 0.0);
    }
    let ls: Vec<u64> = records.iter().map(|r| r["l"].as_u64().unwrap()).collect();
    assert!(ls.contains(&1) && ls.contains(&2));
    let file = std::fs::read_to_string(dir.path().join("case0_M4_n40_l2-0-1_mixed.decay.jsonl")).unwrap();
    assert_eq!(file, text);
}

#[test]
fn upscale_then_solve_coarse_matches_run_case() {
    let dir = tempfile::tempdir().unwrap();
    let tag = "case0_M4_n40_l2-0-1_mixed";
    assert_eq!(code(&mchom(dir.path(), &with(&["run-case"], SMALL))), 0);
    let direct = std::fs::read_to_string(dir.path().join(format!("{tag}.coarse.txt"))).unwrap();
    std::fs::remove_file(dir.path().join(format!("{tag}.coarse.txt"))).unwrap();

    assert_eq!(code(&mchom(dir.path(), &with(&["upscale"], SMALL))), 0);
    let tensors = dir.path().join(format!("{tag}.tensors.json"));
    assert!(tensors.exists());
    let t = tensors.to_str().unwrap().to_string();
    let args: Vec<&str> = with(&["solve-coarse"], SMALL).into_iter().chain(["--tensors", t.as_str()]).collect();
    assert_eq!(code(&mchom(dir.path(), &args)), 0);
    let table = std::fs::read_to_string(dir.path().join(format!("{tag}.coarse.txt"))).unwrap();
    assert_eq!(table, direct);
    assert_eq!(table.lines().count(), 16);
}

#[test]
fn solve_fine_dumps_fields_and_raster() {
    let dir = tempfile::tempdir().unwrap();
    let out = mchom(dir.path(), &with(&["solve-fine"], SMALL));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let tag = "case0_M4_n40_l2-0-1_mixed";
    let u = std::fs::read_to_string(dir.path().join(format!("{tag}.fine_u.txt"))).unwrap();
    assert_eq!(u.lines().count(), 1600);
    assert!(u.lines().all(|l| l.split_whitespace().count() == 3));
    let v = std::fs::read_to_string(dir.path().join(format!("{tag}.fine_v.txt"))).unwrap();
    assert!(v.lines().all(|l| l.split_whitespace().count() == 4));
    let raster = std::fs::read_to_string(dir.path().join(format!("{tag}.raster.txt"))).unwrap();
    assert_eq!(raster.lines().next().unwrap(), "mchom-raster v1, 40 40");
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# small homogeneous run\ncase = 0\nM = 5\nl = 3\nl_v = 1\nl_i = 2\n").unwrap();
    let c = cfg.to_str().unwrap();
    let out = mchom(dir.path(), &["run-case", "--config", c, "--M", "4", "--set", "l=2"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let m = RunManifest::load(&dir.path().join("case0_M4_n40_l2-0-1_mixed.manifest.json")).unwrap();
    let cfg = m.config().unwrap();
    assert_eq!(cfg.m, 4);
    assert_eq!((cfg.layers.l, cfg.layers.l_v, cfg.layers.l_i), (2, 0, 1));
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&mchom(dir.path(), &["run-case", "--set", "bogus=1"])), 2);
    assert_eq!(code(&mchom(dir.path(), &["run-case", "--M", "3", "--eps", "0.13"])), 2);
    assert_eq!(code(&mchom(dir.path(), &["run-case", "--no-such-flag"])), 2);
    assert_eq!(code(&mchom(dir.path(), &with(&["run-case", "--threads", "0"], SMALL))), 2);
    assert_eq!(code(&mchom(dir.path(), &with(&["cells", "--block", "9,9"], SMALL))), 2);
    let help = Command::new(env!("CARGO_BIN_EXE_mchom")).arg("--help").output().unwrap();
    assert_eq!(code(&help), 0);
}

#[test]
fn missing_files_exit_with_four() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.cfg");
    let m = missing.to_str().unwrap();
    assert_eq!(code(&mchom(dir.path(), &["run-case", "--config", m])), 4);
    let args: Vec<&str> = with(&["solve-coarse"], SMALL).into_iter().chain(["--tensors", m]).collect();
    assert_eq!(code(&mchom(dir.path(), &args)), 4);
}

#[test]
fn singular_tensors_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let blocks: Vec<serde_json::Value> = (0..4)
        .map(|k| {
            serde_json::json!({
                "block": [k % 2, k / 2],
                "c": [0.0],
                "alpha": [[1.0]],
                "b": [1.0],
                "fraction": [1.0]
            })
        })
        .collect();
    let file = dir.path().join("t.json");
    std::fs::write(&file, serde_json::json!({ "path": "zero_order", "blocks": blocks }).to_string()).unwrap();
    let f = file.to_str().unwrap();
    let out = mchom(dir.path(), &["solve-coarse", "--case", "0", "--M", "2", "--path", "zero_order", "--tensors", f]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("coarse solve"));
}

#[test]
fn thread_count_does_not_change_results() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(code(&mchom(a.path(), &with(&["run-case", "--threads", "1", "--no-cache"], SMALL))), 0);
    let out = Command::new(env!("CARGO_BIN_EXE_mchom"))
        .args(with(&["run-case", "--no-cache"], SMALL))
        .arg("--out")
        .arg(b.path())
        .env("MCHOM_THREADS", "3")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let ra = read_csv(&a.path().join("results.csv")).unwrap();
    let rb = read_csv(&b.path().join("results.csv")).unwrap();
    assert_eq!(ra[0].deterministic_part(), rb[0].deterministic_part());
    let m = RunManifest::load(&b.path().join("case0_M4_n40_l2-0-1_mixed.manifest.json")).unwrap();
    assert_eq!(m.threads, Some(3));
}
