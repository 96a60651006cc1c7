use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hdsa::config::{RunConfig, Stage};
use hdsa::io::{read_table, write_table};
use hdsa::Pipeline;
use nalgebra::DMatrix;

const SMALL: &str = "mesh.n_nodes = 60\nsampler.samples = 5\nsampler.steps = 3\n";

fn hdsa(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_hdsa"));
    cmd.args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("run.cfg");
    fs::write(&path, format!("{SMALL}{extra}")).unwrap();
    path
}

fn run_ok(args: &[&str]) {
    let out = hdsa(args, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

/// Relative path → bytes for every artifact except the manifest.
fn artifacts(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "manifest.csv" {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

/// Manifest rows without the wall-time column.
fn manifest(dir: &Path) -> Vec<String> {
    fs::read_to_string(dir.join("manifest.csv"))
        .unwrap()
        .lines()
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            format!("{},{}", f[0], f[2])
        })
        .collect()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn optimize_rerun_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = out.to_str().unwrap();
    run_ok(&["run", "--out", o, "--stages", "optimize"]);
    let first = fs::read(out.join("z_tilde.csv")).unwrap();
    run_ok(&["run", "--out", o, "--stages", "optimize"]);
    assert_eq!(fs::read(out.join("z_tilde.csv")).unwrap(), first);
    assert_eq!(fs::read_to_string(out.join("z_tilde.csv")).unwrap().lines().count(), 201);
}

#[test]
fn identical_config_and_seed_give_identical_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        run_ok(&["run", "--config", cfg.to_str().unwrap(), "--out", d.to_str().unwrap(), "--seed", "17"]);
    }
    assert_eq!(artifacts(&a), artifacts(&b));
    assert_eq!(manifest(&a), manifest(&b));
    assert_eq!(manifest(&a).len(), 6);

    let c = tmp.path().join("c");
    run_ok(&["run", "--config", cfg.to_str().unwrap(), "--out", c.to_str().unwrap(), "--seed", "18"]);
    let samples = |d: &Path| fs::read(d.join("prior_samples.csv")).unwrap();
    assert_ne!(samples(&a), samples(&c));
    assert_eq!(fs::read(a.join("z_bar.csv")).unwrap(), fs::read(c.join("z_bar.csv")).unwrap());
}

#[test]
fn downstream_stages_rebuild_from_intermediates() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let out = tmp.path().join("out");
    let (c, o) = (cfg.to_str().unwrap(), out.to_str().unwrap());
    run_ok(&["run", "--config", c, "--out", o]);
    let before = artifacts(&out);
    fs::remove_dir_all(out.join("posterior")).unwrap();
    for f in ["z_bar.csv", "update.json", "report.json", "z_star.csv", "delta_fit.csv", "calibrate.json"] {
        fs::remove_file(out.join(f)).unwrap();
    }
    run_ok(&["run", "--config", c, "--out", o, "--stages", "calibrate,update,report"]);
    assert_eq!(artifacts(&out), before);

    fs::remove_file(out.join("report.json")).unwrap();
    run_ok(&["report", "--config", c, "--out", o]);
    assert_eq!(artifacts(&out), before);
}

#[test]
fn report_contents() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    run_ok(&["run", "--out", out.to_str().unwrap(), "--stages", "optimize,calibrate,update,report"]);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let ratio = report["improvement_ratio"].as_f64().unwrap();
    assert!(ratio < 1.0, "{ratio}");
    assert_eq!(report["parameters"]["prior"]["alpha"], 0.01);
    assert_eq!(report["objectives"].as_array().unwrap().len(), 3);
    let z_bar = read_table(&out.join("z_bar.csv")).unwrap();
    assert_eq!(z_bar.names, ["z_tilde", "b_theta", "z_bar"]);
    assert!(!out.join("prior_samples.csv").exists());
}

#[test]
fn manufactured_files_feed_a_file_driven_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let a = tmp.path().join("a");
    run_ok(&["manufacture-data", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap()]);
    assert!(a.join("data/Z.csv").exists() && a.join("data/Y.csv").exists());
    run_ok(&["run", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap(), "--stages", "calibrate,update"]);

    let files_cfg = write_config(
        tmp.path(),
        &format!(
            "data.source = files\ndata.z_path = {}\ndata.y_path = {}\n",
            a.join("data/Z.csv").display(),
            a.join("data/Y.csv").display()
        ),
    );
    let b = tmp.path().join("b");
    run_ok(&["run", "--config", files_cfg.to_str().unwrap(), "--out", b.to_str().unwrap(), "--stages", "optimize,calibrate,update"]);
    assert_eq!(fs::read(a.join("z_bar.csv")).unwrap(), fs::read(b.join("z_bar.csv")).unwrap());
}

#[test]
fn invalid_config_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let res = hdsa(&["run", "--out", out.to_str().unwrap()], &[("PRIOR_ALPHA", "-1")]);
    assert_eq!(code(&res), 2);
    let err = stderr(&res);
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("hdsa: error kind=config code=2 "), "{err}");
    assert!(!out.exists());

    let cfg = write_config(tmp.path(), "prior.alpha = -1\n");
    let res = hdsa(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], &[]);
    assert_eq!(code(&res), 2);
    assert!(!out.exists());

    assert_eq!(code(&hdsa(&["run", "--stages", "optimize,polish"], &[])), 2);
    assert_eq!(code(&hdsa(&["frobnicate"], &[])), 2);
}

#[test]
fn environment_overrides_file_and_flags_override_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "run.seed = 1\nprior.gamma = 3\n");
    let out = tmp.path().join("out");
    let res = hdsa(
        &["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "5", "--stages", "optimize"],
        &[("PRIOR_GAMMA", "4"), ("RUN_SEED", "9")],
    );
    assert!(res.status.success());
    let loaded = RunConfig::load(
        Some(&cfg),
        |k| match k {
            "PRIOR_GAMMA" => Some("4".into()),
            "RUN_SEED" => Some("9".into()),
            _ => None,
        },
        &hdsa::config::CliOverrides {
            seed: Some(5),
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!((loaded.prior.gamma, loaded.seed), (4.0, 5));
}

#[test]
fn missing_upstream_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let res = hdsa(&["run", "--out", out.to_str().unwrap(), "--stages", "update"], &[]);
    assert_eq!(code(&res), 3);
    assert!(stderr(&res).contains("kind=missing-input"));
    assert!(stderr(&res).contains("z_tilde.csv"));
}

#[test]
fn data_file_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_small = write_config(tmp.path(), "");
    let out = tmp.path().join("out");
    run_ok(&["manufacture-data", "--config", cfg_small.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let data = out.join("data");
    let z = read_table(&data.join("Z.csv")).unwrap();

    // Y with the wrong number of state rows
    let x: Vec<f64> = (0..59).map(|i| i as f64 / 58.0).collect();
    write_table(&data.join("Ybad.csv"), &x, &["y_1".into(), "y_2".into()], &DMatrix::zeros(59, 2)).unwrap();
    // duplicated control
    let dup = DMatrix::from_fn(60, 2, |i, _| z.values[(i, 0)]);
    write_table(&data.join("Zdup.csv"), &z.x, &z.names, &dup).unwrap();
    fs::write(data.join("Zjunk.csv"), "x,z_1\n0,abc\n").unwrap();

    let run = |zf: &str, yf: &str| {
        let cfg = tmp.path().join(format!("{zf}-{yf}.cfg"));
        fs::write(
            &cfg,
            format!(
                "{SMALL}data.source = files\ndata.z_path = {}\ndata.y_path = {}\n",
                data.join(zf).display(),
                data.join(yf).display()
            ),
        )
        .unwrap();
        hdsa(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--stages", "calibrate"], &[])
    };
    let res = run("Z.csv", "Ybad.csv");
    assert_eq!(code(&res), 6);
    assert!(stderr(&res).contains("expected 60, got 59"), "{}", stderr(&res));
    assert_eq!(code(&run("Zdup.csv", "Y.csv")), 4);
    assert_eq!(code(&run("Zjunk.csv", "Y.csv")), 6);
    assert_eq!(code(&run("Znone.csv", "Y.csv")), 3);
}

#[test]
fn library_pipeline_matches_binary() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = write_config(tmp.path(), "");
    let a = tmp.path().join("a");
    run_ok(&["run", "--config", cfg_path.to_str().unwrap(), "--out", a.to_str().unwrap()]);
    let mut entries = hdsa::config::parse_entries(&fs::read_to_string(&cfg_path).unwrap()).unwrap();
    entries.push(("run.out_dir".into(), tmp.path().join("b").display().to_string()));
    let pipeline = Pipeline::new(RunConfig::from_entries(&entries).unwrap()).unwrap();
    let records = pipeline.run().unwrap();
    let stages: Vec<Stage> = records.iter().map(|r| r.stage).collect();
    assert_eq!(
        stages,
        [Stage::Optimize, Stage::SamplePrior, Stage::Calibrate, Stage::Update, Stage::Report]
    );
    assert_eq!(artifacts(&a), artifacts(&tmp.path().join("b")));
}

#[test]
fn oracle_check_subcommand() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    run_ok(&["oracle-check", "--out", out.to_str().unwrap()]);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("oracle_check.json")).unwrap()).unwrap();
    assert_eq!(v["passed"], true);
    assert_eq!(v["fixtures"], 12);
}
