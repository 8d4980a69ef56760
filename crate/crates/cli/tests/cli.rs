use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kernel_rct::fisherkernel::FisherEmbedding;
use kernel_rct::gpmodel::{simulate, GpParams};
use kernel_rct::ingest::write_long_csv;
use kernel_rct::lmm::long_rows;
use serde_json::Value;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kernel-rct"))
        .args(args)
        .env("KERNEL_RCT_THREADS", "1")
        .output()
        .unwrap()
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

/// A small, fast configuration: a thin grid, one start and a short power grid.
fn write_config(dir: &Path, extra: Value) -> PathBuf {
    let mut cfg = serde_json::json!({
        "preprocess": { "thin": 15 },
        "fit": { "n_starts": 1 },
        "power": { "n_grid": [20, 40, 60, 80] },
        "folds": { "enabled": false },
        "synth": { "n_cn": 30, "n_mci": 8 },
    });
    for (k, v) in extra.as_object().unwrap() {
        cfg[k] = v.clone();
    }
    let path = dir.join("config.json");
    fs::write(&path, cfg.to_string()).unwrap();
    path
}

struct Fitted {
    dir: tempfile::TempDir,
    config: PathBuf,
    cohort: PathBuf,
}

impl Fitted {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

/// synth, fit and embed into one directory.
fn fitted() -> Fitted {
    let dir = tempfile::tempdir().unwrap();
    let params = dir.path().join("fit/params.json");
    let embedding = dir.path().join("embed/embedding.json");
    let config = write_config(dir.path(), serde_json::json!({ "params": params, "embedding": embedding }));
    let d = dir.path();
    run_ok(&["synth", "--config", s(&config), "--seed", "3", "--out", s(&d.join("synth"))]);
    let cohort = d.join("synth/cohort.csv");
    run_ok(&["fit", "--config", s(&config), "--input", s(&cohort), "--out", s(&d.join("fit"))]);
    run_ok(&["embed", "--config", s(&config), "--input", s(&cohort), "--out", s(&d.join("embed"))]);
    Fitted { dir, config, cohort }
}

fn long_csv(path: &Path, grid_of: &Path, identical: bool) {
    let emb = FisherEmbedding::from_json(&fs::read_to_string(grid_of).unwrap()).unwrap();
    let theta = GpParams::new(0.0, 1.0, 1.0, 0.0, 25.0, 1.0).unwrap();
    let t = simulate(&theta, emb.grid(), 12, 1).unwrap();
    let mut c = if identical { t.clone() } else { simulate(&theta, emb.grid(), 12, 2).unwrap() };
    for x in c.iter_mut() {
        x.subject_id = format!("c-{}", x.subject_id);
    }
    let mut buf = Vec::new();
    write_long_csv(&mut buf, &long_rows(&t, &c, emb.grid())).unwrap();
    fs::write(path, buf).unwrap();
}

#[test]
fn missing_input_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&["fit", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("input"));
    let out = bin(&["fit", "--input", s(&dir.path().join("nope.csv")), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_method_lists_the_valid_ones() {
    let out = bin(&["test", "--method", "t-test"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    for m in ["mmd", "kernel-hotelling", "hotelling-f", "lmm"] {
        assert!(err.contains(m), "{err}");
    }
}

#[test]
fn bad_flags_and_config_keys_exit_1() {
    assert_eq!(bin(&["fit", "--bogus"]).status.code(), Some(1));
    assert_eq!(bin(&["--version"]).status.code(), Some(0));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"alpah": 0.1}"#).unwrap();
    assert_eq!(bin(&["synth", "--config", s(&cfg)]).status.code(), Some(1));
}

#[test]
fn fit_embed_power_and_test() {
    let f = fitted();

    let params = json(&f.path("fit/params.json"));
    for k in ["mu", "sigma2", "alpha2", "beta", "rho2", "nu"] {
        assert!(params[k].as_f64().unwrap().is_finite(), "{k}");
    }
    assert!(params["fit"]["converged"].as_bool().unwrap());
    assert!(f.path("fit/exclusions.json").exists());
    assert!(f.path("fit/config.echo.json").exists());

    // Refitting gives the same bytes.
    run_ok(&["fit", "--config", s(&f.config), "--input", s(&f.cohort), "--out", s(&f.path("fit2"))]);
    assert_eq!(
        fs::read(f.path("fit/params.json")).unwrap(),
        fs::read(f.path("fit2/params.json")).unwrap()
    );

    let emb = f.path("embed/embedding.json");
    let power = |rho: &str, out: &str| {
        run_ok(&[
            "power", "--config", s(&f.config), "--input", s(&f.cohort), "--rho", rho,
            "--out", s(&f.path(out)),
        ]);
        json(&f.path(&format!("{out}/power_curve.json")))
    };

    let flat = power("1.0", "power1");
    let rows = flat["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    for r in rows {
        assert!((r["power"].as_f64().unwrap() - 0.05).abs() < 1e-12, "{r}");
    }

    let curve = power("0.4", "power");
    let csv = fs::read_to_string(f.path("power/power_curve.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "n_total,n_T,n_C,power");
    let rows = curve["rows"].as_array().unwrap();
    let parsed: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(parsed.len(), rows.len());
    let mut last = 0.0;
    for (p, r) in parsed.iter().zip(rows) {
        assert_eq!(p[0], r["n_total"].as_f64().unwrap());
        assert_eq!(p[1] + p[2], p[0]);
        assert_eq!(p[3], r["power"].as_f64().unwrap());
        assert!(p[3] >= last);
        last = p[3];
    }

    // Identical arms: nothing is rejected. The centred statistics go negative,
    // Hotelling-F is exactly zero.
    let same = f.path("same.csv");
    long_csv(&same, &emb, true);
    for m in ["hotelling-f", "mmd", "kernel-hotelling"] {
        let out = f.path(&format!("test-{m}"));
        run_ok(&["test", "--config", s(&f.config), "--input", s(&same), "--method", m, "--out", s(&out)]);
        let r = json(&out.join("test_result.json"));
        assert!(!r["reject"].as_bool().unwrap(), "{m}: {r}");
        assert!(r["p_value"].as_f64().unwrap() > 0.5, "{m}: {r}");
        if m == "hotelling-f" {
            assert!(r["statistic"].as_f64().unwrap().abs() < 1e-9, "{m}: {r}");
        }
    }

    let diff = f.path("diff.csv");
    long_csv(&diff, &emb, false);
    let out = f.path("test-lmm");
    run_ok(&["test", "--input", s(&diff), "--method", "lmm", "--out", s(&out)]);
    let r = json(&out.join("test_result.json"));
    assert_eq!(r["method"], "LMM-Wald");
    for k in ["statistic", "threshold", "p_value", "alpha"] {
        assert!(r[k].is_number(), "{k}: {r}");
    }
    assert_eq!(r["n_T"], 12);
    assert_eq!(r["n_C"], 12);
    let p = r["p_value"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));
    assert_eq!(r["reject"].as_bool().unwrap(), p <= 0.05);
}

#[test]
fn simulate_schema_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        serde_json::json!({
            "simulate": { "n_grid": [10, 20], "t_grid": [10], "n_sims": 3, "n_embedding": 30 }
        }),
    );
    let go = |seed: &str, out: &str| {
        run_ok(&["simulate", "--config", s(&config), "--seed", seed, "--out", s(&dir.path().join(out))]);
        (
            fs::read_to_string(dir.path().join(out).join("replicates.csv")).unwrap(),
            fs::read_to_string(dir.path().join(out).join("summary.csv")).unwrap(),
        )
    };
    let (rep, summary) = go("5", "a");
    assert_eq!(go("5", "b"), (rep.clone(), summary.clone()));
    assert_ne!(go("6", "c").0, rep);
    assert_eq!(
        fs::read(dir.path().join("a/config.echo.json")).unwrap(),
        fs::read(dir.path().join("b/config.echo.json")).unwrap()
    );

    assert_eq!(rep.lines().next().unwrap(), "method,n,t,replicate,p_value");
    assert_eq!(rep.lines().count(), 1 + 2 * 2 * 3);
    let mut lines = summary.lines();
    assert_eq!(lines.next().unwrap(), "method,n,t,power,se");
    let mut cells = 0;
    for line in lines {
        cells += 1;
        let f: Vec<&str> = line.split(',').collect();
        let p: Vec<f64> = rep
            .lines()
            .skip(1)
            .map(|l| l.split(',').collect::<Vec<_>>())
            .filter(|r| r[0] == f[0] && r[1] == f[1] && r[2] == f[2] && !r[4].is_empty())
            .map(|r| r[4].parse().unwrap())
            .collect();
        let power = p.iter().filter(|&&v| v <= 0.05).count() as f64 / p.len() as f64;
        assert!((power - f[3].parse::<f64>().unwrap()).abs() < 1e-12, "{line}");
    }
    assert_eq!(cells, 4);
}
