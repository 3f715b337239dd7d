use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const MODEL: &str = r#"
schema_version = 1
seed = 4

[grid]
horizon = 2.0
dt = 0.01

[model]
a = { matrix = [[-1.0]] }
b = { matrix = [[1.0]] }
c = { matrix = [[1.0]] }
d = { matrix = [[1.0]] }
system_noise = { gaussian_cov = [[1.0]] }
observation_noise = { gaussian_cov = [[0.0]], jumps = [{ axis = 0, kind = "symmetric_stable", alpha = 1.5, scale = 1.0 }] }

[simulate]
cutoffs = [1.0, 10.0]

[riccati]
variant = "standard"
cutoff = 10.0

[filter]
variant = "limiting"
export_gains = true

[converge]
cutoffs = [1.0, 10.0, 100.0]
upsilon_cutoffs = [1e2, 1e3, 1e4]
replicates = 100

[bench]
observations = [{ kind = "stable", alpha = 1.5 }, { kind = "gaussian" }]
horizon = 1.0
replicates = 100
variants = [{ kind = "degenerate" }, { kind = "standard", cutoff = 10.0 }]

[trace]
law = 0
replicate = 3
"#;

fn levy_kb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_levy-kb"))
        .args(args)
        .output()
        .unwrap()
}

fn run(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> BTreeMap<String, Vec<u8>> {
    let mut args = vec![
        sub,
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    let o = levy_kb(&args);
    assert!(
        o.status.success(),
        "{sub}: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    fs::read_dir(out)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().into_string().unwrap(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

fn setup() -> (tempfile::TempDir, std::path::PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, MODEL).unwrap();
    (dir, cfg)
}

#[test]
fn every_subcommand_is_byte_deterministic() {
    let (dir, cfg) = setup();
    for sub in ["simulate", "riccati", "filter", "bench", "converge"] {
        let a = run(
            sub,
            &cfg,
            &dir.path().join(format!("{sub}_a")),
            &["--threads", "1"],
        );
        let b = run(
            sub,
            &cfg,
            &dir.path().join(format!("{sub}_b")),
            &["--threads", "3"],
        );
        assert_eq!(a, b, "{sub}");
        let meta = String::from_utf8(a["metadata.toml"].clone()).unwrap();
        let seed = if sub == "bench" {
            "seed = 0"
        } else {
            "seed = 4"
        };
        assert!(meta.contains(seed), "{meta}");
        assert!(meta.contains(&format!("subcommand = \"{sub}\"")));
        for name in a.keys() {
            assert!(
                meta.contains(&format!("\"{name}\"")),
                "{sub}: {name} missing from metadata"
            );
        }
    }
}

#[test]
fn expected_files_are_written() {
    let (dir, cfg) = setup();
    let sim = run("simulate", &cfg, &dir.path().join("s"), &[]);
    for f in [
        "system.csv",
        "observation.csv",
        "observation_n1.csv",
        "observation_n10.csv",
        "resolved_config.toml",
    ] {
        assert!(sim.contains_key(f), "{f}");
    }
    let bench = run("bench", &cfg, &dir.path().join("b"), &[]);
    for f in [
        "report.md",
        "bench_median_path_mse.csv",
        "bench_mean_path_mse.csv",
        "trace.csv",
    ] {
        assert!(bench.contains_key(f), "{f}");
    }
    let report = String::from_utf8(bench["report.md"].clone()).unwrap();
    assert!(report.contains("| alpha=1.5 |") && report.contains("| gaussian |"));
    let filter = run("filter", &cfg, &dir.path().join("f"), &[]);
    let csv = String::from_utf8(filter["filter.csv"].clone()).unwrap();
    assert!(csv.starts_with("t,yhat_1,n_1,k_11\n"));
    assert_eq!(csv.lines().count(), 202);
    let conv = run("converge", &cfg, &dir.path().join("c"), &[]);
    for f in [
        "levy_l1.csv",
        "observation_l1.csv",
        "upsilon.md",
        "riccati_convergence.csv",
        "filter_convergence.csv",
    ] {
        assert!(conv.contains_key(f), "{f}");
    }
}

#[test]
fn resolved_config_reproduces_run() {
    let (dir, cfg) = setup();
    let a = run("filter", &cfg, &dir.path().join("a"), &[]);
    let resolved = dir.path().join("a").join("resolved_config.toml");
    let b = run("filter", &resolved, &dir.path().join("b"), &[]);
    assert_eq!(a["filter.csv"], b["filter.csv"]);
    assert_eq!(a["resolved_config.toml"], b["resolved_config.toml"]);
}

#[test]
fn seed_flag_overrides_config() {
    let (dir, cfg) = setup();
    let a = run("simulate", &cfg, &dir.path().join("a"), &[]);
    let b = run("simulate", &cfg, &dir.path().join("b"), &["--seed", "5"]);
    assert_ne!(a["system.csv"], b["system.csv"]);
    assert!(String::from_utf8(b["metadata.toml"].clone())
        .unwrap()
        .contains("seed = 5"));
}

#[test]
fn invalid_config_fails_with_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(
        &cfg,
        MODEL.replace("alpha = 1.5, scale", "alpha = 2.5, scale"),
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = levy_kb(&[
        "riccati",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("model.observation_noise"), "{err}");

    fs::write(
        &cfg,
        MODEL.replace("replicates = 100\nvariants", "replicates = 5\nvariants"),
    )
    .unwrap();
    let o = levy_kb(&[
        "bench",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(!o.status.success());

    let o = levy_kb(&[
        "riccati",
        "--config",
        "/nonexistent.toml",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent.toml"));
}
