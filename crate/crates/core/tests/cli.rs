use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bregquant::cli::{run, CliError};
use bregquant::config::{ExperimentConfig, Subcommand};
use bregquant::quantize::Codebook;
use tempfile::TempDir;

fn bregquant(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_bregquant"));
    cmd.args(args).env_remove("BREGQUANT_WORKERS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn write_config(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

const QUANTIZE_2D: &str = "divergence = \"sq-euclid\"\nlo = [0.0, 0.0]\nhi = [1.0, 1.0]\nlevels = [5]\nrestarts = 3\ntrain_samples = 4000\nsamples = 10000\n";

#[test]
fn quantize_uniform_interval_writes_four_codewords() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "q.toml", "subcommand = \"quantize\"\nlevels = [4]\n");
    let out = tmp.path().join("out");
    let res = bregquant(
        &[
            "quantize",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
        &[],
    );
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let cb = Codebook::read_csv(&out.join("codebook_n4.csv"), "cli", 2.0).unwrap();
    assert_eq!(cb.len(), 4);
    // the optimal 4-point codebook of U[0,1] is the set of cell midpoints
    let mut xs = cb.points.as_flat().to_vec();
    xs.sort_by(f64::total_cmp);
    for (i, x) in xs.iter().enumerate() {
        assert!((x - (2 * i + 1) as f64 / 8.0).abs() < 1e-6, "{xs:?}");
    }
    let json = Codebook::from_json(&read(&out, "codebook_n4.json")).unwrap();
    assert_eq!(json.points, cb.points);
    let csv = read(&out, "distortion.csv");
    assert!(csv.starts_with("n,e_rn,std_err,q_n,restarts_used\n4,"));
    assert!(!csv.contains('\r'));
}

#[test]
fn zador_verify_reports_the_itakura_saito_ratio() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "z.toml", "divergence = \"itakura-saito\"\nlo = [1.0]\nhi = [2.0]\nlevels = [8, 16, 32, 64]\nrestarts = 2\n");
    let out = tmp.path().join("out");
    let res = bregquant(
        &[
            "zador-verify",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
        &[],
    );
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let json: serde_json::Value = serde_json::from_str(&read(&out, "zador.json")).unwrap();
    let ratio = json["summary"]["ratio_at_max"].as_f64().unwrap();
    assert!((ratio - 1.0).abs() < 0.05, "{ratio}");
    assert_eq!(json["constant"]["provenance"], "exact-1d");
    assert_eq!(json["summary"]["lower_bound_ok"], true);
    assert_eq!(read(&out, "rate.csv").lines().count(), 5);
}

#[test]
fn exit_codes_follow_the_error_kind() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let out = out.to_str().unwrap();

    let broken = write_config(&tmp, "broken.toml", "levels = [4,\n");
    assert_eq!(
        bregquant(
            &[
                "quantize",
                "--config",
                broken.to_str().unwrap(),
                "--out",
                out
            ],
            &[]
        )
        .status
        .code(),
        Some(2)
    );

    let unknown = write_config(&tmp, "unknown.toml", "levels = [4]\ncolour = 3\n");
    assert_eq!(
        bregquant(
            &[
                "quantize",
                "--config",
                unknown.to_str().unwrap(),
                "--out",
                out
            ],
            &[]
        )
        .status
        .code(),
        Some(2)
    );

    let other = write_config(
        &tmp,
        "other.toml",
        "subcommand = \"pierce-check\"\nlevels = [4]\n",
    );
    assert_eq!(
        bregquant(
            &[
                "quantize",
                "--config",
                other.to_str().unwrap(),
                "--out",
                out
            ],
            &[]
        )
        .status
        .code(),
        Some(2)
    );

    let missing = tmp.path().join("absent.toml");
    assert_eq!(
        bregquant(
            &[
                "quantize",
                "--config",
                missing.to_str().unwrap(),
                "--out",
                out
            ],
            &[]
        )
        .status
        .code(),
        Some(2)
    );

    // every sample of U[-1,1] below zero is outside the Itakura-Saito domain
    let numeric = write_config(&tmp, "numeric.toml", "divergence = \"itakura-saito\"\nlo = [-1.0]\nhi = [1.0]\nlevels = [4]\ntraining = \"samples\"\ntrain_samples = 100\nmode = \"mc\"\nsamples = 100\n");
    let res = bregquant(
        &[
            "quantize",
            "--config",
            numeric.to_str().unwrap(),
            "--out",
            out,
        ],
        &[],
    );
    assert_eq!(
        res.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );

    let ok = write_config(&tmp, "ok.toml", "levels = [2]\n");
    assert_eq!(
        bregquant(
            &[
                "quantize",
                "--config",
                ok.to_str().unwrap(),
                "--out",
                out,
                "--workers",
                "0"
            ],
            &[]
        )
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn worker_count_comes_from_the_flag_or_the_environment() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "q.toml", QUANTIZE_2D);
    let cfg = cfg.to_str().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(bregquant(
        &[
            "quantize",
            "--config",
            cfg,
            "--workers",
            "2",
            "--out",
            a.to_str().unwrap()
        ],
        &[]
    )
    .status
    .success());
    assert!(bregquant(
        &["quantize", "--config", cfg, "--out", b.to_str().unwrap()],
        &[("BREGQUANT_WORKERS", "2")]
    )
    .status
    .success());
    for name in ["codebook_n5.csv", "codebook_n5.json", "distortion.csv"] {
        assert_eq!(read(&a, name), read(&b, name), "{name}");
    }
    let bad = bregquant(
        &["quantize", "--config", cfg, "--out", b.to_str().unwrap()],
        &[("BREGQUANT_WORKERS", "many")],
    );
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn seed_flag_overrides_the_config() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "q.toml", &format!("seed = 1\n{QUANTIZE_2D}"));
    let cfg = cfg.to_str().unwrap();
    let dirs: Vec<PathBuf> = (0..3).map(|k| tmp.path().join(format!("o{k}"))).collect();
    assert!(bregquant(
        &[
            "quantize",
            "--config",
            cfg,
            "--workers",
            "1",
            "--out",
            dirs[0].to_str().unwrap()
        ],
        &[]
    )
    .status
    .success());
    assert!(bregquant(
        &[
            "quantize",
            "--config",
            cfg,
            "--workers",
            "1",
            "--seed",
            "1",
            "--out",
            dirs[1].to_str().unwrap()
        ],
        &[]
    )
    .status
    .success());
    assert!(bregquant(
        &[
            "quantize",
            "--config",
            cfg,
            "--workers",
            "1",
            "--seed",
            "2",
            "--out",
            dirs[2].to_str().unwrap()
        ],
        &[]
    )
    .status
    .success());
    assert_eq!(
        read(&dirs[0], "distortion.csv"),
        read(&dirs[1], "distortion.csv")
    );
    assert_ne!(
        read(&dirs[0], "distortion.csv"),
        read(&dirs[2], "distortion.csv")
    );
}

#[test]
fn library_run_matches_the_binary() {
    let tmp = TempDir::new().unwrap();
    let cfg_path = write_config(&tmp, "f.toml", "divergence = \"sq-euclid\"\ndim = 2\ncells = 4\ncell = 5\nvarpi = 0.05\ninterior = 300\nboundary = 50\nbulk = 200\n");
    let bin_out = tmp.path().join("bin");
    let res = bregquant(
        &[
            "firewall-check",
            "--config",
            cfg_path.to_str().unwrap(),
            "--workers",
            "1",
            "--out",
            bin_out.to_str().unwrap(),
        ],
        &[],
    );
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let cfg = ExperimentConfig::read(&cfg_path).unwrap();
    let lib_out = tmp.path().join("lib");
    let files = run(Subcommand::FirewallCheck, &cfg, &lib_out)
        .unwrap()
        .files;
    assert_eq!(files, vec![lib_out.join("firewall.json")]);
    assert_eq!(
        read(&bin_out, "firewall.json"),
        read(&lib_out, "firewall.json")
    );
    let json: serde_json::Value = serde_json::from_str(&read(&lib_out, "firewall.json")).unwrap();
    assert_eq!(json["violations"], 0);
    assert_eq!(json["auto_rho"], true);
}

#[test]
fn run_rejects_inconsistent_configs() {
    let tmp = TempDir::new().unwrap();
    let cfg = ExperimentConfig {
        dim: Some(2),
        lo: Some(vec![0.0]),
        hi: Some(vec![1.0]),
        levels: vec![2],
        ..ExperimentConfig::default()
    };
    let err = run(Subcommand::Quantize, &cfg, tmp.path()).unwrap_err();
    assert!(matches!(err, CliError::Config(_)), "{err}");
    let cfg = ExperimentConfig::default();
    assert_eq!(
        run(Subcommand::Quantize, &cfg, tmp.path())
            .unwrap_err()
            .exit_code(),
        2
    );
}

#[test]
fn emitted_configs_parse_back() {
    let tmp = TempDir::new().unwrap();
    let text = format!("subcommand = \"quantize\"\nseed = 9\n{QUANTIZE_2D}");
    let cfg = ExperimentConfig::from_toml(&text).unwrap();
    let path = write_config(&tmp, "round.toml", &cfg.to_toml());
    assert_eq!(ExperimentConfig::read(&path).unwrap(), cfg);
}
