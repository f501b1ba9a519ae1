use std::path::Path;
use std::process::{Command, Output};

use tractoracle::geometry::{Streamline, Vec3};
use tractoracle::oracle::{OracleConfig, OracleModel};
use tractoracle::tractogram::{tractogram_to_bytes, Tractogram};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tractoracle"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn help_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(run(dir.path(), &["--version"]).status.code(), Some(0));
    assert_eq!(run(dir.path(), &["no-such-command"]).status.code(), Some(1));
    assert_eq!(
        run(
            dir.path(),
            &["track", "--phantom", "p.phv", "--out", "t.tsf"]
        )
        .status
        .code(),
        Some(1)
    );
}

#[test]
fn unknown_config_keys_are_listed() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("bad.toml"),
        "[env]\nfoo = 1\nalpha = 2.0\n[bogus]\nx = 2\n",
    )
    .unwrap();
    let o = run(
        dir.path(),
        &["phantom-gen", "--config", "bad.toml", "--out", "p.phv"],
    );
    assert_eq!(o.status.code(), Some(1));
    let e = stderr(&o);
    assert!(e.contains("env.foo") && e.contains("bogus"), "{e}");
    assert!(!dir.path().join("p.phv").exists());

    std::fs::write(dir.path().join("seed.toml"), "[sac]\nrng_seed = 4\n").unwrap();
    let o = run(
        dir.path(),
        &["phantom-gen", "--config", "seed.toml", "--out", "p.phv"],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("sac.rng_seed"));
}

#[test]
fn wrong_file_kind_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run(dir.path(), &["-q", "phantom-gen", "--out", "p.phv"])
        .status
        .success());
    assert!(dir.path().join("p.phv.manifest.json").exists());
    let o = run(
        dir.path(),
        &["evaluate", "--phantom", "p.phv", "--input", "p.phv"],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("expected magic TSF1"), "{}", stderr(&o));
}

#[test]
fn oracle_score_prints_one_line_per_streamline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = OracleConfig {
        n_points: 16,
        embed_dim: 8,
        n_blocks: 1,
        n_heads: 2,
        ffn_dim: 16,
        threshold: 0.5,
    };
    std::fs::write(
        dir.path().join("o.tnsr"),
        OracleModel::<f32>::new(cfg, 3).unwrap().to_bytes(),
    )
    .unwrap();
    let t = Tractogram::new(
        (0..3)
            .map(|k| {
                Streamline::new(
                    (0..10 + k)
                        .map(|i| Vec3::new(0.0, 0.1 * k as f64, 0.5 * i as f64))
                        .collect(),
                )
                .unwrap()
            })
            .collect(),
    );
    std::fs::write(dir.path().join("t.tsf"), tractogram_to_bytes(&t)).unwrap();
    let o = run(
        dir.path(),
        &[
            "-q",
            "oracle-score",
            "--oracle",
            "o.tnsr",
            "--input",
            "t.tsf",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let scores: Vec<f64> = text.lines().map(|l| l.parse().unwrap()).collect();
    assert_eq!(scores.len(), 3);
    assert!(scores.iter().all(|s| (0.0..=1.0).contains(s)));
    assert!(text
        .lines()
        .all(|l| l.split('.').nth(1).is_some_and(|d| d.len() == 6)));
}

#[test]
fn baseline_track_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("tube.toml"),
        "[phantom]\npreset = \"straight-tube\"\n[track]\nseeds_per_voxel = 2\n",
    )
    .unwrap();
    let c = ["--config", "tube.toml"];
    let ok = |args: &[&str]| {
        let mut a = vec!["-q"];
        a.extend(args);
        a.extend(c);
        let o = run(dir.path(), &a);
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
        String::from_utf8(o.stdout).unwrap()
    };
    ok(&["phantom-gen", "--out", "tube.phv"]);
    assert_eq!(
        ok(&[
            "track",
            "--phantom",
            "tube.phv",
            "--baseline",
            "--out",
            "t.tsf",
            "--vtk",
            "t.vtk"
        ])
        .trim(),
        "128 streamlines"
    );
    let report = ok(&[
        "evaluate",
        "--phantom",
        "tube.phv",
        "--input",
        "t.tsf",
        "--out",
        "r.json",
    ]);
    assert!(report.contains("vc_pct: 100.000000"), "{report}");
    let json: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(json["vb"], 1);
    assert!(std::fs::read_to_string(dir.path().join("t.vtk"))
        .unwrap()
        .starts_with("# vtk DataFile"));
}
