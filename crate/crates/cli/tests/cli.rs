//! End-to-end checks of the binary: scenario loading, CSV emission, sweep
//! axes, and the determinism verification flag.

use std::path::PathBuf;
use std::process::Command;

fn macsim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_macsim"))
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("macsim-cli-{tag}"));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn run_subcommand_emits_parseable_csv() {
    let dir = tmp_dir("run");
    let scenario = dir.join("demo.cfg");
    std::fs::write(
        &scenario,
        "[scenario]\nprotocol = DYFRAG\nsources = 3\nhorizon_ms = 2000\n",
    )
    .unwrap();
    let out = macsim()
        .args(["run", "--scenario"])
        .arg(&scenario)
        .args(["--seeds", "1-3"])
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    let mut lines = stdout.lines();
    assert!(lines.next().unwrap().starts_with("scenario,protocol,nodes"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 6, "3 seeds x 2 classes");
    assert!(rows.iter().all(|r| r.contains("DYFRAG")));
}

#[test]
fn sweep_subcommand_writes_deterministic_csv() {
    let dir = tmp_dir("sweep");
    let out_a = dir.join("a.csv");
    let out_b = dir.join("b.csv");
    for out in [&out_a, &out_b] {
        let status = macsim()
            .args([
                "sweep",
                "--protocols",
                "FROG,IDSME",
                "--nodes",
                "2,4",
                "--frags",
                "16",
                "--seeds",
                "1,2",
                "--horizon-ms",
                "2000",
                "--verify-determinism",
                "--out",
            ])
            .arg(out)
            .status()
            .expect("binary runs");
        assert!(status.success());
    }
    let a = std::fs::read_to_string(&out_a).unwrap();
    let b = std::fs::read_to_string(&out_b).unwrap();
    assert_eq!(a, b, "repeated sweeps are byte-identical");
    // FROG: 2 nodes x 1 frag x 2 seeds x 2 classes = 8 rows; IDSME: 8 rows.
    assert_eq!(a.lines().count(), 1 + 16);
}

#[test]
fn bad_scenario_is_reported_with_context() {
    let dir = tmp_dir("bad");
    let scenario = dir.join("bad.cfg");
    std::fs::write(&scenario, "[scenario]\nprotocol = FROG\nsources = 0\n").unwrap();
    let out = macsim()
        .args(["run", "--scenario"])
        .arg(&scenario)
        .output()
        .expect("binary runs");
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("sources"), "{stderr}");
}
