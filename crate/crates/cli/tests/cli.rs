use std::fs;
use std::process::{Command, Output};

use sheq_cli::{StudyConfig, StudyKind};

fn sheq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sheq"))
        .args(args)
        .output()
        .expect("spawn sheq")
}

const SMALL_TDR: [&str; 10] = [
    "study",
    "--set",
    "study=tdr",
    "--set",
    "dt_levels=5",
    "--set",
    "dx_levels=3",
    "--set",
    "dtau_levels=1,2,3",
    "--samples=20",
];

#[test]
fn study_csv_is_byte_identical_for_a_fixed_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for path in [&a, &b] {
        let mut args = SMALL_TDR.to_vec();
        let p = path.to_str().unwrap();
        args.extend(["--seed", "9", "--out", p]);
        let out = sheq(&args);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let (a, b) = (fs::read(a).unwrap(), fs::read(b).unwrap());
    assert!(!a.is_empty());
    assert_eq!(a, b);

    let mut args = SMALL_TDR.to_vec();
    args.extend(["--seed", "10"]);
    let other = sheq(&args);
    assert_ne!(
        other.stdout, a,
        "a different seed should change the MC columns"
    );
}

#[test]
fn study_csv_layout() {
    let out = sheq(&SMALL_TDR);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "study,level,dt,dx,dtau,h,K,error_exact,error_mc,stderr"
    );
    assert_eq!(lines.len(), 5);
    for row in &lines[1..4] {
        let cells: Vec<&str> = row.split(',').collect();
        assert_eq!(cells.len(), 10);
        assert_eq!(cells[0], "tdr");
        assert_eq!(cells[5], "nan");
        assert_eq!(cells[6], "32");
        for c in [2, 3, 4, 7, 8, 9] {
            cells[c].parse::<f64>().unwrap();
        }
    }
    assert!(lines[4].starts_with("# fit slope="), "{}", lines[4]);
}

#[test]
fn empty_level_list_is_a_config_error() {
    let out = sheq(&["study", "--set", "study=tdr", "--set", "dtau_levels="]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn unknown_key_and_bad_flag_exit_one() {
    assert_eq!(sheq(&["study", "--set", "bogus=1"]).status.code(), Some(1));
    assert_eq!(sheq(&["study", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(sheq(&["--help"]).status.code(), Some(0));
}

#[test]
fn unwritable_output_path_fails() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("missing").join("out.csv");
    let mut args = SMALL_TDR.to_vec();
    args.extend(["--out", path.to_str().unwrap()]);
    let out = sheq(&args);
    assert!(!out.status.success());
    assert!(!path.exists());
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("study.cfg");
    fs::write(
        &cfg,
        "# deterministic check\nstudy = deterministic-cn\ndtau_levels = 2,3,4\nfit_window = all\n",
    )
    .unwrap();
    let out = sheq(&[
        "study",
        "--config",
        cfg.to_str().unwrap(),
        "--set",
        "dtau_levels=3,4,5",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    let levels: Vec<&str> = text
        .lines()
        .skip(1)
        .take(3)
        .map(|l| l.split(',').nth(1).unwrap())
        .collect();
    assert_eq!(levels, ["3", "4", "5"]);
    assert!(text.trim_end().ends_with("window=all"));
}

#[test]
fn config_serialization_round_trips() {
    for study in StudyKind::ALL {
        let cfg = StudyConfig::defaults(study);
        let text = cfg.serialize();
        assert_eq!(StudyConfig::parse(&text, &[]).unwrap(), cfg, "{text}");
    }
}

#[test]
fn sample_path_starts_at_zero_with_interior_columns() {
    let out = sheq(&[
        "sample-path",
        "--n-star",
        "8",
        "--j-star",
        "8",
        "--steps",
        "4",
        "--intervals",
        "6",
        "--seed",
        "3",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r.len() == 5));
    assert!(rows[0].iter().all(|&v| v == 0.0));
    assert!(rows[1].iter().any(|&v| v != 0.0));
}

#[test]
fn sample_path_replays_a_dumped_grid() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("noise.bin");
    let first = sheq(&[
        "sample-path",
        "--n-star",
        "8",
        "--j-star",
        "4",
        "--steps",
        "4",
        "--intervals",
        "5",
        "--seed",
        "1",
        "--noise-out",
        dump.to_str().unwrap(),
    ]);
    assert!(first.status.success());
    let replay = sheq(&[
        "sample-path",
        "--steps",
        "4",
        "--intervals",
        "5",
        "--noise-in",
        dump.to_str().unwrap(),
    ]);
    assert!(
        replay.status.success(),
        "{}",
        String::from_utf8_lossy(&replay.stderr)
    );
    assert_eq!(first.stdout, replay.stdout);
    let clash = sheq(&[
        "sample-path",
        "--seed",
        "2",
        "--noise-in",
        dump.to_str().unwrap(),
    ]);
    assert_eq!(clash.status.code(), Some(1));
}

#[test]
fn selftest_passes() {
    let out = sheq(&["selftest"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().all(|l| l.starts_with("PASS ")), "{text}");
}
