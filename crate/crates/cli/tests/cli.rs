use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bteb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bteb"))
        .args(args)
        .env_remove("BTEB_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_string()
}

fn study_conf() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/study.conf")
}

/// Data rows of a CSV artifact, after the metadata and header lines.
fn rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(2)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn col(rows: &[Vec<String>], i: usize) -> Vec<f64> {
    rows.iter().map(|r| r[i].parse().unwrap()).collect()
}

#[test]
fn dist_single_row_and_range_checks() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    let o = bteb(&["dist", "--r", "3", "--theta", "0.6", "--x-to", "3", "--out", &out]);
    assert_eq!(o.status.code(), Some(0));
    let r = rows(&dir.path().join("dist.csv"));
    assert_eq!(r.len(), 1);
    let want = (-1.8f64).exp();
    assert!((col(&r, 1)[0] - want).abs() < 1e-15);
    assert!((col(&r, 2)[0] - want).abs() < 1e-15);

    let o = bteb(&["dist", "--r", "3", "--theta", "0.6", "--x-from", "2", "--x-to", "9", "--out", &out]);
    assert_eq!(o.status.code(), Some(1));

    let o = bteb(&["dist", "--r", "2", "--theta", "0.4", "--x-to", "60", "--out", &out]);
    assert_eq!(o.status.code(), Some(0));
    let r = rows(&dir.path().join("dist.csv"));
    let total: f64 = col(&r, 1).iter().sum();
    assert!((total - col(&r, 2).last().unwrap()).abs() < 1e-14);
}

#[test]
fn exit_codes() {
    assert_eq!(bteb(&["--help"]).status.code(), Some(0));
    assert_eq!(bteb(&["--version"]).status.code(), Some(0));
    assert_eq!(bteb(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(bteb(&["--config", "/nonexistent/study.conf", "reproduce-study"]).status.code(), Some(1));
    assert_eq!(bteb(&["--set", "bogus=1", "bayes-table"]).status.code(), Some(1));
    assert_eq!(bteb(&["--set", "reps=1", "reproduce-study"]).status.code(), Some(1));
    assert_eq!(bteb(&["dist", "--theta", "1.5", "--x-to", "4"]).status.code(), Some(1));
    // A prior reaching θ = 1 needs an explicit cap.
    let beta = ["--set", "prior.kind=beta", "--set", "prior.v=2", "--set", "prior.w=3", "bayes-table"];
    assert_eq!(bteb(&beta).status.code(), Some(1));

    // A tail tolerance below double precision cannot be met: numeric failure.
    let dir = tempfile::tempdir().unwrap();
    let o = bteb(&["--set", "tail_eps=1e-20", "bayes-table", "--out", &out_arg(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("module=bt_dist"), "{err}");
}

#[test]
fn every_artifact_starts_with_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    let conf = study_conf();
    let conf = conf.to_str().unwrap();
    for args in [
        vec!["dist", "--theta", "0.5", "--x-to", "10"],
        vec!["bayes-table"],
        vec!["eb", "--n", "50"],
        vec!["monotonize", "--n", "50", "--dump", "3,4"],
        vec!["figure1", "--n", "200"],
    ] {
        let mut full = vec!["--config", conf, "--out", &out];
        full.extend(args);
        assert_eq!(bteb(&full).status.code(), Some(0), "{full:?}");
    }
    for f in ["dist.csv", "bayes_table.csv", "eb_table.csv", "monotone.csv", "dstar.csv", "estimates.csv"] {
        let text = fs::read_to_string(dir.path().join(f)).unwrap();
        let first = text.lines().next().unwrap();
        assert!(first.starts_with("# bteb "), "{f}: {first}");
        assert!(first.contains("seed=1") && first.contains("prior.kind=uniform"), "{f}");
    }
}

#[test]
fn metadata_config_reproduces_the_artifact() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let o = bteb(&["--seed", "17", "--set", "grid_m=500", "monotonize", "--n", "80", "--out", &out_arg(a.path())]);
    assert_eq!(o.status.code(), Some(0));
    let first = fs::read_to_string(a.path().join("monotone.csv")).unwrap();
    let meta = first.lines().next().unwrap();
    let config = meta.rsplit(" | ").next().unwrap();
    let conf = b.path().join("from_meta.conf");
    fs::write(&conf, config).unwrap();
    let o = bteb(&["--config", conf.to_str().unwrap(), "monotonize", "--n", "80", "--out", &out_arg(b.path())]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(first, fs::read_to_string(b.path().join("monotone.csv")).unwrap());
}

#[test]
fn history_file_input() {
    let dir = tempfile::tempdir().unwrap();
    let hist = dir.path().join("h.txt");
    fs::write(&hist, "3 4 4 4 4 4\n5 3 7\n").unwrap();
    let o = bteb(&["eb", "--history", hist.to_str().unwrap(), "--out", &out_arg(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    let r = rows(&dir.path().join("eb_table.csv"));
    assert_eq!(r[0][0], "3");
    assert_eq!(r[0][1], "2");
    assert_eq!(r[1][1], "5");
    fs::write(&hist, "3 2\n").unwrap();
    let o = bteb(&["eb", "--history", hist.to_str().unwrap(), "--out", &out_arg(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn figure1_structure() {
    let dir = tempfile::tempdir().unwrap();
    let o = bteb(&["figure1", "--out", &out_arg(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    let r = rows(&dir.path().join("estimates.csv"));
    let eb = col(&r, 2);
    let mono = col(&r, 3);
    let bayes = col(&r, 4);
    assert!(eb.windows(2).any(|w| w[1] < w[0]), "EB column should not be monotone");
    assert!(mono.windows(2).all(|w| w[1] >= w[0] - 1e-9));
    assert!(bayes.windows(2).all(|w| w[1] >= w[0]));
    assert!(bayes.iter().all(|v| (0.5..=0.8).contains(v)));
    let counts: Vec<u64> = r.iter().map(|row| row[1].parse().unwrap()).collect();
    assert_eq!(counts.iter().sum::<u64>(), 500);
    // The table stops ten past the largest observation.
    let last_obs = r.iter().rposition(|row| row[1] != "0").unwrap();
    assert_eq!(r.len() - 1 - last_obs, 10);
}

#[test]
fn thread_count_does_not_change_results() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let common = ["--set", "n=60", "--set", "reps=3", "--set", "grid_m=300", "reproduce-study"];
    let mut one = vec!["--threads", "1", "--out", a.path().to_str().unwrap()];
    one.extend(common);
    let mut many = vec!["--threads", "4", "--out", b.path().to_str().unwrap()];
    many.extend(common);
    assert_eq!(bteb(&one).status.code(), Some(0));
    assert_eq!(bteb(&many).status.code(), Some(0));
    for f in ["table1.csv", "replications.csv", "study_summary.txt"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
    let t = rows(&a.path().join("table1.csv"));
    assert_eq!(t.len(), 1);
    assert_eq!(t[0][..3], ["3", "60", "3"]);
    // Three replication rows plus the aggregate.
    assert_eq!(rows(&a.path().join("replications.csv")).len(), 4);
}

#[test]
fn out_dir_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_bteb"))
        .args(["dist", "--theta", "0.3", "--x-to", "5"])
        .env("BTEB_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("dist.csv").exists());
}
