use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn awlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_awlab")).args(args).output().unwrap()
}

fn awlab_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_awlab"))
        .args(args)
        .env(key, value)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn report(o: &Output) -> Value {
    assert_eq!(code(o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

fn read_report(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn verify_bounds_on_lattice_balls() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("vb");
    let o = awlab(&[
        "verify-bounds",
        "--lattice",
        "d=2,n=12",
        "--region",
        "ball:1..10",
        "--F",
        "power:2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let csv = std::fs::read_to_string(out.join("bounds.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 10);
    for row in rows {
        let cols: Vec<&str> = row.split(',').collect();
        let (exact, twice, bound): (f64, f64, f64) =
            (cols[2].parse().unwrap(), cols[3].parse().unwrap(), cols[4].parse().unwrap());
        assert!(exact <= twice && twice <= bound, "{row}");
        assert_eq!(cols[8], "true");
    }
    let r = read_report(&out);
    assert_eq!(r["config"]["run"]["tol"], 1e-10);
    assert_eq!(r["config"]["verify-bounds"]["mode"], "exit");
}

#[test]
fn verify_bounds_on_a_graph_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("seg3.txt");
    std::fs::write(&path, "#root 0\n#frame -1 3\n-1 0 1\n0 1 1\n1 2 1\n2 3 1\n").unwrap();
    let r = report(&awlab(&["verify-bounds", "--graph", path.to_str().unwrap(), "--F", "id"]));
    let rows = r["result"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["m_a"], 6.0);
    assert!((rows[0]["exact"].as_f64().unwrap() - 3.0).abs() < 1e-12);
    assert_eq!(rows[0]["ok"], true);
    // F is mandatory without a lattice dimension.
    assert_eq!(code(&awlab(&["verify-bounds", "--graph", path.to_str().unwrap()])), 2);
}

#[test]
fn configuration_errors() {
    assert_eq!(code(&awlab(&["green", "--lattice", "d=2,n=3", "--env", "uniform01"])), 2);
    assert_eq!(code(&awlab(&["simulate", "--lattice", "d=1,n=3"])), 2);
    assert_eq!(code(&awlab(&["green", "--lattice", "d=2"])), 2);
    assert_eq!(code(&awlab(&["green"])), 2);
    assert_eq!(code(&awlab(&["green", "--lattice", "d=2,n=3", "--region", "disk:2"])), 2);
    assert_eq!(code(&awlab(&["frobnicate"])), 2);
    assert_eq!(code(&awlab_env(&["green", "--lattice", "d=1,n=3"], "AWLAB_THREADS", "zero")), 2);
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[green]\nradius = 3\n").unwrap();
    assert_eq!(code(&awlab(&["green", "--lattice", "d=1,n=3", "--config", cfg.to_str().unwrap()])), 2);
}

#[test]
fn failed_checks_exit_with_one() {
    let o = awlab(&["scaling", "--d", "2", "--radii", "2..5", "--expect", "3.0"]);
    assert_eq!(code(&o), 1);
    let o = awlab(&[
        "isoperimetry",
        "--method",
        "betac",
        "--lattice",
        "d=2,n=8",
        "--beta0",
        "100",
        "--n0",
        "5",
        "--samples",
        "50",
        "--seed",
        "1",
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn toml_config_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "[run]\nseed = 5\n\n[input]\nlattice = \"d=2,n=4\"\n\n[simulate]\nkind = \"exit\"\ntrials = 2000\nregion = \"ball:2\"\ncheck = true\n",
    )
    .unwrap();
    let r = report(&awlab(&["simulate", "--config", cfg.to_str().unwrap()]));
    assert_eq!(r["seed"], 5);
    assert_eq!(r["result"]["estimate"]["trials"], 2000);
    assert_eq!(r["config"]["simulate"]["horizon"], 1_000_000);
    let r = report(&awlab(&["simulate", "--config", cfg.to_str().unwrap(), "--trials", "300", "--seed", "6"]));
    assert_eq!(r["seed"], 6);
    assert_eq!(r["result"]["estimate"]["trials"], 300);
}

#[test]
fn reports_replay_bit_identically() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let o = awlab(&[
        "simulate",
        "--lattice",
        "d=2,n=6",
        "--env",
        "uniform01",
        "--region",
        "ball:3",
        "--trials",
        "5000",
        "--check",
        "--seed",
        "11",
        "--out",
        a.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let o = awlab(&[
        "simulate",
        "--config",
        a.join("report.json").to_str().unwrap(),
        "--out",
        b.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let (ra, rb) = (read_report(&a), read_report(&b));
    assert_eq!(ra["result"], rb["result"]);
    assert_eq!(ra["config"]["simulate"], rb["config"]["simulate"]);
}

#[test]
fn thread_count_does_not_change_results() {
    let args = [
        "isoperimetry",
        "--method",
        "sampled",
        "--lattice",
        "d=2,n=8",
        "--env",
        "uniform01",
        "--samples",
        "500",
        "--seed",
        "3",
    ];
    let one = awlab_env(&args, "AWLAB_THREADS", "1");
    let four = awlab_env(&args, "AWLAB_THREADS", "4");
    assert_eq!(report(&one), report(&four));
}

#[test]
fn generated_environments_read_back() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("env");
    let o = awlab(&[
        "gen-env",
        "--lattice",
        "d=2,n=5",
        "--env",
        "bernoulli:0.7",
        "--percolation",
        "--seed",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let file = out.join("environment.txt");
    let text = std::fs::read_to_string(&file).unwrap();
    assert!(text.starts_with("#law bernoulli:0.7\n#seed 2\n#box d=2 n=5\n"));
    let r = report(&awlab(&["green", "--graph", file.to_str().unwrap()]));
    assert_eq!(r["result"]["factor_two_holds"], true);
    let gen = read_report(&out);
    assert!(gen["result"]["cluster"]["size"].as_u64().unwrap() >= 1);
}

#[test]
fn transience_families() {
    let r = report(&awlab(&["transience", "--d", "1", "--radii", "2,4,8", "--expect", "recurrent"]));
    let values = r["result"]["values"].as_array().unwrap();
    for v in values {
        assert!((v[1].as_f64().unwrap() - v[0].as_f64().unwrap() - 1.0).abs() < 1e-12);
    }
    let r = report(&awlab(&["transience", "--d", "3", "--radii", "6,8,10,12,14", "--expect", "transient", "--F", "power:3"]));
    assert_eq!(r["result"]["diagnostic"]["finite"], true);
    let r = report(&awlab(&["transience", "--d", "2", "--radii", "4,8,16", "--expect", "recurrent", "--F", "power:2"]));
    assert_eq!(r["result"]["diagnostic"]["finite"], false);
    assert!(r["result"]["diagnostic"]["t0"].is_null());
}

#[test]
fn tree_displacement() {
    let r = report(&awlab(&[
        "simulate",
        "--kind",
        "displacement",
        "--tree",
        "3",
        "--steps",
        "2000",
        "--trials",
        "200",
        "--seed",
        "1",
        "--check",
    ]));
    let mean = r["result"]["mean"].as_f64().unwrap();
    assert!((0.28..=0.38).contains(&mean));
}
