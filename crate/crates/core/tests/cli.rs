use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn cvp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cvp"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn cvp_with(dir: &Path, env: (&str, &str), args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cvp"))
        .current_dir(dir)
        .env(env.0, env.1)
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn report(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout)
        .unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn gen(dir: &Path, name: &str, lattice: &str, extra: &[&str]) -> PathBuf {
    let mut args = vec![
        "gen",
        "--lattice",
        lattice,
        "--periodic",
        "1",
        "--critical",
        "--out",
        name,
    ];
    args.extend_from_slice(extra);
    let o = cvp(dir, &args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    dir.join(name)
}

/// Flat jet with `rows` rows of 4 points, nonzero on rows `lo..hi`.
fn write_jet(dir: &Path, name: &str, rows: usize, lo: usize, hi: usize) -> PathBuf {
    let mut v = Vec::new();
    for row in 0..rows {
        for col in 0..4 {
            for c in 0..3 {
                let x = if (lo..hi).contains(&row) {
                    ((row * 7 + col * 3 + c) % 5) as f64 * 0.25 - 0.5
                } else {
                    0.0
                };
                v.push(x);
            }
        }
    }
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string(&v).unwrap()).unwrap();
    p
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

const LENS: &str = r#"{"t_min": 1.5, "t_max": 6.5, "grid_count": 11, "delta": 1.5}"#;
const COVERING: &str = r#"{"height": 5.0, "delta": 1.5, "grid_count": 11, "stride": 3.0}"#;

#[test]
fn el_check_exit_codes() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let o = cvp(
        d,
        &[
            "gen",
            "--lattice",
            "6x6",
            "--periodic",
            "0,1",
            "--range",
            "1.5",
            "--critical",
            "--out",
            "torus.json",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = cvp(
        d,
        &["check-el", "--instance", "torus.json", "--test", "full"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(report(&o)["pass"], Value::Bool(true));

    gen(d, "slab.json", "16x16", &[]);
    // time derivative of ℓ does not vanish inside a bounded slab
    let o = cvp(
        d,
        &["check-el", "--instance", "slab.json", "--test", "interior"],
    );
    assert_eq!(code(&o), 1);
    assert_eq!(report(&o)["pass"], Value::Bool(false));
}

#[test]
fn usage_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let o = cvp(d, &["check-el", "--instance", "x.json", "--bogus"]);
    assert_eq!(code(&o), 2);

    let o = cvp(d, &["check-el", "--instance", "missing.json"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("missing.json"), "{}", stderr(&o));

    write(
        d,
        "bad.json",
        "{\n  \"dim\": 2,\n  \"points\": [[0.0, 0.0]\n",
    );
    let o = cvp(d, &["check-el", "--instance", "bad.json"]);
    assert_eq!(code(&o), 2);
    assert!(
        stderr(&o).contains("bad.json") && stderr(&o).contains("line"),
        "{}",
        stderr(&o)
    );

    let o = cvp(d, &["gen", "--lattice", "4xq", "--out", "g.json"]);
    assert_eq!(code(&o), 2);

    assert_eq!(code(&cvp(d, &["--help"])), 0);
}

#[test]
fn green_exact_sequence_and_cones() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    gen(
        d,
        "lc.json",
        "18x4",
        &[
            "--kernel",
            "lightcone",
            "--slope",
            "0.7",
            "--offset",
            "2.25",
        ],
    );
    write(d, "cov.json", COVERING);
    let o = cvp(
        d,
        &[
            "green",
            "--instance",
            "lc.json",
            "--covering",
            "cov.json",
            "--out",
            "gs.json",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for side in ["s_ret", "s_adv", "g", "test"] {
        assert!(d.join(format!("gs.{side}.csv")).exists(), "{side}");
    }
    let o = cvp(d, &["exact-seq", "--gs", "gs.json", "--out", "seq.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let seq: Value =
        serde_json::from_str(&fs::read_to_string(d.join("seq.json")).unwrap()).unwrap();
    assert_eq!(seq["all_pass"], Value::Bool(true));

    let o = cvp(
        d,
        &[
            "cones",
            "--gs",
            "gs.json",
            "--out",
            "r.csv",
            "--hat-out",
            "hat.csv",
            "--dot",
            "r.dot",
            "--sections",
            "30",
            "--sections-out",
            "sec.csv",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = fs::read_to_string(d.join("r.csv")).unwrap();
    let hat = fs::read_to_string(d.join("hat.csv")).unwrap();
    assert!(r.starts_with("i,j\n") && hat.starts_with("i,j\n"));
    assert!(r.lines().count() >= hat.lines().count());
    assert!(fs::read_to_string(d.join("r.dot"))
        .unwrap()
        .starts_with("digraph"));
    assert!(fs::read_to_string(d.join("sec.csv"))
        .unwrap()
        .starts_with("source,time,point,offset\n"));
}

#[test]
fn artifacts_are_reproducible() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    gen(d, "slab.json", "12x4", &[]);
    write(d, "cov.json", COVERING);
    let run = |out: &str, threads: &str| {
        let o = cvp_with(
            d,
            ("CVP_THREADS", threads),
            &[
                "green",
                "--instance",
                "slab.json",
                "--covering",
                "cov.json",
                "--out",
                out,
            ],
        );
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    };
    run("a.json", "4");
    run("b.json", "4");
    run("c.json", "1");
    for side in ["s_ret", "s_adv", "g", "test"] {
        let a = fs::read(d.join(format!("a.{side}.csv"))).unwrap();
        assert_eq!(
            a,
            fs::read(d.join(format!("b.{side}.csv"))).unwrap(),
            "{side}"
        );
        assert_eq!(
            a,
            fs::read(d.join(format!("c.{side}.csv"))).unwrap(),
            "{side}"
        );
    }
    let strip = |name: &str| {
        let v: Value = serde_json::from_str(&fs::read_to_string(d.join(name)).unwrap()).unwrap();
        v["instance"].to_string() + &v["columns"].to_string()
    };
    assert_eq!(strip("a.json"), strip("c.json"));
}

#[test]
fn manifest_records_inputs() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let inst = gen(d, "slab.json", "12x4", &[]);
    let o = cvp(
        d,
        &[
            "--manifest",
            "m.json",
            "check-el",
            "--instance",
            "slab.json",
            "--test",
            "full",
        ],
    );
    let m: Value = serde_json::from_str(&fs::read_to_string(d.join("m.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "check-el");
    assert_eq!(m["exit_code"].as_i64().unwrap(), code(&o) as i64);
    let bytes = fs::read(&inst).unwrap();
    assert_eq!(
        m["inputs"][0]["bytes"].as_u64().unwrap(),
        bytes.len() as u64
    );
    let hex = m["inputs"][0]["sha256"].as_str().unwrap();
    assert_eq!(hex.len(), 64);
    assert!(hex.chars().all(|c| c.is_ascii_hexdigit()));

    // without --manifest it goes to stderr
    let o = cvp(d, &["check-el", "--instance", "slab.json"]);
    assert!(stderr(&o).contains("\"sha256\""));
}

#[test]
fn local_commands() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    gen(d, "slab.json", "12x4", &[]);
    write(d, "lens.json", LENS);
    write_jet(d, "v.json", 12, 0, 12);
    write_jet(d, "w.json", 12, 2, 5);

    let o = cvp(
        d,
        &[
            "delta",
            "--instance",
            "slab.json",
            "--jet",
            "v.json",
            "--out",
            "dv.json",
            "--oracle-step",
            "1e-4",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let dv: Vec<f64> =
        serde_json::from_str(&fs::read_to_string(d.join("dv.json")).unwrap()).unwrap();
    assert_eq!(dv.len(), 48 * 3);

    let o = cvp(
        d,
        &[
            "energy-check",
            "--instance",
            "slab.json",
            "--lens",
            "lens.json",
            "--jet",
            "v.json",
            "--t",
            "3.0",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let o = cvp(
        d,
        &[
            "hyperbolicity",
            "--instance",
            "slab.json",
            "--lens",
            "lens.json",
            "--trials",
            "4",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let o = cvp(
        d,
        &[
            "solve-local",
            "--instance",
            "slab.json",
            "--lens",
            "lens.json",
            "--inhom",
            "w.json",
            "--out",
            "sol.json",
            "--glue-out",
            "glued.json",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(d.join("sol.json").exists() && d.join("glued.json").exists());

    // a source on the first row is outside W
    write_jet(d, "early.json", 12, 0, 1);
    let o = cvp(
        d,
        &[
            "solve-local",
            "--instance",
            "slab.json",
            "--lens",
            "lens.json",
            "--inhom",
            "early.json",
            "--out",
            "x.json",
        ],
    );
    assert_eq!(code(&o), 1);
    assert!(
        stderr(&o).contains("outside W") && stderr(&o).contains("\"sha256\""),
        "{}",
        stderr(&o)
    );
}

#[test]
fn global_glue_command() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    gen(d, "slab.json", "15x4", &[]);
    write(d, "cov.json", COVERING);
    write_jet(d, "w.json", 15, 4, 7);
    let o = cvp(
        d,
        &[
            "glue",
            "--instance",
            "slab.json",
            "--covering",
            "cov.json",
            "--inhom",
            "w.json",
            "--out",
            "v.json",
            "--trace",
            "t.json",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let trace: Value =
        serde_json::from_str(&fs::read_to_string(d.join("t.json")).unwrap()).unwrap();
    assert!(trace["trace"]["rounds"].as_array().unwrap().len() >= 2);

    write(
        d,
        "wide.json",
        r#"{"height": 5.0, "delta": 1.5, "grid_count": 11, "stride": 4.0}"#,
    );
    let o = cvp(
        d,
        &[
            "glue",
            "--instance",
            "slab.json",
            "--covering",
            "wide.json",
            "--inhom",
            "w.json",
            "--out",
            "v2.json",
        ],
    );
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("covering gap"), "{}", stderr(&o));
}
