use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &str = r#"
seed = 5
pipeline = ["forward", "measure", "symbol-map", "reconstruct"]

[grid]
n = 20
fine_factor = 2

[conductivity]
phantom = "two-bumps"

[boundary]
functions = ["affine:0,0.1,0.1", "affine:0.1,0.1,-0.1"]

[measure]
model = "stochastic"
a = 0.1
t0 = 0.01
delta_omega = 62831.85307179586
delta_z = 0.1
realizations = 200
omega = 62831.85307179586
scaling = "physical"

[symbol]
kind = "real"
directions = 16
"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_thermal-eit"));
    for (k, _) in std::env::vars() {
        if k.starts_with("THERMAL_EIT_") {
            c.env_remove(k);
        }
    }
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("experiment.toml");
    std::fs::write(&p, body).unwrap();
    p
}

fn manifest(out: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap()
}

fn checksums(m: &Value) -> Vec<(String, String)> {
    m["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| {
            (
                f["path"].as_str().unwrap().to_owned(),
                f["sha256"].as_str().unwrap().to_owned(),
            )
        })
        .collect()
}

fn ok(o: &Output) {
    assert!(
        o.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn empty_pipeline_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seed = 1\npipeline = []\n");
    let o = run(&["run", cfg.to_str().unwrap()]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("pipeline"), "{err}");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn validation_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let body = SMALL.replace("a = 0.1", "a = 0.01");
    let cfg = write_config(dir.path(), &body);
    let o = run(&["run", cfg.to_str().unwrap()]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("measure.a"), "{err}");
}

#[test]
fn reruns_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&run(&[
        "run",
        cfg.to_str().unwrap(),
        "--out",
        a.to_str().unwrap(),
    ]));
    ok(&run(&[
        "--threads",
        "1",
        "run",
        cfg.to_str().unwrap(),
        "--out",
        b.to_str().unwrap(),
    ]));
    let (ma, mb) = (manifest(&a), manifest(&b));
    let (ca, cb) = (checksums(&ma), checksums(&mb));
    assert_eq!(ca, cb);
    for name in [
        "measure/H_1.csv",
        "reconstruct/sigma_re.csv",
        "reconstruct/iterations.csv",
        "symbol-map/condition_log10.pgm",
    ] {
        assert!(ca.iter().any(|(p, _)| p == name), "{name} missing");
    }
    assert_eq!(ma["seed"], 5);

    // A different seed changes the stochastic data.
    let c = dir.path().join("c");
    ok(&run(&[
        "--seed",
        "6",
        "run",
        cfg.to_str().unwrap(),
        "--out",
        c.to_str().unwrap(),
    ]));
    let cc = checksums(&manifest(&c));
    let h1 = |v: &[(String, String)]| {
        v.iter()
            .find(|(p, _)| p == "measure/H_1.csv")
            .unwrap()
            .1
            .clone()
    };
    assert_ne!(h1(&ca), h1(&cc));
}

#[test]
fn stages_are_cached_and_manifest_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    ok(&run(&["run", cfg.to_str().unwrap()]));
    let first = manifest(&out);
    assert!(first["stages"]
        .as_array()
        .unwrap()
        .iter()
        .all(|s| s["cached"] == false));

    ok(&run(&["run", cfg.to_str().unwrap()]));
    let second = manifest(&out);
    assert!(second["stages"]
        .as_array()
        .unwrap()
        .iter()
        .all(|s| s["cached"] == true));
    assert_eq!(checksums(&first), checksums(&second));

    // Changing only reconstruction settings reuses the measurements.
    let body = SMALL.replace("[symbol]", "[reconstruct]\nkind = \"real\"\nstep_tol = 0.05\nmax_iters = 100\nband = 0.5\narmijo = { c = 1e-4, beta = 0.5, max_backtracks = 30 }\n\n[symbol]");
    let cfg2 = write_config(dir.path(), &body);
    ok(&run(&["run", cfg2.to_str().unwrap()]));
    let third = manifest(&out);
    let cached = |m: &Value, stage: &str| {
        m["stages"]
            .as_array()
            .unwrap()
            .iter()
            .find(|s| s["stage"] == stage)
            .unwrap()["cached"]
            .clone()
    };
    assert_eq!(cached(&third, "measure"), true);
    assert_eq!(cached(&third, "reconstruct"), false);

    // The resolved config stored in the manifest reproduces the outputs.
    let replay = dir.path().join("replay");
    ok(&run(&[
        "run",
        out.join("manifest.json").to_str().unwrap(),
        "--out",
        replay.to_str().unwrap(),
    ]));
    assert_eq!(checksums(&manifest(&replay)), checksums(&third));
}

#[test]
fn subcommands_and_environment() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&bin()
        .args(["measure", "--n", "16", "--a", "0.5", "--model", "det"])
        .env("THERMAL_EIT_OUT", &data)
        .env("THERMAL_EIT_SEED", "9")
        .output()
        .unwrap());
    let m = manifest(&data);
    assert_eq!(m["seed"], 9);
    assert!(data.join("measure/H_2.csv").is_file());

    let rec = dir.path().join("rec");
    ok(&run(&[
        "reconstruct",
        "--n",
        "16",
        "--data",
        data.join("measure").to_str().unwrap(),
        "--out",
        rec.to_str().unwrap(),
    ]));
    let log = std::fs::read_to_string(rec.join("reconstruct/iterations.csv")).unwrap();
    assert!(log.starts_with("iter,residual_norm,step_norm,backtracks\n"));
    assert!(log.lines().count() >= 2);

    let sym = dir.path().join("sym");
    ok(&run(&[
        "symbol-map",
        "--n",
        "12",
        "--phantom",
        "complex-default",
        "--bc",
        "gt1",
        "--bc",
        "ht1",
        "--bc",
        "gt2",
        "--kind",
        "complex",
        "--directions",
        "8",
        "--out",
        sym.to_str().unwrap(),
    ]));
    let pgm = std::fs::read(sym.join("symbol-map/condition_log10.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n12 12\n255\n"));

    let fwd = dir.path().join("fwd");
    ok(&run(&[
        "forward",
        "--n",
        "8",
        "--phantom",
        "constant:1.0",
        "--bc",
        "g1",
        "--bc",
        "h1",
        "--out",
        fwd.to_str().unwrap(),
    ]));
    let csv = std::fs::read_to_string(fwd.join("forward/u_1_re.csv")).unwrap();
    assert!(csv.starts_with("#n=16,L=10,field=u1_re,units=V\n"));
}
