use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dyson_blocks_cli::config::RunConfig;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dyson-blocks"));
    cmd.env_remove("DYSON_BLOCKS_THREADS");
    cmd
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn solve_scalar_semicircle_at_2i() {
    let o = run(&["--config", configs().join("solve_scalar.json").to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("re_z,im_z,re_g,im_g,residual,iterations,converged"));
    let f: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(lines.next(), None);
    assert_eq!((f[0], f[1]), ("0.0", "2.0"));
    let (re, im): (f64, f64) = (f[2].parse().unwrap(), f[3].parse().unwrap());
    assert_eq!(re, 0.0);
    // g(2i) = (2i − √(−8))/2 = −i(√2 − 1).
    assert!((im + (2f64.sqrt() - 1.0)).abs() < 1e-10, "{im}");
    assert_eq!(f[6], "true");
}

#[test]
fn missing_model_is_a_config_error_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "bad.json", r#"{ "command": "rate", "seed": 1 }"#);
    let o = run(&["--config", p.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("`model`"), "{}", stderr(&o));

    let p = write(dir.path(), "bad2.json", r#"{ "command": "solve", "z": [[0, 1]] }"#);
    let o = run(&["--config", p.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("`model`"), "{}", stderr(&o));
}

#[test]
fn unknown_keys_and_bad_syntax_are_rejected_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        r#"{ "command": "solve", "eta": { "type": "scalar", "t": 1 }, "z": [[0, 1]], "tolerance": 1 }"#,
        r#"{ "command": "solve", "eta": { "type": "scalar", "t": 1, "q": 2 }, "z": [[0, 1]] }"#,
        r#"{ "command": "solve", "eta": { "type": "scalar", "t": 1 }, "z": [[0, 1]], "solver": { "tol": 1, "x": 0 } }"#,
        "{ \"command\": \"solve\",\n  \"eta\": ",
        r#"{ "command": "fly" }"#,
    ];
    for (k, text) in cases.iter().enumerate() {
        let p = write(dir.path(), &format!("c{k}.json"), text);
        let o = run(&["--config", p.to_str().unwrap()]);
        assert_eq!(code(&o), 2, "{text}: {}", stderr(&o));
        assert!(stderr(&o).contains("line"), "{}", stderr(&o));
    }
    let p = write(dir.path(), "lower.json", r#"{ "command": "solve", "eta": { "type": "scalar", "t": 1 }, "z": [[0, -1]] }"#);
    assert_eq!(code(&run(&["--config", p.to_str().unwrap()])), 2);
}

#[test]
fn missing_config_file_is_an_io_error() {
    let o = run(&["--config", "/nonexistent/run.json"]);
    assert_eq!(code(&o), 4);
}

#[test]
fn non_convergence_exits_3_after_writing() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "slow.json",
        r#"{ "command": "solve", "eta": { "type": "scalar", "t": 1 }, "z": [[0.1, 1e-6]],
             "solver": { "max_iter": 2, "tol": 1e-15 } }"#,
    );
    let out = dir.path().join("g.csv");
    let o = run(&["--config", p.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.lines().nth(1).unwrap().ends_with(",2,false"), "{text}");
}

#[test]
fn rate_csv_layout() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "rate.json",
        r#"{ "command": "rate",
             "model": { "model": { "type": "hermitized_iid" }, "d": 1, "n": 4, "law": { "kind": "rademacher" } },
             "n_grid": [4, 8, 16], "trials": 20, "seed": 5 }"#,
    );
    let out = dir.path().join("rate.csv");
    let o = run(&["--config", p.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "N,error,stderr");
    for (line, n) in lines[1..4].iter().zip([4, 8, 16]) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f.len(), 3);
        assert_eq!(f[0], n.to_string());
        assert!(f[1].parse::<f64>().unwrap() >= 0.0);
        assert!(f[2].parse::<f64>().unwrap() >= 0.0);
    }
    assert_eq!(lines[4], "slope,slope_stderr");
    assert_eq!(lines[5].split(',').count(), 2);
    assert_eq!(lines.len(), 6);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("rate.csv.summary.json")).unwrap()).unwrap();
    assert_eq!(summary["report"]["n_grid"], serde_json::json!([4, 8, 16]));
}

#[test]
fn print_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    for entry in std::fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let original = RunConfig::load(&path).unwrap();
        let o = run(&["--config", path.to_str().unwrap(), "--print-config"]);
        assert_eq!(code(&o), 0, "{}: {}", path.display(), stderr(&o));
        let echoed = write(dir.path(), "echo.json", &String::from_utf8(o.stdout).unwrap());
        assert_eq!(RunConfig::load(&echoed).unwrap(), original, "{}", path.display());
    }
}

#[test]
fn overrides_apply_to_the_printed_config() {
    let o = run(&["--config", configs().join("rate.json").to_str().unwrap(), "--seed", "9", "--out", "x.csv", "--print-config"]);
    let cfg = RunConfig::parse(&String::from_utf8(o.stdout).unwrap()).unwrap();
    match cfg {
        RunConfig::Rate { seed, output, .. } => {
            assert_eq!(seed, Some(9));
            assert_eq!(output, Some(PathBuf::from("x.csv")));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn outputs_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "u.json",
        r#"{ "command": "universality",
             "model": { "model": { "type": "wigner_blocks" }, "d": 2, "n": 12 },
             "law_a": { "kind": "rademacher" }, "law_b": { "kind": "real_gaussian" },
             "z": [0.3, 0.7], "trials": 16, "seed": 2 }"#,
    );
    let mut outputs = Vec::new();
    for (k, threads) in ["1", "3", "8"].iter().enumerate() {
        let out = dir.path().join(format!("u{k}.csv"));
        let mut cmd = bin();
        cmd.args(["--config", p.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        // Alternate between the flag and the environment fallback.
        if k % 2 == 0 {
            cmd.args(["--threads", threads]);
        } else {
            cmd.env("DYSON_BLOCKS_THREADS", threads);
        }
        let o = cmd.output().unwrap();
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let summary = std::fs::read(dir.path().join(format!("u{k}.csv.summary.json"))).unwrap();
        outputs.push((std::fs::read(&out).unwrap(), summary));
    }
    assert!(outputs.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn sample_matrix_dump_reads_back() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "s.json",
        r#"{ "command": "sample", "format": "matrix", "trials": 2,
             "model": { "model": { "type": "hermitized_iid" }, "d": 2, "n": 3 } }"#,
    );
    let out = dir.path().join("m.bin");
    let o = run(&["--config", p.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "4"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let bytes = std::fs::read(&out).unwrap();
    assert_eq!(bytes.len(), 2 * (8 + 16 * 36));
    let mut r = bytes.as_slice();
    let spec = dyson_blocks::sampler::ModelSpec::new(
        dyson_blocks::sampler::Model::HermitizedIid {},
        2,
        3,
        Default::default(),
        4,
    );
    for t in 0..2 {
        let m = dyson_blocks::sampler::read_matrix_binary(&mut r).unwrap();
        assert_eq!(m, dyson_blocks::sampler::sample(&spec, t).unwrap());
    }
}

#[test]
fn density_header_and_mass() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "d.json",
        r#"{ "command": "density", "eta": { "type": "scalar", "t": 1 },
             "grid": { "from": -2.5, "to": 2.5, "step": 0.01, "eps": 1e-4 } }"#,
    );
    let o = run(&["--config", p.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    let meta = lines.next().unwrap();
    assert!(meta.starts_with("# eps=0.0001,step=0.01,"), "{meta}");
    assert_eq!(lines.next(), Some("x,rho"));
    let pts: Vec<(f64, f64)> = lines
        .map(|l| {
            let (a, b) = l.split_once(',').unwrap();
            (a.parse().unwrap(), b.parse().unwrap())
        })
        .collect();
    let mass: f64 = pts.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum();
    assert!((mass - 1.0).abs() < 1e-3, "{mass}");
    // ρ(0) = 1/π for the unit semicircle.
    let mid = pts.iter().find(|p| p.0.abs() < 1e-12).unwrap();
    assert!((mid.1 - std::f64::consts::FRAC_1_PI).abs() < 1e-3);
}
