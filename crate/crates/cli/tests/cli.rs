use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_blochnoise"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn manifest(out: &Path) -> serde_json::Value {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    serde_json::from_str(&fs::read_to_string(PathBuf::from(name)).unwrap()).unwrap()
}

#[test]
fn transfer_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path(), "t.csv");
    let o = run(&[
        "transfer",
        "--psi",
        "3.141592653589793",
        "--x-min",
        "0.5",
        "--x-max",
        "3",
        "--points",
        "6",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data[0], "x,t_yy,t_zz,t_yz");
    assert_eq!(data.len(), 7);
    let last: Vec<f64> = data[6].split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(last[0], 3.0);
    assert!(last[2].abs() < 1e-12, "T̃_zz(π, 3) should vanish: {}", last[2]);
    let m = manifest(&out);
    assert_eq!(m["subcommand"], "transfer");
    assert_eq!(m["parameters"]["points"], 6);
}

#[test]
fn bad_arguments_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path(), "t.csv");
    let o = run(&["transfer", "--psi", "1", "--x-min", "2", "--x-max", "1", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    assert!(!out.exists());

    let o = run(&["composite-map", "--kind", "bb1", "--f-r", "1e3", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["composite-map", "--kind", "nonsense", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn composite_map_units() {
    let dir = tempfile::tempdir().unwrap();
    let norm = path(dir.path(), "n.csv");
    let abs = path(dir.path(), "a.csv");
    assert!(run(&["composite-map", "--kind", "corpse", "--grid", "5", "--out", s(&norm)]).status.success());
    assert!(run(&[
        "composite-map",
        "--kind",
        "corpse",
        "--grid",
        "5",
        "--f-r",
        "1000",
        "--l0-dbc",
        "-120",
        "--out",
        s(&abs)
    ])
    .status
    .success());
    let rows = |p: &Path| -> Vec<Vec<f64>> {
        fs::read_to_string(p)
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with('#'))
            .skip(1)
            .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
            .collect()
    };
    let (n, a) = (rows(&norm), rows(&abs));
    assert_eq!(n.len(), 25);
    for (rn, ra) in n.iter().zip(&a) {
        assert!((ra[2] - rn[2] * 1e-9).abs() <= 1e-12 * rn[2].abs().max(1e-30) * 1e-9 + 1e-40);
        assert!((ra[3] - rn[3] * 1e-9).abs() <= 1e-12 * rn[3] * 1e-9);
    }
}

#[test]
fn sequence_report_and_spectrum_restriction() {
    let dir = tempfile::tempdir().unwrap();
    let seq = path(dir.path(), "seq.json");
    fs::write(&seq, r#"{"f_r_hz": 1000.0, "builder": {"kind": "spin_echo", "n": 2, "tau_s": 0.001}}"#).unwrap();
    let out = path(dir.path(), "r.json");
    let o = run(&["sequence", "--file", s(&seq), "--l0", "1e-12", "--ji", "0,1,0", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(r["steps"].as_array().unwrap().len(), 2);
    let avg = r["final"]["average_infidelity"].as_f64().unwrap();
    let expected = 2.0 * std::f64::consts::PI.powi(2) * 1000.0 * 1e-12 / 3.0;
    assert!((avg / expected - 1.0).abs() < 1e-12);
    assert!(manifest(&out)["inputs"][s(&seq)].as_str().unwrap().len() == 64);

    let table = path(dir.path(), "sheet.csv");
    fs::write(&table, "f_hz,l_dbc_hz\n10,-90\n1000,-110\n1e6,-140\n").unwrap();
    let o = run(&["sequence", "--file", s(&seq), "--spectrum", s(&table)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("white"));

    let single = path(dir.path(), "single.json");
    fs::write(&single, r#"{"f_r_hz": 1000.0, "steps": [{"phi_rad": 0.0, "psi_rad": 3.141592653589793}]}"#).unwrap();
    let o = run(&["sequence", "--file", s(&single), "--spectrum", s(&table)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(r["final"]["infidelity"].as_f64().unwrap() > 0.0);
}

#[test]
fn spectrum_convert_values() {
    let dir = tempfile::tempdir().unwrap();
    let input = path(dir.path(), "in.csv");
    let out = path(dir.path(), "out.csv");
    fs::write(&input, "f_hz,l_dbc_hz\n100,-100\n10000,-130\n").unwrap();
    assert!(run(&["spectrum-convert", "--in", s(&input), "--out", s(&out)]).status.success());
    let text = fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "f_hz,l_rad2_hz");
    let v: f64 = rows[2].split(',').nth(1).unwrap().parse().unwrap();
    assert!((v / 1e-13 - 1.0).abs() < 1e-12);
}

#[test]
fn static_order_refines_bb1_sweet_spot() {
    let o = run(&["static-order", "--kind", "bb1", "--phi-i", "2.48", "--which", "amplitude", "--refine"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["order"], 10);
    let phi = r["phi_i"].as_f64().unwrap() / std::f64::consts::PI;
    assert!((phi - 0.79).abs() < 0.005, "{phi}");

    let o = run(&["static-order", "--kind", "bb1", "--phi-i", "1.5707963267948966", "--which", "detuning"]);
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["order"], "exact_cancellation");
}

#[test]
fn replay_reproduces_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let first = path(dir.path(), "a.json");
    let second = path(dir.path(), "b.json");
    let o = run(&[
        "mc-verify",
        "--target",
        "white",
        "--kind",
        "corpse",
        "--samples",
        "1000",
        "--seed",
        "3",
        "--workers",
        "2",
        "--out",
        s(&first),
    ]);
    assert!(o.status.code().is_some_and(|c| c <= 1));
    let m = manifest(&first);
    assert!(m["args"].as_array().unwrap().iter().all(|a| a != "--workers"));
    assert_eq!(m["seed"], 3);
    let mut name = first.as_os_str().to_owned();
    name.push(".manifest.json");
    let o = bin().args(["replay", "--manifest"]).arg(&name).args(["--out", s(&second)]).output().unwrap();
    assert!(o.status.code().is_some_and(|c| c <= 1), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(&first).unwrap(), fs::read(&second).unwrap());
}

#[test]
fn mc_verify_stdout_is_deterministic() {
    let args = [
        "mc-verify",
        "--target",
        "tone",
        "--psi",
        "6.283185307179586",
        "--x",
        "2",
        "--samples",
        "2000",
        "--seed",
        "11",
    ];
    let a = run(&args);
    let b = bin().args(args).args(["--workers", "3"]).output().unwrap();
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let r: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(r["pass"], true);
    assert_eq!(r["entries"].as_array().unwrap().len(), 6);
}

#[test]
fn mc_verify_requires_tone_parameters() {
    let o = run(&["mc-verify", "--target", "tone", "--psi", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--x"));
}
