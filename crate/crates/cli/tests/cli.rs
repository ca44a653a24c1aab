use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

fn qtewma() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qtewma"))
}

fn run(args: &[&str]) -> Output {
    qtewma().args(args).output().expect("binary runs")
}

fn run_with_stdin(args: &[&str], input: &[u8]) -> Output {
    let mut child = qtewma()
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("binary runs");
    let mut stdin = child.stdin.take().unwrap();
    let input = input.to_vec();
    // The monitor stops reading at detection, so the write may hit a closed pipe.
    let writer = std::thread::spawn(move || {
        let _ = stdin.write_all(&input);
    });
    let out = child.wait_with_output().unwrap();
    writer.join().unwrap();
    out
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn calibrate_small(dir: &Path, name: &str, n: usize) -> PathBuf {
    let out = dir.join(name);
    let n = n.to_string();
    let status = run(&[
        "calibrate", "--arl0", "100", "--k", "8", "--n", &n, "--replicates", "10000", "--length", "300",
        "--seed", "5", "--out", path_str(&out),
    ]);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    out
}

fn write_spec(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

const TRAIN_SPEC: &str = r#"
d = 2
length = 64
seed = 1

[phi0]
kind = "uniform"
low = [0.0, 0.0]
high = [1.0, 1.0]
"#;

const SHIFTED_SPEC: &str = r#"
d = 2
length = 2000
seed = 2

[phi0]
kind = "uniform"
low = [0.0, 0.0]
high = [1.0, 1.0]

[change]
tau = 100
kind = "law"

[change.phi1]
kind = "uniform"
low = [0.0, 0.0]
high = [0.3, 0.3]
"#;

#[test]
fn calibration_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = std::fs::read(calibrate_small(dir.path(), "a.json", 64)).unwrap();
    let b = std::fs::read(calibrate_small(dir.path(), "b.json", 64)).unwrap();
    assert_eq!(a, b);
    let one_thread = dir.path().join("c.json");
    let st = run(&[
        "--threads", "1", "calibrate", "--arl0", "100", "--k", "8", "--n", "64", "--replicates", "10000",
        "--length", "300", "--seed", "5", "--out", path_str(&one_thread),
    ]);
    assert!(st.status.success());
    assert_eq!(a, std::fs::read(one_thread).unwrap());
}

#[test]
fn fit_then_monitor_detects_a_change() {
    let dir = tempfile::tempdir().unwrap();
    let train_spec = write_spec(dir.path(), "train.toml", TRAIN_SPEC);
    let train_csv = dir.path().join("train.csv");
    let st = run(&["simulate", "--spec", path_str(&train_spec), "--out", path_str(&train_csv)]);
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let partition = dir.path().join("partition.json");
    let st = run(&["fit", "--train", path_str(&train_csv), "--k", "8", "--seed", "3", "--out", path_str(&partition)]);
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let table = calibrate_small(dir.path(), "table.json", 64);

    let stream_spec = write_spec(dir.path(), "stream.toml", SHIFTED_SPEC);
    let stream = run(&["simulate", "--spec", path_str(&stream_spec)]);
    assert!(stream.status.success());
    let mut input = b"x0,x1\n".to_vec();
    input.extend_from_slice(&stream.stdout);

    let out = run_with_stdin(&["monitor", "--table", path_str(&table), "--partition", path_str(&partition)], &input);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,T_t,h_t,flag");
    let last = lines.last().unwrap();
    let t_star: u64 = last.strip_prefix("DETECTED t*=").expect("detection line").parse().unwrap();
    assert_eq!(lines.len() as u64, t_star + 2);
    for (i, line) in lines[1..lines.len() - 1].iter().enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 4);
        assert_eq!(fields[0].parse::<u64>().unwrap(), i as u64 + 1);
        let flag = if i as u64 + 1 == t_star { "1" } else { "0" };
        assert_eq!(fields[3], flag);
    }
}

#[test]
fn missing_table_has_its_own_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_with_stdin(
        &["monitor", "--table", path_str(&dir.path().join("nope.json")), "--partition", "p.json"],
        b"",
    );
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn mismatched_table_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let train_spec = write_spec(dir.path(), "train.toml", TRAIN_SPEC);
    let train_csv = dir.path().join("train.csv");
    assert!(run(&["simulate", "--spec", path_str(&train_spec), "--out", path_str(&train_csv)]).status.success());
    let partition = dir.path().join("partition.json");
    assert!(run(&["fit", "--train", path_str(&train_csv), "--k", "8", "--out", path_str(&partition)]).status.success());
    // Calibrated for N = 128, partition has N = 64.
    let table = calibrate_small(dir.path(), "table.json", 128);
    let out = run_with_stdin(&["monitor", "--table", path_str(&table), "--partition", path_str(&partition)], b"0.5,0.5\n");
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn bad_input_and_unknown_flags() {
    assert_eq!(run(&["calibrate", "--bogus"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = write_spec(dir.path(), "bad.toml", "d = 0\nlength = 5\n[phi0]\nkind = \"uniform\"\nlow = []\nhigh = []\n");
    assert_eq!(run(&["simulate", "--spec", path_str(&bad)]).status.code(), Some(1));
    let missing = run(&["simulate", "--spec", path_str(&dir.path().join("absent.toml"))]);
    assert_eq!(missing.status.code(), Some(5));
}

#[test]
fn bench_reports_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_spec(
        dir.path(),
        "exp.toml",
        r#"
name = "smoke"
seed = 9
runs = 120
n_train = 64
k = 8
arl0 = 50.0

[thresholds]
replicates = 10000
length = 400

[stream]
d = 2
length = 300

[stream.phi0]
kind = "gaussian"
mean = [0.0, 0.0]
covariance = "identity"
"#,
    );
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for out in [&a, &b] {
        let st = run(&["bench", "--config", path_str(&config), "--out", path_str(out)]);
        assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    }
    let a = std::fs::read_to_string(a).unwrap();
    assert_eq!(a, std::fs::read_to_string(b).unwrap());
    assert!(a.contains("\"deviations\""));
    assert!(a.contains("\"empirical_arl0\""));
}
