use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"{
    "problem": {"kind": "example1", "dim": 4},
    "solvers": [{"solver": {"kind": "sgd"}}, {"solver": {"kind": "eta-vs-apm-prox", "eta": 1}}],
    "replications": 2, "budget": 400, "seed": 5
}"#;

fn vsapm(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_vsapm"));
    cmd.args(args).env_remove("VSAPM_OUT_DIR");
    if let Some(dir) = env_out {
        cmd.env("VSAPM_OUT_DIR", dir);
    }
    cmd.output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn listing(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn selftest_passes() {
    let o = vsapm(&["selftest"], None);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 5, "{text}");
}

#[test]
fn solve_writes_reproducible_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", SMALL);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let o = vsapm(&["solve", "--config", &cfg, "--out", a.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("eta-vs-apm-prox(eta=1)"));
    let o = vsapm(&["solve", "--config", &cfg], Some(&b));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let (la, lb) = (listing(&a), listing(&b));
    assert_eq!(la.len(), 7);
    assert_eq!(la, lb);
}

#[test]
fn suites_get_one_directory_per_experiment() {
    let tmp = tempfile::tempdir().unwrap();
    let suite = format!(
        r#"{{"name": "s", "experiments": [{}, {}]}}"#,
        SMALL.replacen('{', r#"{"name": "first","#, 1),
        SMALL.replacen('{', r#"{"name": "second","#, 1)
    );
    let cfg = write(tmp.path(), "s.json", &suite);
    let out = tmp.path().join("out");
    let o = vsapm(&["solve", "--config", &cfg, "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(out.join("first/summary.json").exists());
    assert!(out.join("second/summary.json").exists());
}

#[test]
fn invalid_input_exits_with_1() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = write(tmp.path(), "e.json", r#"{"problem": {"kind": "example1"}, "solvers": []}"#);
    let o = vsapm(&["solve", "--config", &empty], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("`solvers`"), "{}", stderr(&o));

    let garbled = write(tmp.path(), "g.json", "{not json");
    assert_eq!(vsapm(&["compare", "--config", &garbled], None).status.code(), Some(1));
    assert_eq!(vsapm(&["solve"], None).status.code(), Some(1));
    assert_eq!(vsapm(&["frobnicate"], None).status.code(), Some(1));
    let cfg = write(tmp.path(), "c.json", SMALL);
    assert_eq!(vsapm(&["reference", "--config", &cfg, "--tol", "0"], None).status.code(), Some(1));
    assert_eq!(vsapm(&["--help"], None).status.code(), Some(0));
}

#[test]
fn runtime_failures_exit_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.json");
    assert_eq!(
        vsapm(&["solve", "--config", missing.to_str().unwrap()], None).status.code(),
        Some(2)
    );
    let cfg = write(tmp.path(), "c.json", SMALL);
    let blocker = write(tmp.path(), "file", "");
    let o = vsapm(&["solve", "--config", &cfg, "--out", &blocker], None);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn compare_from_config_and_from_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", SMALL);
    let o = vsapm(&["compare", "--config", &cfg, "--csv"], None);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = stdout(&o);
    assert!(csv.starts_with("label,mean_dist_sq,"));
    assert_eq!(csv.lines().count(), 3);

    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    vsapm(&["solve", "--config", &cfg, "--out", a.to_str().unwrap()], None);
    let other = write(tmp.path(), "d.json", &SMALL.replace(r#""dim": 4"#, r#""dim": 4, "seed": 8"#));
    vsapm(&["solve", "--config", &other, "--out", b.to_str().unwrap()], None);
    let sa = a.join("summary.json");
    let sb = b.join("summary.json");
    let o = vsapm(&["compare", "--report", sa.to_str().unwrap(), sa.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("wins over 2 paired replications"));
    let o = vsapm(&["compare", "--report", sa.to_str().unwrap(), sb.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("different problems"));
}

#[test]
fn reference_output_can_be_loaded_back() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", SMALL);
    let out = tmp.path().join("ref");
    let o = vsapm(&["reference", "--config", &cfg, "--tol", "1e-9", "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("\"x_star\""));
    let path = out.join("reference.json");
    let with_ref = SMALL.replacen(
        '{',
        &format!(r#"{{"reference": {{"load": {:?}}},"#, path.to_str().unwrap()),
        1,
    );
    let cfg2 = write(tmp.path(), "c2.json", &with_ref);
    let o = vsapm(&["compare", "--config", &cfg2], None);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}
