use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const CORPUS: &str = concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/../core/data/reference_corpus.csv"
);

fn qmdp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qmdp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn out_dir(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn ingest_bundled_corpus_is_clean() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_dir(tmp.path(), "ingest");
    let o = qmdp(&["ingest", "--corpus", CORPUS, "--out", &out]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("170 entries, 15 distinct (s, a, s') triples, 0 violations"));
    let verification = fs::read_to_string(tmp.path().join("ingest/verification.csv")).unwrap();
    assert_eq!(verification.lines().count(), 171);
    assert!(!verification.contains("violation"));
    let normalized = fs::read_to_string(tmp.path().join("ingest/corpus.csv")).unwrap();
    assert_eq!(normalized, fs::read_to_string(CORPUS).unwrap());
}

#[test]
fn ingest_flags_corrupted_entry_and_empty_file() {
    let tmp = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(CORPUS).unwrap();
    let bad = text.replace(
        "T-151,1000111111111111101010000",
        "T-151,0111111111111111101010000",
    );
    assert_ne!(bad, text);
    let bad_path = tmp.path().join("bad.csv");
    fs::write(&bad_path, bad).unwrap();
    let o = qmdp(&[
        "ingest",
        "--corpus",
        bad_path.to_str().unwrap(),
        "--out",
        &out_dir(tmp.path(), "bad"),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("T-151"));
    let report = fs::read_to_string(tmp.path().join("bad/verification.csv")).unwrap();
    assert_eq!(report.matches(",violation,").count(), 1);

    let empty = tmp.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    let o = qmdp(&[
        "ingest",
        "--corpus",
        empty.to_str().unwrap(),
        "--out",
        &out_dir(tmp.path(), "e"),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("corpus is empty"));
}

#[test]
fn static_and_dynamic_runs_compare_equal() {
    let tmp = tempfile::tempdir().unwrap();
    for mode in ["dynamic", "static"] {
        let o = qmdp(&[
            "run",
            "--mode",
            mode,
            "--steps",
            "2",
            "--analytic",
            "--out",
            &out_dir(tmp.path(), mode),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let a = tmp.path().join("dynamic/distribution.csv");
    let b = tmp.path().join("static/distribution.csv");
    let o = qmdp(&[
        "compare",
        a.to_str().unwrap(),
        b.to_str().unwrap(),
        "--out",
        &out_dir(tmp.path(), "cmp"),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let tvd: f64 = stdout(&o)
        .lines()
        .next()
        .and_then(|l| l.strip_prefix("tvd "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(tvd <= 1e-9, "tvd {tvd}");

    let o = qmdp(&[
        "compare",
        a.to_str().unwrap(),
        a.to_str().unwrap(),
        "--out",
        &out_dir(tmp.path(), "self"),
    ]);
    assert!(stdout(&o).starts_with("tvd 0e0"));
}

#[test]
fn disjoint_distributions_have_unit_distance() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a.csv");
    let b = tmp.path().join("b.csv");
    fs::write(&a, "bits,value\n01,10\n").unwrap();
    fs::write(&b, "bits,value\n10,0.5\n").unwrap();
    let o = qmdp(&[
        "compare",
        a.to_str().unwrap(),
        b.to_str().unwrap(),
        "--out",
        &out_dir(tmp.path(), "c"),
    ]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("tvd 1e0"));
}

#[test]
fn analytic_run_groups_by_return() {
    let tmp = tempfile::tempdir().unwrap();
    let o = qmdp(&[
        "run",
        "--corpus",
        CORPUS,
        "--out",
        &out_dir(tmp.path(), "r"),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let groups = fs::read_to_string(tmp.path().join("r/groups.csv")).unwrap();
    let mut lines = groups.lines();
    assert_eq!(lines.next(), Some("return,id,bits,probability"));
    let first_return = lines.next().unwrap().split(',').next().unwrap();
    assert_eq!(first_return, "1001");
    assert!(groups.contains("1000,T-151,1000111111111111101010000,"));
    let trajectories = fs::read_to_string(tmp.path().join("r/trajectories.csv")).unwrap();
    assert!(trajectories.starts_with("id,bits,return,step0,step1,step2,probability\n"));
    let corpus = fs::read_to_string(CORPUS).unwrap();
    let labelled = trajectories.lines().filter(|l| l.starts_with("T-")).count();
    assert_eq!(labelled, corpus.lines().count() - 1);
}

#[test]
fn sampled_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    for name in ["a", "b"] {
        let o = qmdp(&[
            "run",
            "--steps",
            "3",
            "--shots",
            "2000",
            "--seed",
            "7",
            "--format",
            "json",
            "--out",
            &out_dir(tmp.path(), name),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for file in [
        "distribution.json",
        "trajectories.json",
        "groups.json",
        "visitation.json",
    ] {
        let a = fs::read(tmp.path().join("a").join(file)).unwrap();
        let b = fs::read(tmp.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file}");
    }
}

#[test]
fn grover_max_return_scenario() {
    let tmp = tempfile::tempdir().unwrap();
    let o = qmdp(&[
        "grover",
        "--return",
        "1000",
        "--start",
        "00",
        "--shots",
        "4096",
        "--seed",
        "1",
        "--corpus",
        CORPUS,
        "--out",
        &out_dir(tmp.path(), "g"),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = stdout(&o);
    assert!(summary.contains("witnesses: T-143 T-151"), "{summary}");
    assert!(
        summary.contains("policy: s0->a0 s2->a1 s3->a1"),
        "{summary}"
    );
    let policy = fs::read_to_string(tmp.path().join("g/policy.csv")).unwrap();
    assert_eq!(
        policy,
        "state,action,alternatives\ns0,a0,\ns2,a1,\ns3,a1,a0\n"
    );
    let curve = fs::read_to_string(tmp.path().join("g/success_curve.csv")).unwrap();
    assert!(curve.starts_with("iteration,analytic,sampled\n"));
    for file in ["marked.csv", "distribution.csv", "plan.json", "summary.txt"] {
        assert!(tmp.path().join("g").join(file).exists(), "{file}");
    }
}

#[test]
fn unsatisfiable_grover_target_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let o = qmdp(&[
        "grover",
        "--return",
        "1111",
        "--start",
        "00",
        "--shots",
        "16",
        "--steps",
        "3",
        "--out",
        &out_dir(tmp.path(), "g"),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("unsatisfiable"));
}

#[test]
fn validation_and_capacity_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = qmdp(&[
        "run",
        "--mdp",
        "/no/such/file.toml",
        "--out",
        &out_dir(tmp.path(), "x"),
    ]);
    assert_eq!(o.status.code(), Some(1));

    let bad = tmp.path().join("bad.toml");
    fs::write(
        &bad,
        "num_states = 2\nnum_actions = 2\ntransitions = [{ s = 0, a = 0, next = 1, p = 0.5 }]\n",
    )
    .unwrap();
    let o = qmdp(&[
        "run",
        "--mdp",
        bad.to_str().unwrap(),
        "--out",
        &out_dir(tmp.path(), "y"),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("(s0, a0)"), "{}", stderr(&o));

    // Static at T=4 needs 32 qubits.
    let o = qmdp(&[
        "run",
        "--mode",
        "static",
        "--steps",
        "4",
        "--out",
        &out_dir(tmp.path(), "z"),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("ceiling"));
}

#[test]
fn enumerate_matches_dynamic_run() {
    let tmp = tempfile::tempdir().unwrap();
    let e = qmdp(&[
        "enumerate",
        "--steps",
        "3",
        "--out",
        &out_dir(tmp.path(), "e"),
    ]);
    let r = qmdp(&["run", "--steps", "3", "--out", &out_dir(tmp.path(), "r")]);
    assert!(e.status.success() && r.status.success());
    let o = qmdp(&[
        "compare",
        tmp.path().join("e/distribution.csv").to_str().unwrap(),
        tmp.path().join("r/distribution.csv").to_str().unwrap(),
        "--out",
        &out_dir(tmp.path(), "c"),
    ]);
    let tvd: f64 = stdout(&o).lines().next().unwrap()[4..].parse().unwrap();
    assert!(tvd <= 1e-9);
}
