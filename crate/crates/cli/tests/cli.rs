use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn core_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core").join(rel)
}

fn fixture(name: &str) -> PathBuf {
    core_path("tests/fixtures/tiny").join(name)
}

fn okbcanon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_okbcanon"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn canonicalize_fixture() {
    let out = tempfile::tempdir().unwrap();
    let (t, src, w, d, u) = (
        fixture("triples.tsv"),
        fixture("sources.tsv"),
        fixture("words.vec"),
        fixture("dictionary.tsv"),
        fixture("urls.tsv"),
    );
    let o = okbcanon(&[
        "canonicalize",
        "--triples",
        s(&t),
        "--sources",
        s(&src),
        "--word-vectors",
        s(&w),
        "--dictionary",
        s(&d),
        "--urls",
        s(&u),
        "--out-dir",
        s(out.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("np_clusters=6 rp_clusters=6\n"), "{text}");
    assert!(text.contains("average_f1=0.612231"), "{text}");
    let got = fs::read_to_string(out.path().join("np_clusters.txt")).unwrap();
    assert_eq!(got, fs::read_to_string(fixture("expected_np_clusters.txt")).unwrap());

    // the saved configuration reproduces the run, with flags overriding it
    let again = tempfile::tempdir().unwrap();
    let cfg = out.path().join("config.txt");
    let o = okbcanon(&["canonicalize", "--config", s(&cfg), "--out-dir", s(again.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read(again.path().join("rp_clusters.txt")).unwrap(),
        fs::read(out.path().join("rp_clusters.txt")).unwrap()
    );
}

#[test]
fn evaluate_worked_example() {
    let dir = tempfile::tempdir().unwrap();
    let (pred, gold) = (dir.path().join("pred.txt"), dir.path().join("gold.txt"));
    fs::write(&pred, "0\ta\tb\n1\tc\n").unwrap();
    fs::write(&gold, "0\ta\tb\tc\n").unwrap();
    let o = okbcanon(&["evaluate", "--pred", s(&pred), "--gold", s(&gold)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    for line in [
        "macro_f1=0.000000",
        "micro_f1=0.800000",
        "pairwise_f1=0.500000",
        "average_f1=0.433333",
        "elements=3",
    ] {
        assert!(text.lines().any(|l| l == line), "missing {line} in {text}");
    }
    let o = okbcanon(&["evaluate", "--pred", s(&pred), "--gold", s(&gold), "--json"]);
    assert!(stdout(&o).contains("\"average_f1\""));
}

#[test]
fn empty_prediction_is_a_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let (pred, gold) = (dir.path().join("pred.txt"), dir.path().join("gold.txt"));
    fs::write(&pred, "").unwrap();
    fs::write(&gold, "0\ta\n").unwrap();
    let o = okbcanon(&["evaluate", "--pred", s(&pred), "--gold", s(&gold)]);
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error[domain]"), "{}", stderr(&o));
}

#[test]
fn estimate_k_on_iris() {
    let dir = tempfile::tempdir().unwrap();
    let curve = dir.path().join("curve.csv");
    let iris = core_path("data/iris.csv");
    let o = okbcanon(&["estimate-k", "--data", s(&iris), "--curve", s(&curve)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("n=150 p=4 gold_k=3"), "{text}");
    assert!(text.contains("log_jump_k=2 relative_error=0.333333"), "{text}");
    let rows = fs::read_to_string(&curve).unwrap();
    assert!(rows.lines().count() >= 3);

    let o = okbcanon(&["estimate-k", "--data", s(&iris), "--range", "2"]);
    assert!(stderr(&o).starts_with("error[config]"), "{}", stderr(&o));
}

#[test]
fn missing_setting_is_a_config_error() {
    let out = tempfile::tempdir().unwrap();
    let t = fixture("triples.tsv");
    let o = okbcanon(&["canonicalize", "--triples", s(&t), "--out-dir", s(out.path())]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.starts_with("error[config]") && err.contains("sources"), "{err}");

    let o = okbcanon(&["canonicalize", "--margin", "abc"]);
    assert!(stderr(&o).starts_with("error[config]"), "{}", stderr(&o));
}
