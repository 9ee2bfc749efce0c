use std::path::Path;
use std::process::{Command, Output};

use fmahal::simulate::{gp_sample, KernelSpec};
use fmahal::{Curve, FunctionalSample, Grid};
use fmahal_cli::io::{curves_to_csv, read_curves, CurveTable};

fn fmahal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fmahal"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = fmahal(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bm.csv");
    ok(&[
        "simulate",
        "--kind",
        "brownian",
        "--n",
        "20",
        "--grid",
        "40",
        "--seed",
        "3",
        "--out",
        s(&path),
    ]);
    let expected = gp_sample(
        &KernelSpec::Brownian,
        &Curve::zeros(40),
        &Grid::uniform(40).unwrap(),
        20,
        3,
    )
    .unwrap();
    let table = read_curves(&path).unwrap();
    assert_eq!(table.sample.curves(), expected.curves());
    assert_eq!(table.sample.grid().points(), expected.grid().points());
    // writing the parsed table reproduces the file byte for byte
    assert_eq!(curves_to_csv(&table), std::fs::read(&path).unwrap());
}

#[test]
fn labelled_simulation_keeps_labels() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pair.csv");
    ok(&[
        "simulate",
        "--kind",
        "bm-bridge",
        "--n",
        "5",
        "--cut",
        "0.8",
        "--out",
        s(&path),
    ]);
    let table = read_curves(&path).unwrap();
    assert_eq!(
        table.sample.labels().unwrap(),
        [0, 0, 0, 0, 0, 1, 1, 1, 1, 1]
    );
    assert!(*table.points.last().unwrap() <= 0.8);
}

#[test]
fn commands_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("m2.csv");
    ok(&[
        "simulate",
        "--kind",
        "model2",
        "--n",
        "60",
        "--seed",
        "1",
        "--out",
        s(&data),
    ]);
    let run = |tag: &str| {
        let report = dir.path().join(format!("out{tag}.json"));
        ok(&[
            "outliers",
            "--in",
            s(&data),
            "--seed",
            "4",
            "--out",
            s(&report),
        ]);
        let bench = dir.path().join(format!("bench{tag}.csv"));
        ok(&[
            "bench",
            "--experiment",
            "outliers",
            "--reps",
            "1",
            "--seed",
            "5",
            "--out",
            s(&bench),
        ]);
        (
            std::fs::read(report).unwrap(),
            std::fs::read(bench).unwrap(),
        )
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn bench_output_echoes_config() {
    let out = ok(&[
        "bench",
        "--experiment",
        "outliers",
        "--reps",
        "1",
        "--seed",
        "9",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    for key in [
        "# seed=9",
        "# reps=1",
        "# n=100",
        "# grid=50",
        "# n_mc=2000",
    ] {
        assert!(text.contains(key), "{key} missing from\n{text}");
    }
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 16);
}

#[test]
fn fit_then_dist() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("ou.csv");
    let model = dir.path().join("model.json");
    let dists = dir.path().join("d.csv");
    ok(&["simulate", "--kind", "ou", "--n", "50", "--out", s(&data)]);
    ok(&[
        "fit",
        "--in",
        s(&data),
        "--cov",
        "empirical",
        "--out",
        s(&model),
    ]);
    ok(&[
        "dist",
        "--model",
        s(&model),
        "--in",
        s(&data),
        "--out",
        s(&dists),
    ]);
    let text = std::fs::read_to_string(dists).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("id,distance_sq,depth,p_value"));
    for line in lines {
        let f: Vec<f64> = line
            .split(',')
            .skip(1)
            .map(|v| v.parse().unwrap())
            .collect();
        assert!(f[0] >= 0.0);
        assert!((f[1] - 1.0 / (1.0 + f[0])).abs() < 1e-12);
        assert!((0.0..=1.0).contains(&f[2]));
    }
}

#[test]
fn classify_predicts_every_test_curve() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.csv");
    let test = dir.path().join("test.csv");
    let pred = dir.path().join("pred.csv");
    ok(&[
        "simulate",
        "--kind",
        "scenario-b",
        "--n",
        "40",
        "--seed",
        "1",
        "--out",
        s(&train),
    ]);
    ok(&[
        "simulate",
        "--kind",
        "scenario-b",
        "--n",
        "30",
        "--seed",
        "2",
        "--out",
        s(&test),
    ]);
    let out = ok(&[
        "classify",
        "--train",
        s(&train),
        "--test",
        s(&test),
        "--out",
        s(&pred),
    ]);
    let text = std::fs::read_to_string(pred).unwrap();
    assert_eq!(text.lines().count(), 61);
    assert!(text
        .lines()
        .skip(1)
        .all(|l| l.ends_with(",0") || l.ends_with(",1")));
    assert!(String::from_utf8_lossy(&out.stderr).contains("misclassification"));
}

#[test]
fn planted_outlier_gets_one_outlier_stroke() {
    let dir = tempfile::tempdir().unwrap();
    let g = Grid::uniform(50).unwrap();
    let scale: f64 = 0.3;
    let mut curves = gp_sample(
        &KernelSpec::Ou { scale, range: 0.3 },
        &Curve::zeros(50),
        &g,
        10,
        7,
    )
    .unwrap()
    .curves()
    .to_vec();
    curves[4] = curves[4].add(&g.curve_from_fn(|_| 10.0 * scale.sqrt()));
    let table = CurveTable::from_sample(FunctionalSample::new(g, curves, None).unwrap());
    let data = dir.path().join("planted.csv");
    std::fs::write(&data, curves_to_csv(&table)).unwrap();

    let svg = dir.path().join("box.svg");
    let json = dir.path().join("box.json");
    ok(&[
        "boxplot",
        "--in",
        s(&data),
        "--out",
        s(&svg),
        "--json",
        s(&json),
    ]);
    let picture = std::fs::read_to_string(&svg).unwrap();
    assert_eq!(picture.matches(r#"class="outlier""#).count(), 1);
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(&json).unwrap()).unwrap();
    assert_eq!(summary["outlier_indices"], serde_json::json!([4]));

    let again = dir.path().join("again.svg");
    ok(&[
        "boxplot",
        "--in",
        s(&data),
        "--out",
        s(&again),
        "--json",
        s(&json),
    ]);
    assert_eq!(std::fs::read(&again).unwrap(), picture.as_bytes());
}

#[test]
fn empty_input_fails_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    let svg = dir.path().join("box.svg");
    let json = dir.path().join("box.json");
    let out = fmahal(&[
        "boxplot",
        "--in",
        s(&empty),
        "--out",
        s(&svg),
        "--json",
        s(&json),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 1"));
    assert!(!svg.exists() && !json.exists());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn malformed_cell_reports_its_location() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "t,0,0.5,1\na,1,2,3\nb,4,oops,6\n").unwrap();
    let out = fmahal(&["outliers", "--in", s(&bad)]);
    assert_eq!(out.status.code(), Some(3));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("row 3, column 3"), "{msg}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(fmahal(&["simulate"]).status.code(), Some(2));
    assert_eq!(
        fmahal(&["bench", "--experiment", "outliers", "--reps", "0"])
            .status
            .code(),
        Some(2)
    );
    let missing = dir.path().join("missing.csv");
    assert_eq!(
        fmahal(&["outliers", "--in", s(&missing)]).status.code(),
        Some(5)
    );
    let data = dir.path().join("d.csv");
    ok(&["simulate", "--kind", "ou", "--n", "10", "--out", s(&data)]);
    let unwritable = dir.path().join("no/such/dir/out.json");
    assert_eq!(
        fmahal(&["outliers", "--in", s(&data), "--out", s(&unwritable)])
            .status
            .code(),
        Some(5)
    );
    // a bad α is an invalid argument
    assert_eq!(
        fmahal(&["outliers", "--in", s(&data), "--alpha=-1"])
            .status
            .code(),
        Some(2)
    );
}
