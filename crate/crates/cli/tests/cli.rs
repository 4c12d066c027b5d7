use std::path::Path;
use std::process::Command;

use owbo::stats::{mad, median};
use owbo_cli::run::{read_trace_csv, RunManifest, CSV_HEADER};

fn owbo(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_owbo")).args(args).output().expect("spawn owbo");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn manifest(path: &Path) -> RunManifest {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// CSV body without the wall-clock column.
fn body_without_time(text: &str) -> String {
    text.lines().map(|l| l.rsplit_once(',').map_or(l, |(a, _)| a)).collect::<Vec<_>>().join("\n")
}

#[test]
fn run_writes_one_csv_per_repeat_and_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let (code, _, err) = owbo(&[
        "run", "--function", "ackley", "--dim", "2", "--acq", "lcb-lw", "--iters", "4", "--repeats", "3", "--seed",
        "11", "--nsamples", "1e4", "--out", out,
    ]);
    assert_eq!(code, 0, "{err}");
    let m = manifest(&dir.path().join("ackley-d2-lcb-lw.json"));
    assert_eq!(m.repeats.len(), 3);
    assert_eq!(m.aggregate.iterations.len(), 5);
    assert_eq!(m.aggregate.simple_regret.median.len(), 5);
    assert_eq!(m.aggregate.distance.band.len(), 5);
    for r in &m.repeats {
        let text = std::fs::read_to_string(dir.path().join(&r.csv)).unwrap();
        assert!(text.starts_with(CSV_HEADER));
        assert_eq!(read_trace_csv(&text).unwrap().len(), 5);
        assert!(r.failure.is_none());
    }
    let csvs = std::fs::read_dir(dir.path()).unwrap().filter(|e| {
        e.as_ref().unwrap().path().extension().is_some_and(|x| x == "csv")
    });
    assert_eq!(csvs.count(), 3);
}

#[test]
fn zero_iterations_give_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) =
        owbo(&["run", "--function", "branin", "--acq", "ei", "--iters", "0", "--repeats", "1", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let text = std::fs::read_to_string(dir.path().join("branin-d2-ei-r000.csv")).unwrap();
    let rows = read_trace_csv(&text).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].0, 0);
    assert!(text.ends_with('\n') && !text.contains('\r'));
}

#[test]
fn reruns_reproduce_csv_bodies_for_any_job_count() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let base = ["run", "--function", "bukin", "--acq", "ivr-lwbo", "--iters", "3", "--repeats", "2", "--nsamples", "5e3", "--nfit", "1e3"];
    let mut args_a: Vec<&str> = base.to_vec();
    args_a.extend(["--jobs", "1", "--out", a.path().to_str().unwrap()]);
    let mut args_b: Vec<&str> = base.to_vec();
    args_b.extend(["--jobs", "2", "--out", b.path().to_str().unwrap()]);
    assert_eq!(owbo(&args_a).0, 0);
    assert_eq!(owbo(&args_b).0, 0);
    for r in 0..2 {
        let name = format!("bukin-d2-ivr-lwbo-r{r:03}.csv");
        let ta = std::fs::read_to_string(a.path().join(&name)).unwrap();
        let tb = std::fs::read_to_string(b.path().join(&name)).unwrap();
        assert_eq!(body_without_time(&ta), body_without_time(&tb));
    }
}

#[test]
fn manifest_aggregates_match_the_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = owbo(&[
        "run", "--function", "michalewicz", "--acq", "lcb", "--iters", "5", "--repeats", "4", "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    let m = manifest(&dir.path().join("michalewicz-d2-lcb.json"));
    let traces: Vec<_> = m
        .repeats
        .iter()
        .map(|r| read_trace_csv(&std::fs::read_to_string(dir.path().join(&r.csv)).unwrap()).unwrap())
        .collect();
    for n in 0..=5 {
        let col = |f: fn(&(usize, f64, f64, f64, f64)) -> f64| traces.iter().map(|t| f(&t[n])).collect::<Vec<_>>();
        let r = col(|t| t.1);
        let l = col(|t| t.2);
        let o = col(|t| t.3);
        assert_eq!(m.aggregate.simple_regret.median[n], Some(median(&r)));
        assert_eq!(m.aggregate.simple_regret.mad[n], Some(mad(&r)));
        assert_eq!(m.aggregate.simple_regret.band[n], Some(mad(&r) / 4.0));
        assert_eq!(m.aggregate.distance.median[n], Some(median(&l)));
        assert_eq!(m.aggregate.observation_regret.median[n], Some(median(&o)));
    }
}

#[test]
fn precursor_runs_without_truth() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = owbo(&[
        "run", "--function", "precursor", "--acq", "lcb-lw", "--iters", "2", "--repeats", "1", "--nsamples", "1e4",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    let rows = read_trace_csv(&std::fs::read_to_string(dir.path().join("precursor-d2-lcb-lw-r000.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.2.is_nan() && r.3.is_finite()));
    let m = manifest(&dir.path().join("precursor-d2-lcb-lw.json"));
    assert_eq!(m.aggregate.distance.median, vec![None, None, None]);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(owbo(&["run", "--acq", "ucb", "--out", out]).0, 1);
    assert_eq!(owbo(&["run", "--function", "rosenbrock", "--out", out]).0, 1);
    assert_eq!(owbo(&["run", "--function", "branin", "--dim", "3", "--out", out]).0, 1);
    assert_eq!(owbo(&["run", "--repeats", "0", "--out", out]).0, 1);
    assert_eq!(owbo(&["run", "--config", "/nonexistent/exp.cfg"]).0, 1);
    assert_eq!(owbo(&["frobnicate"]).0, 1);
    assert_eq!(owbo(&["pdf", "--function", "rosenbrock"]).0, 1);
    assert_eq!(owbo(&["--help"]).0, 0);

    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let inside = blocker.join("sub");
    let (code, _, err) = owbo(&["run", "--iters", "0", "--repeats", "1", "--out", inside.to_str().unwrap()]);
    assert_eq!(code, 3, "{err}");
}

#[test]
fn config_file_drives_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    std::fs::write(&cfg, format!("function = branin\nacq = pi\niters = 1\nrepeats = 2\nout = {}\n", dir.path().display()))
        .unwrap();
    let (code, _, err) = owbo(&["run", "--config", cfg.to_str().unwrap(), "--repeats", "1"]);
    assert_eq!(code, 0, "{err}");
    let m = manifest(&dir.path().join("branin-d2-pi.json"));
    assert_eq!(m.repeats.len(), 1);
    assert_eq!(m.config.iters, 1);
}

fn read_pdf(path: &Path) -> Vec<(f64, f64)> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("value,density"));
    lines
        .map(|l| {
            let (a, b) = l.split_once(',').unwrap();
            (a.parse().unwrap(), b.parse().unwrap())
        })
        .collect()
}

fn trapezoid(rows: &[(f64, f64)]) -> f64 {
    rows.windows(2).map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0).sum()
}

#[test]
fn pdf_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);

    let (code, _, err) = owbo(&["pdf", "--function", "ackley", "--dim", "2", "--nsamples", "1e5", "--out", p("a.csv").to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let a = read_pdf(&p("a.csv"));
    assert!((trapezoid(&a) - 1.0).abs() <= 0.01, "{}", trapezoid(&a));

    let (code, _, err) =
        owbo(&["pdf", "--function", "hartmann6", "--dim", "6", "--nsamples", "1e6", "--out", p("h.csv").to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(read_pdf(&p("h.csv")).len(), 1024);

    let (code, _, err) = owbo(&["pdf", "--function", "branin", "--out", p("b.csv").to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let b = read_pdf(&p("b.csv"));
    let lowest = b.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    assert!(lowest >= 0.39788735772973816 - 1e-6, "{lowest}");
}

#[test]
fn bench_emits_rows() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bench.csv");
    let (code, _, err) = owbo(&[
        "bench", "--sweep", "dim", "--values", "2,3", "--acqs", "lcb,lcb-lw", "--repeats", "2", "--init", "5",
        "--nsamples", "2e3", "--nfit", "500", "--out", path.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "param,value,acq,median_seconds");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("d,2,lcb,"));
    for l in &lines[1..] {
        let t: f64 = l.rsplit(',').next().unwrap().parse().unwrap();
        assert!(t > 0.0 && t.is_finite());
    }
}

#[test]
fn list_names_everything() {
    let (code, out, _) = owbo(&["list"]);
    assert_eq!(code, 0);
    for name in ["ackley", "branin", "bukin", "michalewicz", "hartmann6", "precursor", "ivr-lwbo", "lcb-lw", "pi"] {
        assert!(out.contains(name), "{name}");
    }
}
