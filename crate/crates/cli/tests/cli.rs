use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn pilae(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pilae"))
        .args(args)
        .env_remove("PILAE_DATA_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Three well-separated classes in six dimensions, interleaved by label.
fn write_blobs(dir: &Path) -> PathBuf {
    let path = dir.join("blobs.csv");
    let mut text = String::from("a,b,c,d,e,f,label\n");
    for i in 0..90 {
        let class = i % 3;
        let row: Vec<String> = (0..6)
            .map(|j| {
                let centre = if j % 3 == class { 5.0 } else { 0.0 };
                let jitter = (((i * 7 + j * 13) % 11) as f64 - 5.0) * 0.05;
                format!("{:.3}", centre + jitter)
            })
            .collect();
        text.push_str(&format!("{},k{class}\n", row.join(",")));
    }
    std::fs::write(&path, text).unwrap();
    path
}

fn train_args<'a>(csv: &'a str, out: &'a str) -> Vec<&'a str> {
    vec![
        "train", "--data-format", "csv", "--train", csv, "--out", out, "--min-width", "2",
        "--max-depth", "2",
    ]
}

#[test]
fn train_then_eval_on_toy_data() {
    let dir = TempDir::new().unwrap();
    let csv = write_blobs(dir.path());
    let model = dir.path().join("m.pilae");
    let (csv, model_s) = (csv.to_str().unwrap(), model.to_str().unwrap());

    let out = pilae(&train_args(csv, model_s));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("architecture 6-"));
    let report = std::fs::read_to_string(format!("{model_s}.jsonl")).unwrap();
    assert!(report.lines().count() >= 1);
    assert!(report.contains("\"method\""));

    let eval = ["eval", "--model", model_s, "--data-format", "csv", "--train", csv];
    let first = pilae(&eval);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    assert!(stdout(&first).contains("accuracy 1.0000"), "{}", stdout(&first));
    // scoring is read-only
    assert_eq!(stdout(&pilae(&eval)), stdout(&first));
}

#[test]
fn same_seed_gives_identical_models() {
    let dir = TempDir::new().unwrap();
    let csv = write_blobs(dir.path());
    let csv = csv.to_str().unwrap();
    let paths: Vec<String> = ["a", "b", "c"]
        .iter()
        .map(|n| dir.path().join(n).to_str().unwrap().to_owned())
        .collect();
    for (p, seed) in paths.iter().zip(["3", "3", "4"]) {
        let mut args = train_args(csv, p);
        args.extend(["--seed", seed]);
        assert!(pilae(&args).status.success());
    }
    let bytes: Vec<Vec<u8>> = paths.iter().map(|p| std::fs::read(p).unwrap()).collect();
    assert_eq!(bytes[0], bytes[1]);
    // a different seed holds out a different fold
    assert_ne!(bytes[0], bytes[2]);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let csv = write_blobs(dir.path());
    let csv = csv.to_str().unwrap();
    let out = dir.path().join("m.pilae");
    let out = out.to_str().unwrap();

    // bad flag value
    let mut args = train_args(csv, out);
    args.extend(["--width-rule", "decay:1.5"]);
    assert_eq!(pilae(&args).status.code(), Some(2));

    // unknown subcommand
    assert_eq!(pilae(&["frobnicate"]).status.code(), Some(2));

    // missing model file
    let missing = dir.path().join("nope.pilae");
    let eval = pilae(&["eval", "--model", missing.to_str().unwrap(), "--data-format", "csv", "--train", csv]);
    assert_eq!(eval.status.code(), Some(1));

    // not a model file
    let eval = pilae(&["eval", "--model", csv, "--data-format", "csv", "--train", csv]);
    assert_eq!(eval.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&eval.stderr).contains("error"));

    // named IDX data set that is not there
    let missing_data = pilae(&["--data-dir", dir.path().to_str().unwrap(), "train", "--train", "mnist"]);
    assert_eq!(missing_data.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing_data.stderr).contains("fetch_data.py"));
}

#[test]
fn config_file_supplies_defaults() {
    let dir = TempDir::new().unwrap();
    let csv = write_blobs(dir.path());
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# toy\nmax_depth = 1\nmin_width = 2\nhead = softmax\n").unwrap();
    let model = dir.path().join("m.pilae");
    let base = [
        "--config", cfg.to_str().unwrap(), "train", "--data-format", "csv", "--train",
        csv.to_str().unwrap(), "--out", model.to_str().unwrap(),
    ];
    let out = pilae(&base);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("architecture 6-5-3"), "{}", stdout(&out));

    // command-line flags override the file
    let mut args = base.to_vec();
    args.extend(["--max-depth", "2"]);
    let out = pilae(&args);
    assert!(stdout(&out).contains("architecture 6-5-4-3"), "{}", stdout(&out));
}

fn write_records(dir: &Path, rows: &[(usize, usize, usize)], extra: Option<(usize, usize, usize, usize)>) -> PathBuf {
    let path = dir.join("widths.csv");
    let mut text = String::from("r,n,p_star,d\n");
    for (r, n, p) in rows {
        text.push_str(&format!("{r},{n},{p},\n"));
    }
    if let Some((r, n, p, d)) = extra {
        text.push_str(&format!("{r},{n},{p},{d}\n"));
    }
    std::fs::write(&path, text).unwrap();
    path
}

fn surface(theta: [f64; 5], r: usize, n: usize) -> usize {
    let (r, n) = (r as f64, n as f64);
    (theta[0] + theta[1] * r + theta[2] * n + theta[3] * r * r + theta[4] * n * n).round() as usize
}

#[test]
fn fit_width_recovers_planted_surface() {
    let dir = TempDir::new().unwrap();
    let theta = [3.0, 2.0, 0.5, 0.25, 0.001];
    let rows: Vec<(usize, usize, usize)> = [(4, 100), (10, 200), (20, 300), (8, 400), (30, 500), (16, 200), (2, 600)]
        .iter()
        .map(|&(r, n)| (r, n, surface(theta, r, n)))
        .collect();
    let path = write_records(dir.path(), &rows, None);
    let out = pilae(&["fit-width", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let fitted: Vec<f64> = text
        .lines()
        .skip_while(|l| *l != "theta")
        .skip(1)
        .take(5)
        .map(|l| l.split_whitespace().nth(1).unwrap().parse().unwrap())
        .collect();
    for (a, b) in fitted.iter().zip(theta) {
        assert!((a - b).abs() < 1e-6, "{fitted:?}");
    }
    assert!(!text.contains("fallback"));
}

#[test]
fn fit_width_flags_fallback_rows() {
    let dir = TempDir::new().unwrap();
    let theta = [-2000.0, 1.0, 0.0, 0.5, 0.001];
    let rows: Vec<(usize, usize, usize)> = [(4, 1500), (10, 2000), (20, 1600), (8, 2500), (30, 1800), (16, 3000)]
        .iter()
        .map(|&(r, n)| (r, n, surface(theta, r, n)))
        .collect();
    let path = write_records(dir.path(), &rows, Some((6, 300, 5, 6)));
    let out = pilae(&["fit-width", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let last = text.lines().last().unwrap();
    assert!(last.trim_end().ends_with("fallback"), "{text}");
    assert_eq!(last.split_whitespace().nth(4), Some("6"));
}

#[test]
fn fit_width_rejects_too_few_records() {
    let dir = TempDir::new().unwrap();
    let path = write_records(dir.path(), &[(1, 10, 2), (2, 20, 3), (3, 30, 4), (4, 40, 5)], None);
    assert_eq!(pilae(&["fit-width", path.to_str().unwrap()]).status.code(), Some(2));
}
