use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use renyi_core::bench::{read_records, BenchmarkRecord, CSV_HEADER};
use tempfile::TempDir;

fn renyi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_renyi")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::File::create(&path).unwrap().write_all(body.as_bytes()).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn grid_csv(n: usize, cols: usize, seed: u64) -> String {
    let mut state = seed;
    let mut out = String::new();
    for _ in 0..n {
        let row: Vec<String> = (0..cols)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                format!("{:.6}", (state >> 11) as f64 / (1u64 << 53) as f64 * 4.0 - 2.0)
            })
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn without_time(records: &[BenchmarkRecord]) -> Vec<BenchmarkRecord> {
    records.iter().map(|r| BenchmarkRecord { time_s: 0.0, ..r.clone() }).collect()
}

const BENCH: &[&str] = &[
    "bench", "--n", "60", "--d", "3", "--alpha", "1.5,2", "--method", "exact,trace,chebyshev,lanczos",
    "--sketches", "10:20:10", "--trials", "2", "--seed", "9",
];

#[test]
fn exact_entropy_of_identical_samples_is_zero() {
    let dir = TempDir::new().unwrap();
    let x = write(&dir, "x.csv", "1,2\n1,2\n1,2\n");
    let out = stdout(&renyi(&["entropy", s(&x), "--method", "exact", "--alpha", "2"]));
    assert_eq!(out, "method,alpha,s,m,estimate\nexact,2.0,0,0,0.0\n");
}

#[test]
fn trivial_bench_prints_one_row() {
    let out = stdout(&renyi(&["bench", "--n", "40", "--d", "2", "--sketches", "10", "--trials", "1"]));
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], CSV_HEADER.join(","));
    assert!(!out.contains('\r'));
}

#[test]
fn entropy_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let x = write(&dir, "x.csv", &grid_csv(80, 3, 1));
    let args = [
        "entropy", s(&x), "--method", "chebyshev", "--alpha", "2.5", "--sketches", "100", "--degree", "40", "--seed", "1",
    ];
    let a = stdout(&renyi(&args));
    assert_eq!(a, stdout(&renyi(&args)));
    assert!(a.starts_with("method,alpha,s,m,estimate\nchebyshev,2.5,100,40,"));
}

#[test]
fn select_emits_valid_csv() {
    let dir = TempDir::new().unwrap();
    let body = grid_csv(100, 5, 2);
    let features = write(&dir, "f.csv", &format!("a,b,c,d,e\n{body}"));
    let label: String = body.lines().map(|l| format!("{}\n", l.split(',').nth(2).unwrap())).collect();
    let labels = write(&dir, "y.csv", &label);
    let out = stdout(&renyi(&[
        "select", s(&features), "--labels", s(&labels), "--count", "3", "--method", "exact",
    ]));
    let mut rdr = csv::Reader::from_reader(out.as_bytes());
    assert_eq!(rdr.headers().unwrap(), vec!["rank", "feature", "name"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(&rows[0][1], "2");
    assert_eq!(&rows[0][2], "c");
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r[0].parse::<usize>().unwrap(), i + 1);
    }
}

#[test]
fn measures_from_files() {
    let dir = TempDir::new().unwrap();
    let x = write(&dir, "x.csv", &grid_csv(50, 2, 3));
    let y = write(&dir, "y.csv", &grid_csv(50, 1, 4));
    let mi = stdout(&renyi(&["mi", s(&x), "--target", s(&y), "--method", "exact", "--alpha", "2"]));
    let tc = stdout(&renyi(&["tc", s(&x), s(&y), "--method", "exact", "--alpha", "2"]));
    let value = |out: &str| out.lines().nth(1).unwrap().rsplit(',').next().unwrap().parse::<f64>().unwrap();
    assert!(mi.starts_with("measure,method,alpha,s,m,value\nmi,exact,2.0,0,0,"));
    assert!((value(&mi) - value(&tc)).abs() < 1e-12);

    let json = stdout(&renyi(&["mi", s(&x), "--target", s(&y), "--method", "exact", "--format", "json"]));
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["terms"].as_array().unwrap().len(), 3);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let x = write(&dir, "x.csv", &grid_csv(10, 2, 5));
    assert_eq!(renyi(&["entropy", s(&x), "--alpha", "1"]).status.code(), Some(2));
    assert_eq!(renyi(&["entropy", s(&x), "--bogus"]).status.code(), Some(2));
    assert_eq!(renyi(&["tc", s(&x)]).status.code(), Some(2));
    assert_eq!(renyi(&["entropy", "/nonexistent/x.csv"]).status.code(), Some(2));
    let zero = write(&dir, "z.csv", "0,0\n1,1\n2,1\n");
    let o = renyi(&["entropy", s(&zero), "--kernel", "polynomial:0:2", "--method", "exact"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}

#[test]
fn bench_csv_round_trips() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("out.csv");
    let mut args = BENCH.to_vec();
    args.extend(["--output", s(&path)]);
    assert!(renyi(&args).status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    let records = read_records(text.as_bytes()).unwrap();
    assert_eq!(records.len(), 28);

    // re-serialize through the library writer and compare byte for byte
    let mut again = Vec::new();
    {
        let mut w = renyi_core::bench::RecordWriter::new(&mut again).unwrap();
        for r in &records {
            w.write(r).unwrap();
        }
    }
    assert_eq!(String::from_utf8(again).unwrap(), text);

    let mut json_args = BENCH.to_vec();
    json_args.extend(["--format", "json"]);
    let json: Vec<BenchmarkRecord> = serde_json::from_str(&stdout(&renyi(&json_args))).unwrap();
    assert_eq!(without_time(&json), without_time(&records));
}

#[test]
fn bench_is_deterministic_except_time() {
    let a = read_records(stdout(&renyi(BENCH)).as_bytes()).unwrap();
    let b = read_records(stdout(&renyi(BENCH)).as_bytes()).unwrap();
    assert_eq!(without_time(&a), without_time(&b));
    for r in a.iter().filter(|r| r.method == renyi_core::sketch::Method::Exact) {
        assert_eq!(r.rel_error, Some(0.0));
    }
    for r in &a {
        match r.estimate {
            Some(e) => assert_eq!(r.rel_error, Some((e - r.exact.unwrap()).abs() / r.exact.unwrap().abs())),
            // the integer estimator rejects fractional orders
            None => assert!(r.method == renyi_core::sketch::Method::Trace && r.alpha == 1.5 && r.rel_error.is_none()),
        }
    }
}

#[test]
fn json_fields_match_csv_header() {
    let json = stdout(&renyi(&["bench", "--n", "30", "--d", "2", "--sketches", "5", "--format", "json"]));
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    let keys: Vec<&str> = v[0].as_object().unwrap().keys().map(String::as_str).collect();
    let mut expected = CSV_HEADER.to_vec();
    expected.sort_unstable();
    let mut keys = keys;
    keys.sort_unstable();
    assert_eq!(keys, expected);
}

#[test]
fn gram_writes_matrix() {
    let dir = TempDir::new().unwrap();
    let x = write(&dir, "x.csv", &grid_csv(12, 2, 6));
    let m = dir.path().join("g.csv");
    let out = stdout(&renyi(&["gram", s(&x), "--matrix", s(&m), "--sigma", "0.5"]));
    assert!(out.starts_with("statistic,value\nn,12\ntrace,"));
    let g = renyi_core::io::read_samples(&m).unwrap();
    assert_eq!((g.rows(), g.cols()), (12, 12));
    let diag: f64 = (0..12).map(|i| g.row(i)[i]).sum();
    assert!((diag - 1.0).abs() < 1e-14);
}
