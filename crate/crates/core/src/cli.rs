//! The `renyi` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bench::{run_benchmark_with, write_json, BenchmarkSpec, MethodDegrees, RecordWriter, SketchRange};
use crate::error::{invalid, Error, Result};
use crate::io::{read_table, write_matrix, Table};
use crate::kernel::{build_gram, KernelSpec};
use crate::measures::{
    greedy_feature_selection, joint_entropy, mutual_information, total_correlation, Backend, MeasureEstimate,
    MeasureRequest, Representation, SelectionTemplate, Variable,
};
use crate::sketch::{integer_sketch_count, lanczos_sketch_count, power_iteration, EstimatorConfig, Method, PowerSettings};

#[derive(Parser, Debug)]
#[command(name = "renyi", version, about = "Matrix-based Renyi entropy, mutual information and total correlation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a normalized Gram matrix and print summary statistics.
    Gram {
        /// CSV file, one sample per row ("-" reads stdin).
        input: PathBuf,
        #[command(flatten)]
        kernel: KernelArgs,
        /// Also write the full matrix to this CSV file.
        #[arg(long)]
        matrix: Option<PathBuf>,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Entropy of one variable.
    Entropy {
        input: PathBuf,
        #[command(flatten)]
        est: EstimatorArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Mutual information between the inputs (jointly) and a target.
    Mi {
        /// One CSV file per variable.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        target: PathBuf,
        #[command(flatten)]
        est: EstimatorArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Total correlation of two or more variables.
    Tc {
        #[arg(required = true, num_args = 2..)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        est: EstimatorArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Greedy forward feature selection by mutual information with labels.
    Select {
        /// Feature matrix; every column is a candidate.
        features: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Number of features to select.
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[command(flatten)]
        est: EstimatorArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Relative-error benchmark on Gaussian mixture data.
    Bench {
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        d: usize,
        #[arg(long, value_delimiter = ',', default_value = "2")]
        alpha: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "chebyshev")]
        method: Vec<Method>,
        /// `S` or `START:STOP:STEP`.
        #[arg(long, default_value = "100")]
        sketches: String,
        /// Degree for every method that takes one. Defaults to 30, or 15 for lanczos.
        #[arg(long)]
        degree: Option<usize>,
        #[arg(long)]
        clusters: Option<usize>,
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long, default_value_t = 1)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        kernel: KernelArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
}

#[derive(Args, Debug)]
struct KernelArgs {
    /// `gaussian`, `polynomial` or `polynomial:OFFSET:DEGREE`.
    #[arg(long, default_value = "gaussian")]
    kernel: String,
    /// Gaussian bandwidth.
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
}

impl KernelArgs {
    fn spec(&self) -> Result<KernelSpec> {
        let parts: Vec<&str> = self.kernel.split(':').collect();
        let spec = match parts.as_slice() {
            ["gaussian"] => KernelSpec::gaussian(self.sigma),
            ["polynomial"] => KernelSpec::polynomial(1.0, 2),
            ["polynomial", c, d] => {
                let offset = c.parse().map_err(|_| invalid(format!("bad polynomial offset {c:?}")))?;
                let degree = d.parse().map_err(|_| invalid(format!("bad polynomial degree {d:?}")))?;
                KernelSpec::polynomial(offset, degree)
            }
            _ => return Err(invalid(format!("unknown kernel {:?}", self.kernel))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Args, Debug)]
struct EstimatorArgs {
    #[arg(long, default_value_t = 2.0)]
    alpha: f64,
    #[arg(long, default_value = "chebyshev")]
    method: Method,
    /// Sketch vectors. When omitted, derived from --epsilon/--delta if either
    /// is given, otherwise 100.
    #[arg(long)]
    sketches: Option<usize>,
    /// Polynomial degree or Lanczos steps. Defaults to 30, or 15 for lanczos.
    #[arg(long)]
    degree: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Block low-rank clusters; enables the block low-rank operator.
    #[arg(long)]
    clusters: Option<usize>,
    /// Block low-rank rank; enables the block low-rank operator.
    #[arg(long)]
    rank: Option<usize>,
    #[command(flatten)]
    kernel: KernelArgs,
}

fn default_degree(method: Method) -> usize {
    if method == Method::Lanczos {
        15
    } else {
        30
    }
}

impl EstimatorArgs {
    fn config(&self) -> Result<EstimatorConfig> {
        let mut config = EstimatorConfig::new(self.alpha)
            .with_seed(self.seed)
            .with_degree(self.degree.unwrap_or_else(|| default_degree(self.method)));
        let eps = self.epsilon.unwrap_or(config.epsilon);
        let delta = self.delta.unwrap_or(config.delta);
        config = config.with_accuracy(eps, delta);
        let s = match self.sketches {
            Some(s) => s,
            None if self.epsilon.is_some() || self.delta.is_some() => match self.method {
                Method::Lanczos => lanczos_sketch_count(eps, delta),
                _ => integer_sketch_count(eps, delta),
            },
            None => config.sketches,
        };
        config = config.with_sketches(s);
        config.validate()?;
        Ok(config)
    }

    fn backend(&self) -> Backend {
        let representation = if self.clusters.is_some() || self.rank.is_some() {
            Representation::BlockLowRank {
                clusters: self.clusters,
                rank: self.rank,
            }
        } else {
            Representation::Dense
        };
        Backend {
            method: self.method,
            representation,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug)]
struct OutputArgs {
    /// Write results here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

fn load(path: &Path) -> Result<Table> {
    if path.as_os_str() == "-" {
        read_table(std::io::stdin().lock())
    } else {
        read_table(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

fn open_output<'a>(out: &OutputArgs, stdout: &'a mut dyn Write) -> Result<Box<dyn Write + 'a>> {
    Ok(match &out.output {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(stdout),
    })
}

/// Shortest round-trip form, with negative zero printed as zero.
fn num(v: f64) -> String {
    format!("{:?}", v + 0.0)
}

fn emit<T: Serialize>(out: &OutputArgs, stdout: &mut dyn Write, header: &[&str], rows: &[Vec<String>], json: &T) -> Result<()> {
    let mut w = open_output(out, stdout)?;
    match out.format {
        Format::Csv => {
            let mut csv = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(&mut w);
            csv.write_record(header)?;
            for r in rows {
                csv.write_record(r)?;
            }
            csv.flush()?;
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut w, json).map_err(|e| Error::Io(e.into()))?;
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct GramStats {
    n: usize,
    trace: f64,
    lambda_max: f64,
    min_off_diagonal: f64,
    max_off_diagonal: f64,
    build_s: f64,
}

#[derive(Serialize)]
struct EntropyRow {
    method: Method,
    alpha: f64,
    s: usize,
    m: usize,
    estimate: f64,
}

#[derive(Serialize)]
struct MeasureRow {
    measure: &'static str,
    method: Method,
    alpha: f64,
    s: usize,
    m: usize,
    value: f64,
    terms: Vec<f64>,
}

#[derive(Serialize)]
struct SelectionRow {
    rank: usize,
    feature: usize,
    name: Option<String>,
}

fn uses_sketches(method: Method) -> bool {
    method != Method::Exact
}

fn uses_degree(method: Method) -> bool {
    !matches!(method, Method::Exact | Method::Trace)
}

fn measure_output(
    name: &'static str,
    m: &MeasureEstimate,
    config: &EstimatorConfig,
    out: &OutputArgs,
    stdout: &mut dyn Write,
) -> Result<()> {
    let row = MeasureRow {
        measure: name,
        method: m.method,
        alpha: m.alpha,
        s: if uses_sketches(m.method) { config.sketches } else { 0 },
        m: if uses_degree(m.method) { config.degree } else { 0 },
        value: m.value + 0.0,
        terms: m.terms.iter().map(|t| t.value + 0.0).collect(),
    };
    let csv_row = vec![
        row.measure.to_string(),
        row.method.to_string(),
        num(row.alpha),
        row.s.to_string(),
        row.m.to_string(),
        num(row.value),
    ];
    emit(out, stdout, &["measure", "method", "alpha", "s", "m", "value"], &[csv_row], &row)
}

fn variables(paths: &[PathBuf], kernel: KernelSpec) -> Result<Vec<Variable>> {
    paths
        .iter()
        .map(|p| Ok(Variable::new(load(p)?.samples, kernel)))
        .collect()
}

fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Gram {
            input,
            kernel,
            matrix,
            out,
        } => {
            let data = load(&input)?.samples;
            let start = Instant::now();
            let g = build_gram(&data, &kernel.spec()?)?;
            let build_s = start.elapsed().as_secs_f64();
            let n = g.order();
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for i in 0..n {
                for j in (i + 1)..n {
                    lo = lo.min(g.get(i, j));
                    hi = hi.max(g.get(i, j));
                }
            }
            if n < 2 {
                (lo, hi) = (0.0, 0.0);
            }
            let lambda_max = power_iteration(&g, PowerSettings::default(), 0)?.rayleigh;
            if let Some(path) = matrix {
                write_matrix(std::io::BufWriter::new(std::fs::File::create(path)?), &g.to_dense())?;
            }
            let stats = GramStats {
                n,
                trace: g.trace(),
                lambda_max,
                min_off_diagonal: lo,
                max_off_diagonal: hi,
                build_s,
            };
            let rows = vec![
                vec!["n".into(), n.to_string()],
                vec!["trace".into(), num(stats.trace)],
                vec!["lambda_max".into(), num(stats.lambda_max)],
                vec!["min_off_diagonal".into(), num(lo)],
                vec!["max_off_diagonal".into(), num(hi)],
                vec!["build_s".into(), num(build_s)],
            ];
            emit(&out, stdout, &["statistic", "value"], &rows, &stats)
        }
        Command::Entropy { input, est, out } => {
            let config = est.config()?;
            let var = Variable::new(load(&input)?.samples, est.kernel.spec()?);
            let e = joint_entropy(&[&var], &est.backend(), &config)?;
            let row = EntropyRow {
                method: e.method,
                alpha: e.alpha,
                s: e.sketches,
                m: e.degree,
                estimate: e.value + 0.0,
            };
            let csv_row = vec![
                row.method.to_string(),
                num(row.alpha),
                row.s.to_string(),
                row.m.to_string(),
                num(row.estimate),
            ];
            emit(&out, stdout, &["method", "alpha", "s", "m", "estimate"], &[csv_row], &row)
        }
        Command::Mi {
            inputs,
            target,
            est,
            out,
        } => {
            let config = est.config()?;
            let kernel = est.kernel.spec()?;
            let req = MeasureRequest {
                variables: variables(&inputs, kernel)?,
                target: Some(Variable::new(load(&target)?.samples, kernel)),
                backend: est.backend(),
                config,
            };
            let m = mutual_information(&req)?;
            measure_output("mi", &m, &config, &out, stdout)
        }
        Command::Tc { inputs, est, out } => {
            let config = est.config()?;
            let req = MeasureRequest {
                variables: variables(&inputs, est.kernel.spec()?)?,
                target: None,
                backend: est.backend(),
                config,
            };
            let m = total_correlation(&req)?;
            measure_output("tc", &m, &config, &out, stdout)
        }
        Command::Select {
            features,
            labels,
            count,
            est,
            out,
        } => {
            let table = load(&features)?;
            let labels = load(&labels)?.samples;
            let kernel = est.kernel.spec()?;
            let template = SelectionTemplate {
                feature_kernel: kernel,
                label_kernel: kernel,
                backend: est.backend(),
                config: est.config()?,
            };
            let picked = greedy_feature_selection(&table.samples, &labels, count, &template)?;
            let rows: Vec<SelectionRow> = picked
                .iter()
                .enumerate()
                .map(|(r, &f)| SelectionRow {
                    rank: r + 1,
                    feature: f,
                    name: table.header.as_ref().map(|h| h[f].clone()),
                })
                .collect();
            let csv_rows: Vec<Vec<String>> = rows
                .iter()
                .map(|r| vec![r.rank.to_string(), r.feature.to_string(), r.name.clone().unwrap_or_default()])
                .collect();
            emit(&out, stdout, &["rank", "feature", "name"], &csv_rows, &rows)
        }
        Command::Bench {
            n,
            d,
            alpha,
            method,
            sketches,
            degree,
            clusters,
            rank,
            trials,
            seed,
            kernel,
            out,
        } => {
            let mut spec = BenchmarkSpec::new(n, d);
            spec.kernel = kernel.spec()?;
            spec.alphas = alpha;
            spec.methods = method;
            spec.sketches = parse_range(&sketches)?;
            if let Some(m) = degree {
                spec.degrees = MethodDegrees {
                    taylor: m,
                    chebyshev: m,
                    lanczos: m,
                };
            }
            if clusters.is_some() || rank.is_some() {
                spec.representations = vec![Representation::BlockLowRank { clusters, rank }];
            }
            spec.trials = trials;
            spec.seed = seed;
            spec.validate()?;
            let mut w = open_output(&out, stdout)?;
            match out.format {
                Format::Csv => {
                    let mut rw = RecordWriter::new(&mut w)?;
                    run_benchmark_with(&spec, |r| rw.write(r))?;
                }
                Format::Json => {
                    let records = run_benchmark_with(&spec, |_| Ok(()))?;
                    write_json(&mut w, &records)?;
                    writeln!(w)?;
                }
            }
            w.flush()?;
            Ok(())
        }
    }
}

fn parse_range(s: &str) -> Result<SketchRange> {
    let bad = || invalid(format!("bad sketch range {s:?}"));
    let parts = s
        .split(':')
        .map(|p| p.trim().parse::<usize>().map_err(|_| bad()))
        .collect::<Result<Vec<_>>>()?;
    match parts.as_slice() {
        [s] => Ok(SketchRange::single(*s)),
        [start, stop, step] => Ok(SketchRange {
            start: *start,
            stop: *stop,
            step: *step,
        }),
        _ => Err(bad()),
    }
}

/// Runs the command line and returns the process exit code: 0 on success,
/// 2 on usage errors, 1 on numerical failures.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let rendered = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(stderr, "{rendered}");
            } else {
                let _ = write!(stdout, "{rendered}");
            }
            return code;
        }
    };
    match execute(cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            if e.is_usage() {
                2
            } else {
                1
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        assert_eq!(parse_range("50").unwrap(), SketchRange::single(50));
        assert_eq!(
            parse_range("20:200:20").unwrap(),
            SketchRange {
                start: 20,
                stop: 200,
                step: 20
            }
        );
        assert!(parse_range("1:2").is_err());
        assert!(parse_range("x").is_err());
    }

    #[test]
    fn kernels() {
        let k = |s: &str| {
            KernelArgs {
                kernel: s.into(),
                sigma: 2.0,
            }
            .spec()
        };
        assert_eq!(k("gaussian").unwrap(), KernelSpec::gaussian(2.0));
        assert_eq!(k("polynomial:0.5:3").unwrap(), KernelSpec::polynomial(0.5, 3));
        assert!(k("laplace").is_err());
    }

    #[test]
    fn negative_zero_prints_as_zero() {
        assert_eq!(num(-0.0), "0.0");
        assert_eq!(num(1.5), "1.5");
    }

    #[test]
    fn usage_errors_exit_two() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        assert_eq!(run(["renyi", "entropy"], &mut out, &mut err), 2);
        assert_eq!(run(["renyi", "frobnicate"], &mut out, &mut err), 2);
        assert_eq!(run(["renyi", "entropy", "/nonexistent/file.csv"], &mut out, &mut err), 2);
    }
}
