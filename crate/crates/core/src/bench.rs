//! Synthetic data and the relative-error benchmark harness.

use std::io::{Read, Write};
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::kernel::{build_gram, KernelSpec, SampleSet};
use crate::lowrank::{build_block_lowrank, default_clusters, default_rank, BlockLowRank};
use crate::measures::{estimate_entropy, gram_entropy, Representation};
use crate::oracle::{eigen_spectrum, symmetric_spectrum};
use crate::sketch::{EntropyEstimate, EstimatorConfig, Method};

/// `n` samples from the equal-weight mixture of `N(-1, I_d)` and `N(+1, I_d)`,
/// where `±1` is the all-ones vector with that sign.
pub fn generate_mixture(n: usize, d: usize, seed: u64) -> SampleSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(n * d);
    for _ in 0..n {
        let mean = if rng.random::<bool>() { 1.0 } else { -1.0 };
        for _ in 0..d {
            values.push(mean + rng.sample::<f64, _>(StandardNormal));
        }
    }
    SampleSet::new(n, d, values).expect("n and d are positive")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SketchRange {
    pub start: usize,
    pub stop: usize,
    pub step: usize,
}

impl SketchRange {
    pub fn single(s: usize) -> Self {
        Self { start: s, stop: s, step: 1 }
    }

    /// `start, start + step, ...` up to and including `stop`.
    pub fn values(&self) -> Vec<usize> {
        (self.start..=self.stop).step_by(self.step.max(1)).collect()
    }
}

/// Polynomial degree or Lanczos steps for each method that needs one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodDegrees {
    pub taylor: usize,
    pub chebyshev: usize,
    pub lanczos: usize,
}

impl Default for MethodDegrees {
    fn default() -> Self {
        Self {
            taylor: 30,
            chebyshev: 30,
            lanczos: 15,
        }
    }
}

impl MethodDegrees {
    pub fn for_method(&self, method: Method) -> Option<usize> {
        match method {
            Method::Taylor => Some(self.taylor),
            Method::Chebyshev => Some(self.chebyshev),
            Method::Lanczos => Some(self.lanczos),
            Method::Exact | Method::Trace => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub n: usize,
    pub d: usize,
    pub kernel: KernelSpec,
    pub alphas: Vec<f64>,
    pub methods: Vec<Method>,
    pub sketches: SketchRange,
    pub degrees: MethodDegrees,
    /// Operator representations to benchmark; the c/k grid lives here.
    pub representations: Vec<Representation>,
    pub trials: usize,
    pub seed: u64,
    pub output: Option<PathBuf>,
}

impl BenchmarkSpec {
    pub fn new(n: usize, d: usize) -> Self {
        Self {
            n,
            d,
            kernel: KernelSpec::gaussian(1.0),
            alphas: vec![2.0],
            methods: vec![Method::Chebyshev],
            sketches: SketchRange::single(100),
            degrees: MethodDegrees::default(),
            representations: vec![Representation::Dense],
            trials: 1,
            seed: 0,
            output: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(invalid("n and d must be positive"));
        }
        if self.trials == 0 {
            return Err(invalid("at least one trial is required"));
        }
        if self.alphas.is_empty() || self.methods.is_empty() || self.representations.is_empty() {
            return Err(invalid("alpha, method and representation lists must be non-empty"));
        }
        if self.sketches.step == 0 || self.sketches.start == 0 || self.sketches.start > self.sketches.stop {
            return Err(invalid("sketch range must be non-empty with a positive step"));
        }
        self.kernel.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub method: Method,
    pub alpha: f64,
    pub s: Option<usize>,
    pub m: Option<usize>,
    pub c: Option<usize>,
    pub k: Option<usize>,
    pub seed: u64,
    /// Empty when the estimator failed.
    pub estimate: Option<f64>,
    pub exact: Option<f64>,
    pub rel_error: Option<f64>,
    pub time_s: f64,
}

pub const CSV_HEADER: [&str; 11] = [
    "method", "alpha", "s", "m", "c", "k", "seed", "estimate", "exact", "rel_error", "time_s",
];

fn float_field(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.16e}")).unwrap_or_default()
}

fn int_field(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Streams records as CSV with 17 significant digits.
pub struct RecordWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> RecordWriter<W> {
    pub fn new(writer: W) -> Result<Self> {
        let mut inner = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        inner.write_record(CSV_HEADER)?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, r: &BenchmarkRecord) -> Result<()> {
        self.inner.write_record([
            r.method.as_str().to_string(),
            float_field(Some(r.alpha)),
            int_field(r.s),
            int_field(r.m),
            int_field(r.c),
            int_field(r.k),
            r.seed.to_string(),
            float_field(r.estimate),
            float_field(r.exact),
            float_field(r.rel_error),
            float_field(Some(r.time_s)),
        ])?;
        self.inner.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> Result<W> {
        self.inner
            .into_inner()
            .map_err(|e| crate::error::Error::Io(e.into_error()))
    }
}

pub fn read_records<R: Read>(reader: R) -> Result<Vec<BenchmarkRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    rdr.deserialize()
        .map(|r| r.map_err(Into::into))
        .collect()
}

pub fn write_json<W: Write>(writer: W, records: &[BenchmarkRecord]) -> Result<()> {
    serde_json::to_writer_pretty(writer, records).map_err(|e| crate::error::Error::Io(e.into()))
}

enum Operator {
    Dense,
    LowRank(Box<BlockLowRank>, usize, usize),
}

/// Runs every (representation, method, alpha, s) point for `trials` seeds.
/// `sink` sees each record as soon as it is produced. Estimator failures
/// yield a record with an empty estimate.
pub fn run_benchmark_with<F>(spec: &BenchmarkSpec, mut sink: F) -> Result<Vec<BenchmarkRecord>>
where
    F: FnMut(&BenchmarkRecord) -> Result<()>,
{
    spec.validate()?;
    let data = generate_mixture(spec.n, spec.d, spec.seed);
    let gram = build_gram(&data, &spec.kernel)?;
    let spectrum = eigen_spectrum(&gram)?;
    let oracle = spec
        .alphas
        .iter()
        .map(|&a| spectrum.entropy(a))
        .collect::<Result<Vec<_>>>()?;

    let mut records = Vec::new();
    for repr in &spec.representations {
        let op = match *repr {
            Representation::Dense => Operator::Dense,
            Representation::BlockLowRank { clusters, rank } => {
                let c = clusters.unwrap_or_else(|| default_clusters(spec.n));
                let k = rank.unwrap_or_else(|| default_rank(spec.n));
                Operator::LowRank(Box::new(build_block_lowrank(&data, &spec.kernel, c, k, spec.seed)?), c, k)
            }
        };
        let (c, k) = match &op {
            Operator::Dense => (None, None),
            Operator::LowRank(_, c, k) => (Some(*c), Some(*k)),
        };
        for &method in &spec.methods {
            let m = spec.degrees.for_method(method);
            let s_values: Vec<Option<usize>> = if method == Method::Exact {
                vec![None]
            } else {
                spec.sketches.values().into_iter().map(Some).collect()
            };
            for (&alpha, &exact) in spec.alphas.iter().zip(&oracle) {
                for &s in &s_values {
                    for trial in 0..spec.trials {
                        let seed = spec.seed.wrapping_add(trial as u64);
                        let mut config = EstimatorConfig::new(alpha).with_seed(seed);
                        if let Some(s) = s {
                            config = config.with_sketches(s);
                        }
                        if let Some(m) = m {
                            config = config.with_degree(m);
                        }
                        let outcome: Result<EntropyEstimate> = match (&op, method) {
                            (Operator::Dense, _) => gram_entropy(&gram, method, &config),
                            (Operator::LowRank(blr, ..), Method::Exact) => symmetric_spectrum(&blr.materialize())
                                .and_then(|sp| {
                                    let v = sp.raw_entropy(alpha)?;
                                    Ok(EntropyEstimate {
                                        value: v,
                                        trace: sp.trace_power(alpha),
                                        method,
                                        alpha,
                                        sketches: 0,
                                        degree: 0,
                                        lambda_max: None,
                                        elapsed_secs: 0.0,
                                    })
                                }),
                            (Operator::LowRank(blr, ..), _) => estimate_entropy(blr.as_ref(), method, &config),
                        };
                        let (estimate, time_s) = match outcome {
                            Ok(e) => (Some(e.value), e.elapsed_secs),
                            Err(_) => (None, 0.0),
                        };
                        let record = BenchmarkRecord {
                            method,
                            alpha,
                            s,
                            m,
                            c,
                            k,
                            seed,
                            estimate,
                            exact: Some(exact),
                            rel_error: estimate.map(|e| (e - exact).abs() / exact.abs()),
                            time_s,
                        };
                        sink(&record)?;
                        records.push(record);
                    }
                }
            }
        }
    }
    Ok(records)
}

/// Runs the benchmark, streaming CSV to `spec.output` when set.
pub fn run_benchmark(spec: &BenchmarkSpec) -> Result<Vec<BenchmarkRecord>> {
    match &spec.output {
        Some(path) => {
            let mut w = RecordWriter::new(std::io::BufWriter::new(std::fs::File::create(path)?))?;
            run_benchmark_with(spec, |r| w.write(r))
        }
        None => run_benchmark_with(spec, |_| Ok(())),
    }
}

/// Mean and standard deviation of the relative errors of `records`,
/// skipping failed rows. `None` when no row succeeded.
pub fn mre_sd<'a>(records: impl IntoIterator<Item = &'a BenchmarkRecord>) -> Option<(f64, f64)> {
    let errs: Vec<f64> = records.into_iter().filter_map(|r| r.rel_error).collect();
    if errs.is_empty() {
        return None;
    }
    let n = errs.len() as f64;
    let mean = errs.iter().sum::<f64>() / n;
    let var = errs.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}
