//! Timing harness comparing evaluation strategies on enumerated cases.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::layout::Layout;
use crate::notation::ContractionSpec;
use crate::planner::{
    enumerate_cases, execute_plan_with, plan_conventional, plan_single_mode, plan_with, CaseDescriptor,
    EvaluationPlan, ExecOptions, PermutePolicy, StrategyChoice,
};
use crate::reference::{contract_naive, max_relative_error, run_counted};
use crate::rng::SplitMix64;
use crate::tensor::DenseTensor;

/// Relative error above which a verified run is marked failed.
pub const VERIFY_TOLERANCE: f64 = 1e-12;

/// Median of `xs`, averaging the middle pair for even lengths; NaN when
/// empty. Reorders `xs`.
pub fn median(xs: &mut [f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let mid = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[mid]
    } else {
        0.5 * (xs[mid - 1] + xs[mid])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BenchStrategy {
    Auto,
    Batched,
    Extended,
    Flattened,
    BatchedGemv,
    Conventional,
    ConventionalNaive,
    Naive,
}

impl BenchStrategy {
    pub const ALL: [BenchStrategy; 8] = [
        BenchStrategy::Auto,
        BenchStrategy::Batched,
        BenchStrategy::Extended,
        BenchStrategy::Flattened,
        BenchStrategy::BatchedGemv,
        BenchStrategy::Conventional,
        BenchStrategy::ConventionalNaive,
        BenchStrategy::Naive,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            BenchStrategy::Auto => "auto",
            BenchStrategy::Batched => "batched",
            BenchStrategy::Extended => "extended",
            BenchStrategy::Flattened => "flattened",
            BenchStrategy::BatchedGemv => "batched-gemv",
            BenchStrategy::Conventional => "conventional",
            BenchStrategy::ConventionalNaive => "conventional-naive",
            BenchStrategy::Naive => "naive",
        }
    }

    /// Plan for this strategy; `None` for the direct-summation oracle.
    pub fn plan(self, spec: &ContractionSpec, la: &Layout, lb: &Layout, lc: &Layout) -> Result<Option<EvaluationPlan>> {
        let choice = match self {
            BenchStrategy::Naive => return Ok(None),
            BenchStrategy::Auto => return plan_single_mode(spec, la, lb, lc).map(Some),
            BenchStrategy::ConventionalNaive => {
                return plan_conventional(spec, la, lb, lc, PermutePolicy::Naive).map(Some)
            }
            BenchStrategy::Batched => StrategyChoice::Batched,
            BenchStrategy::Extended => StrategyChoice::Extended,
            BenchStrategy::Flattened => StrategyChoice::Flattened,
            BenchStrategy::BatchedGemv => StrategyChoice::BatchedGemv,
            BenchStrategy::Conventional => StrategyChoice::Conventional,
        };
        plan_with(spec, la, lb, lc, choice).map(Some)
    }
}

impl fmt::Display for BenchStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for BenchStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|b| b.tag() == s)
            .ok_or_else(|| Error::arg(format!("unknown strategy '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BenchStatus {
    Ok,
    /// The strategy cannot evaluate the case.
    Skipped,
    /// Verified error exceeded [`VERIFY_TOLERANCE`].
    Failed,
}

impl BenchStatus {
    pub fn tag(self) -> &'static str {
        match self {
            BenchStatus::Ok => "ok",
            BenchStatus::Skipped => "skipped",
            BenchStatus::Failed => "failed",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRecord {
    pub case: String,
    pub strategy: BenchStrategy,
    pub extents: BTreeMap<char, usize>,
    pub reps: usize,
    /// `None` for skipped rows.
    pub median_s: Option<f64>,
    pub transposes: Option<u64>,
    pub bytes_copied: Option<u64>,
    /// Present whenever verification ran.
    pub max_rel_err: Option<f64>,
    pub status: BenchStatus,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    /// Case ids such as `1.3`; empty means every case.
    pub cases: Vec<String>,
    pub order_a: usize,
    pub order_b: usize,
    /// Every label gets the same extent.
    pub sizes: Vec<usize>,
    pub strategies: Vec<BenchStrategy>,
    /// Timed repetitions after one warmup; raised to at least 3.
    pub reps: usize,
    pub verify: bool,
    pub seed: u64,
    pub threads: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            cases: Vec::new(),
            order_a: 2,
            order_b: 3,
            sizes: vec![32],
            strategies: vec![BenchStrategy::Auto, BenchStrategy::Conventional],
            reps: 3,
            verify: false,
            seed: 1,
            threads: 1,
        }
    }
}

/// Cases of `config` in enumeration order.
pub fn select_cases(config: &BenchConfig) -> Result<Vec<CaseDescriptor>> {
    let all = enumerate_cases(config.order_a, config.order_b);
    if all.is_empty() {
        return Err(Error::arg(format!("no cases for orders ({}, {})", config.order_a, config.order_b)));
    }
    if config.cases.is_empty() {
        return Ok(all);
    }
    config
        .cases
        .iter()
        .map(|id| {
            all.iter().find(|c| &c.id == id).cloned().ok_or_else(|| Error::arg(format!("unknown case '{id}'")))
        })
        .collect()
}

/// Times every (case, size, strategy) combination. Each measurement runs
/// the strategy once untimed (recording data movement), then `reps` timed
/// runs with `alpha = 1`, `beta = 0`.
pub fn run_bench(config: &BenchConfig) -> Result<Vec<BenchRecord>> {
    if config.sizes.is_empty() || config.strategies.is_empty() {
        return Err(Error::arg("at least one size and one strategy are required"));
    }
    if config.sizes.windows(2).any(|w| w[0] >= w[1]) || config.sizes[0] == 0 {
        return Err(Error::arg("sizes must be positive and strictly ascending"));
    }
    let reps = config.reps.max(3);
    let opts = ExecOptions { threads: config.threads.max(1) };
    let mut rng = SplitMix64::new(config.seed);
    let mut out = Vec::new();
    for case in select_cases(config)? {
        for &size in &config.sizes {
            let spec = case.spec();
            let extents: BTreeMap<char, usize> =
                spec.a.iter().chain(&spec.b).map(|&l| (l, size)).collect();
            let dims = |ls: &[char]| -> Vec<usize> { ls.iter().map(|l| extents[l]).collect() };
            let a = DenseTensor::random(&dims(&case.a), &mut rng)?;
            let b = DenseTensor::random(&dims(&case.b), &mut rng)?;
            let c0 = DenseTensor::packed_zeros(&dims(&case.c))?;
            let oracle = if config.verify {
                let mut want = c0.clone();
                contract_naive(&spec, &a, &b, 1.0, 0.0, &mut want)?;
                Some(want)
            } else {
                None
            };
            for &strategy in &config.strategies {
                let mut record = BenchRecord {
                    case: case.id.clone(),
                    strategy,
                    extents: extents.clone(),
                    reps,
                    median_s: None,
                    transposes: None,
                    bytes_copied: None,
                    max_rel_err: None,
                    status: BenchStatus::Skipped,
                };
                let plan = match strategy.plan(&spec, a.layout(), b.layout(), c0.layout()) {
                    Ok(p) => p,
                    Err(Error::Unsupported(_)) => {
                        out.push(record);
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                let mut c = c0.clone();
                let (moved, copied) = match &plan {
                    Some(p) => {
                        let counters = run_counted(p, &a, &b, 1.0, 0.0, &mut c)?;
                        (counters.transpositions, counters.bytes_copied)
                    }
                    None => {
                        contract_naive(&spec, &a, &b, 1.0, 0.0, &mut c)?;
                        (0, 0)
                    }
                };
                record.transposes = Some(moved);
                record.bytes_copied = Some(copied);
                record.status = BenchStatus::Ok;
                if let Some(want) = &oracle {
                    let err = max_relative_error(c.data(), want.data());
                    record.max_rel_err = Some(err);
                    if err.is_nan() || err > VERIFY_TOLERANCE {
                        record.status = BenchStatus::Failed;
                    }
                }
                let mut times = Vec::with_capacity(reps);
                for _ in 0..reps {
                    let t0 = Instant::now();
                    match &plan {
                        Some(p) => execute_plan_with(p, &a, &b, 1.0, 0.0, &mut c, opts)?,
                        None => contract_naive(&spec, &a, &b, 1.0, 0.0, &mut c)?,
                    }
                    times.push(t0.elapsed().as_secs_f64());
                }
                record.median_s = Some(median(&mut times));
                out.push(record);
            }
        }
    }
    Ok(out)
}

/// Column names of the benchmark CSV.
pub const BENCH_HEADER: [&str; 12] =
    ["case", "strategy", "m", "n", "p", "k", "reps", "median_s", "transposes", "bytes_copied", "max_rel_err", "status"];

/// Writes `records` as CSV under [`BENCH_HEADER`]. Extents of labels
/// outside `m, n, p, k` are omitted; absent values are empty fields.
pub fn write_bench_csv<W: Write>(out: W, records: &[BenchRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(BENCH_HEADER)?;
    let opt = |v: Option<String>| v.unwrap_or_default();
    for r in records {
        let ext = |l: char| opt(r.extents.get(&l).map(|e| e.to_string()));
        w.write_record([
            r.case.clone(),
            r.strategy.tag().to_string(),
            ext('m'),
            ext('n'),
            ext('p'),
            ext('k'),
            r.reps.to_string(),
            opt(r.median_s.map(|s| format!("{s:e}"))),
            opt(r.transposes.map(|t| t.to_string())),
            opt(r.bytes_copied.map(|t| t.to_string())),
            opt(r.max_rel_err.map(|e| format!("{e:e}"))),
            r.status.tag().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
