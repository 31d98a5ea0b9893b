use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use tcontract::bench::{run_bench, write_bench_csv, BenchConfig, BenchStatus, BenchStrategy, VERIFY_TOLERANCE};
use tcontract::io::{read_dtns, write_dtns};
use tcontract::planner::{enumerate_cases, execute_plan_with, CaseClass, ExecOptions};
use tcontract::tucker::{hooi, synthetic_tucker, write_fit_csv};
use tcontract::{
    contract_naive, max_relative_error, parse_contraction, plan_single_mode, DenseTensor, Layout, SplitMix64,
};

/// Plan, run and benchmark dense tensor contractions.
#[derive(Parser)]
#[command(name = "tcontract", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Seed for generated tensors.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Workers for the batch loop of strided batched calls.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Cross-check results against the direct summation oracle.
    #[arg(long, global = true)]
    verify: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Print the evaluation plan for an expression.
    Plan {
        expr: String,
        /// Extents as `label=extent,...`.
        #[arg(long, value_parser = parse_dims)]
        dims: BTreeMap<char, usize>,
        #[arg(long, default_value = "auto")]
        strategy: BenchStrategy,
    },
    /// Evaluate an expression on tensors stored in DTNS1 files.
    Contract {
        expr: String,
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Initial C; zeros when omitted.
        #[arg(long)]
        c: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the expression's alpha.
        #[arg(long, allow_negative_numbers = true)]
        alpha: Option<f64>,
        /// Overrides the expression's beta.
        #[arg(long, allow_negative_numbers = true)]
        beta: Option<f64>,
        #[arg(long, default_value = "auto")]
        strategy: BenchStrategy,
    },
    /// List every single-mode contraction between operands of the given orders.
    Cases {
        #[arg(long, default_value_t = 2)]
        order_a: usize,
        #[arg(long, default_value_t = 3)]
        order_b: usize,
        /// Extent of every label when verifying.
        #[arg(long, default_value_t = 4)]
        dims: usize,
    },
    /// Time evaluation strategies and write CSV.
    Bench {
        /// Case ids such as `1.3`; all cases when omitted.
        #[arg(long, value_delimiter = ',')]
        cases: Vec<String>,
        #[arg(long, default_value_t = 2)]
        order_a: usize,
        #[arg(long, default_value_t = 3)]
        order_b: usize,
        /// Ascending extents, applied to every label.
        #[arg(long, value_delimiter = ',', default_value = "32")]
        sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "auto,conventional")]
        strategies: Vec<BenchStrategy>,
        #[arg(long, default_value_t = 3)]
        reps: usize,
        /// Output file; standard output when omitted.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Tucker decomposition by higher-order orthogonal iteration.
    Tucker {
        #[arg(long)]
        input: PathBuf,
        /// Core extents `i,j,k`.
        #[arg(long, value_delimiter = ',', num_args = 1)]
        core: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        iters: usize,
        /// Prefix for `G.dtns`, `A.dtns`, `B.dtns`, `C.dtns` and `fit.csv`.
        #[arg(long)]
        out_prefix: String,
    },
    /// Write a random tensor, optionally of exact Tucker rank.
    Random {
        #[arg(long, value_delimiter = ',')]
        dims: Vec<usize>,
        /// Core extents for an order-3 tensor of exact multilinear rank.
        #[arg(long, value_delimiter = ',')]
        rank: Option<Vec<usize>>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_dims(s: &str) -> std::result::Result<BTreeMap<char, usize>, String> {
    let mut out = BTreeMap::new();
    for item in s.split(',').filter(|t| !t.trim().is_empty()) {
        let (label, extent) = item.split_once('=').ok_or_else(|| format!("expected label=extent, got '{item}'"))?;
        let mut chars = label.trim().chars();
        let (Some(l), None) = (chars.next(), chars.next()) else {
            return Err(format!("label '{label}' is not a single letter"));
        };
        let e: usize = extent.trim().parse().map_err(|_| format!("bad extent '{extent}'"))?;
        if out.insert(l, e).is_some() {
            return Err(format!("label '{l}' given twice"));
        }
    }
    Ok(out)
}

fn packed(labels: &[char], dims: &BTreeMap<char, usize>) -> Result<Layout> {
    let extents = labels
        .iter()
        .map(|l| dims.get(l).copied().with_context(|| format!("no extent given for label '{l}'")))
        .collect::<Result<Vec<_>>>()?;
    Ok(Layout::packed(&extents)?)
}

fn create(path: &PathBuf) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn cmd_plan(expr: &str, dims: &BTreeMap<char, usize>, strategy: BenchStrategy) -> Result<ExitCode> {
    let spec = parse_contraction(expr)?;
    let (la, lb, lc) = (packed(&spec.a, dims)?, packed(&spec.b, dims)?, packed(&spec.c, dims)?);
    match strategy.plan(&spec, &la, &lb, &lc)? {
        Some(plan) => writeln!(io::stdout(), "{}", plan.describe())?,
        None => writeln!(io::stdout(), "{spec}\nstrategy: naive\ntranspositions: 0\nkernel: direct summation")?,
    }
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn cmd_contract(
    common: &Common,
    expr: &str,
    a: &PathBuf,
    b: &PathBuf,
    c: Option<&PathBuf>,
    out: &PathBuf,
    alpha: Option<f64>,
    beta: Option<f64>,
    strategy: BenchStrategy,
) -> Result<ExitCode> {
    let spec = parse_contraction(expr)?;
    let (alpha, beta) = (alpha.unwrap_or(spec.alpha), beta.unwrap_or(spec.beta));
    let ta = read_dtns(a).with_context(|| format!("reading {}", a.display()))?;
    let tb = read_dtns(b).with_context(|| format!("reading {}", b.display()))?;
    let mut tc = match c {
        Some(path) => read_dtns(path).with_context(|| format!("reading {}", path.display()))?,
        None => {
            let mut dims = BTreeMap::new();
            for (labels, t) in [(&spec.a, &ta), (&spec.b, &tb)] {
                if labels.len() != t.order() {
                    bail!(tcontract::Error::InvalidArgument(format!(
                        "expression gives {} labels for an order-{} tensor",
                        labels.len(),
                        t.order()
                    )));
                }
                dims.extend(labels.iter().copied().zip(t.dims().iter().copied()));
            }
            DenseTensor::zeros(packed(&spec.c, &dims)?)
        }
    };
    let c0 = tc.clone();
    match strategy.plan(&spec, ta.layout(), tb.layout(), tc.layout())? {
        Some(plan) => {
            let opts = ExecOptions { threads: common.threads.max(1) };
            execute_plan_with(&plan, &ta, &tb, alpha, beta, &mut tc, opts)?;
        }
        None => contract_naive(&spec, &ta, &tb, alpha, beta, &mut tc)?,
    }
    let mut status = ExitCode::SUCCESS;
    if common.verify {
        let mut want = c0;
        contract_naive(&spec, &ta, &tb, alpha, beta, &mut want)?;
        let err = max_relative_error(&tc.to_vec(), &want.to_vec());
        writeln!(io::stdout(), "max_rel_err: {err:e}")?;
        if err.is_nan() || err > VERIFY_TOLERANCE {
            eprintln!("verification failed: relative error {err:e} exceeds {VERIFY_TOLERANCE:e}");
            status = ExitCode::from(3);
        }
    }
    write_dtns(out, &tc).with_context(|| format!("writing {}", out.display()))?;
    Ok(status)
}

fn cmd_cases(common: &Common, order_a: usize, order_b: usize, extent: usize) -> Result<ExitCode> {
    if !(1..=3).contains(&order_a) || !(1..=3).contains(&order_b) {
        bail!(tcontract::Error::InvalidArgument(format!("orders must lie in 1..=3, got ({order_a}, {order_b})")));
    }
    if extent == 0 {
        bail!(tcontract::Error::InvalidArgument("extents must be positive".into()));
    }
    let cases = enumerate_cases(order_a, order_b);
    let mut rng = SplitMix64::new(common.seed);
    let mut failures = 0;
    let stdout = io::stdout();
    let mut w = stdout.lock();
    for case in &cases {
        let dims: BTreeMap<char, usize> = case.a.iter().chain(&case.b).map(|&l| (l, extent)).collect();
        let spec = case.spec();
        let (la, lb, lc) = (packed(&case.a, &dims)?, packed(&case.b, &dims)?, packed(&case.c, &dims)?);
        let plan = plan_single_mode(&spec, &la, &lb, &lc)?;
        write!(w, "{:<6} {:<28} {:<16} {:<17} {}", case.id, spec.to_string(), case.class.to_string(), plan.strategy().to_string(), plan.notation())?;
        if common.verify {
            let a = DenseTensor::random_in(la, &mut rng);
            let b = DenseTensor::random_in(lb, &mut rng);
            let c0 = DenseTensor::random_in(lc, &mut rng);
            let (alpha, beta) = (rng.uniform_signed(), rng.uniform_signed());
            let mut got = c0.clone();
            execute_plan_with(&plan, &a, &b, alpha, beta, &mut got, ExecOptions { threads: common.threads.max(1) })?;
            let mut want = c0;
            contract_naive(&spec, &a, &b, alpha, beta, &mut want)?;
            let err = max_relative_error(&got.to_vec(), &want.to_vec());
            let ok = err <= VERIFY_TOLERANCE;
            failures += usize::from(!ok);
            write!(w, "  err={err:.2e} {}", if ok { "ok" } else { "FAILED" })?;
        }
        writeln!(w)?;
    }
    let count = |class: CaseClass| cases.iter().filter(|c| c.class == class).count();
    writeln!(
        w,
        "{} cases: {} single-gemm, {} strided-batched, {} exceptional",
        cases.len(),
        count(CaseClass::SingleGemm),
        cases.iter().filter(|c| c.batched_capable()).count(),
        count(CaseClass::Exceptional)
    )?;
    if failures > 0 {
        eprintln!("verification failed for {failures} cases");
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_bench(common: &Common, config: BenchConfig, csv: Option<&PathBuf>) -> Result<ExitCode> {
    let config = BenchConfig { verify: common.verify, seed: common.seed, threads: common.threads, ..config };
    let records = run_bench(&config)?;
    match csv {
        Some(path) => write_bench_csv(create(path)?, &records)?,
        None => write_bench_csv(io::stdout().lock(), &records)?,
    }
    let failed = records.iter().filter(|r| r.status == BenchStatus::Failed).count();
    if failed > 0 {
        eprintln!("verification failed for {failed} rows");
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_tucker(input: &PathBuf, core: &[usize], iters: usize, prefix: &str) -> Result<ExitCode> {
    let Ok(core) = <[usize; 3]>::try_from(core) else {
        bail!(tcontract::Error::InvalidArgument(format!("expected three core extents, got {}", core.len())));
    };
    let t = read_dtns(input).with_context(|| format!("reading {}", input.display()))?;
    let model = hooi(&t, core, iters)?;
    for (name, tensor) in [("G", &model.core), ("A", &model.factors[0]), ("B", &model.factors[1]), ("C", &model.factors[2])] {
        let path = format!("{prefix}{name}.dtns");
        write_dtns(&path, tensor).with_context(|| format!("writing {path}"))?;
    }
    let fit = PathBuf::from(format!("{prefix}fit.csv"));
    write_fit_csv(create(&fit)?, &model.fit_history)?;
    if let Some(last) = model.fit_history.last() {
        writeln!(io::stdout(), "iterations: {}\nrelative error: {last:e}", model.fit_history.len())?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_random(common: &Common, dims: &[usize], rank: Option<&[usize]>, out: &PathBuf) -> Result<ExitCode> {
    let mut rng = SplitMix64::new(common.seed);
    let t = match rank {
        None => DenseTensor::random(dims, &mut rng)?,
        Some(rank) => {
            let (Ok(d), Ok(r)) = (<[usize; 3]>::try_from(dims), <[usize; 3]>::try_from(rank)) else {
                bail!(tcontract::Error::InvalidArgument("exact-rank tensors need three dims and three ranks".into()));
            };
            synthetic_tucker(d, r, &mut rng)?
        }
    };
    write_dtns(out, &t).with_context(|| format!("writing {}", out.display()))?;
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let common = &cli.common;
    match &cli.command {
        Command::Plan { expr, dims, strategy } => cmd_plan(expr, dims, *strategy),
        Command::Contract { expr, a, b, c, out, alpha, beta, strategy } => {
            cmd_contract(common, expr, a, b, c.as_ref(), out, *alpha, *beta, *strategy)
        }
        Command::Cases { order_a, order_b, dims } => cmd_cases(common, *order_a, *order_b, *dims),
        Command::Bench { cases, order_a, order_b, sizes, strategies, reps, csv } => {
            let config = BenchConfig {
                cases: cases.clone(),
                order_a: *order_a,
                order_b: *order_b,
                sizes: sizes.clone(),
                strategies: strategies.clone(),
                reps: *reps,
                ..BenchConfig::default()
            };
            cmd_bench(common, config, csv.as_ref())
        }
        Command::Tucker { input, core, iters, out_prefix } => cmd_tucker(input, core, *iters, out_prefix),
        Command::Random { dims, rank, out } => cmd_random(common, dims, rank.as_deref(), out),
    }
}

/// 1 for I/O failures, 2 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<io::Error>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<tcontract::Error>() {
            return match e {
                tcontract::Error::Io(_) | tcontract::Error::Csv(_) => 1,
                _ => 2,
            };
        }
    }
    2
}

fn is_broken_pipe(err: &anyhow::Error) -> bool {
    err.chain().any(|c| c.downcast_ref::<io::Error>().is_some_and(|e| e.kind() == io::ErrorKind::BrokenPipe))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) if is_broken_pipe(&err) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
