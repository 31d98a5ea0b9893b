//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure.

use std::alloc::{GlobalAlloc, Layout as AllocLayout, System};
use std::cell::Cell;
use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use tcontract::bench::{run_bench, write_bench_csv, BenchConfig, BenchStatus, BenchStrategy, BENCH_HEADER};
use tcontract::blas::strided_batched_gemm_ex;
use tcontract::planner::{
    classify_case, enumerate_cases, execute_plan, plan_single_mode, plan_with, CaseClass, CaseDescriptor,
    KernelCall, PermutePolicy, Role, Strategy, StrategyChoice,
};
use tcontract::reference::{contract_conventional_with, contract_naive, max_relative_error, run_counted};
use tcontract::tucker::{hooi, synthetic_tucker};
use tcontract::{parse_contraction, ContractionSpec, DenseTensor, ModePermutation, SplitMix64};

struct CountingAlloc;

thread_local! {
    static ALLOCATIONS: Cell<u64> = const { Cell::new(0) };
}

unsafe impl GlobalAlloc for CountingAlloc {
    unsafe fn alloc(&self, layout: AllocLayout) -> *mut u8 {
        let _ = ALLOCATIONS.try_with(|n| n.set(n.get() + 1));
        unsafe { System.alloc(layout) }
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: AllocLayout) {
        unsafe { System.dealloc(ptr, layout) }
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: AllocLayout, new_size: usize) -> *mut u8 {
        let _ = ALLOCATIONS.try_with(|n| n.set(n.get() + 1));
        unsafe { System.realloc(ptr, layout, new_size) }
    }
}

#[global_allocator]
static GLOBAL: CountingAlloc = CountingAlloc;

fn allocations() -> u64 {
    ALLOCATIONS.with(Cell::get)
}

type Outcome = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_operands(
    spec: &ContractionSpec,
    extents: &BTreeMap<char, usize>,
    rng: &mut SplitMix64,
) -> (DenseTensor, DenseTensor, DenseTensor) {
    let dims = |ls: &[char]| ls.iter().map(|l| extents[l]).collect::<Vec<_>>();
    (
        DenseTensor::random(&dims(&spec.a), rng).unwrap(),
        DenseTensor::random(&dims(&spec.b), rng).unwrap(),
        DenseTensor::random(&dims(&spec.c), rng).unwrap(),
    )
}

fn random_extents(case: &CaseDescriptor, rng: &mut SplitMix64) -> BTreeMap<char, usize> {
    case.a.iter().chain(&case.b).map(|&l| (l, rng.range_inclusive(1, 8))).collect()
}

fn table_conformance() -> Outcome {
    let cases = enumerate_cases(2, 3);
    ensure(cases.len() == 36, || format!("{} cases", cases.len()))?;
    let mut counts = BTreeMap::new();
    let mut exceptional = Vec::new();
    for case in &cases {
        let class = classify_case(case).map_err(|e| e.to_string())?;
        *counts.entry(class.to_string()).or_insert(0) += 1;
        if class == CaseClass::Exceptional {
            exceptional.push(case.id.clone());
        }
    }
    let gemm = counts.get("single-gemm").copied().unwrap_or(0);
    let batched = cases.iter().filter(|c| c.batched_capable()).count();
    let exc = exceptional.len();
    ensure(gemm == 8 && batched == 28 && exc == 8, || format!("partition {gemm}/{batched}/{exc}"))?;
    let want = ["3.4", "3.6", "4.4", "4.6", "5.4", "5.6", "6.4", "6.6"];
    ensure(exceptional == want, || format!("exceptional set {exceptional:?}"))?;
    Ok(format!("36 cases, {gemm} single-GEMM / {batched} strided-batched / {exc} exceptional"))
}

fn oracle_sweep() -> Outcome {
    let mut rng = SplitMix64::new(2024);
    let mut worst: f64 = 0.0;
    let mut runs = 0;
    for case in enumerate_cases(2, 3) {
        for _ in 0..5 {
            let extents = random_extents(&case, &mut rng);
            let spec = case.spec();
            let (a, b, c0) = random_operands(&spec, &extents, &mut rng);
            let (alpha, beta) = (rng.uniform_signed(), rng.uniform_signed());
            let plan = plan_single_mode(&spec, a.layout(), b.layout(), c0.layout()).map_err(|e| e.to_string())?;
            let mut got = c0.clone();
            execute_plan(&plan, &a, &b, alpha, beta, &mut got).map_err(|e| e.to_string())?;
            let mut want = c0.clone();
            contract_naive(&spec, &a, &b, alpha, beta, &mut want).map_err(|e| e.to_string())?;
            let err = max_relative_error(got.data(), want.data());
            ensure(err <= 1e-12, || format!("case {} extents {extents:?}: error {err:e}", case.id))?;
            worst = worst.max(err);
            runs += 1;
        }
    }
    Ok(format!("{runs} runs, worst relative error {worst:.2e}"))
}

fn zero_transpositions() -> Outcome {
    let mut rng = SplitMix64::new(7);
    for case in enumerate_cases(2, 3) {
        let extents = random_extents(&case, &mut rng);
        let spec = case.spec();
        let (a, b, mut c) = random_operands(&spec, &extents, &mut rng);
        let plan = plan_single_mode(&spec, a.layout(), b.layout(), c.layout()).map_err(|e| e.to_string())?;
        ensure(plan.transpositions() == 0, || format!("case {} plans {} permutations", case.id, plan.transpositions()))?;
        let moved = run_counted(&plan, &a, &b, 1.0, 0.0, &mut c).map_err(|e| e.to_string())?;
        ensure(moved.transpositions == 0 && moved.bytes_copied == 0, || {
            format!("case {}: {} transpositions, {} bytes copied", case.id, moved.transpositions, moved.bytes_copied)
        })?;
    }
    Ok("36 plans, 0 transpositions and 0 bytes copied".into())
}

/// Moves the extended operand's batch label from its first to its last
/// mode, making the case plannable without extended operands.
fn permuted_equivalent(case: &CaseDescriptor, batch: char) -> (ContractionSpec, Role) {
    let mut spec = case.spec();
    let role = if spec.a[0] == batch { Role::A } else { Role::B };
    let labels = if role == Role::A { &mut spec.a } else { &mut spec.b };
    labels.rotate_left(1);
    (spec, role)
}

fn extended_equivalence() -> Outcome {
    let mut rng = SplitMix64::new(11);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for case in enumerate_cases(2, 3).into_iter().filter(|c| c.class == CaseClass::Exceptional) {
        for _ in 0..5 {
            let extents = random_extents(&case, &mut rng);
            let spec = case.spec();
            let (a, b, c0) = random_operands(&spec, &extents, &mut rng);
            let plan = plan_with(&spec, a.layout(), b.layout(), c0.layout(), StrategyChoice::Extended)
                .map_err(|e| e.to_string())?;
            let batch_labels = plan.batch_labels().map(<[char]>::to_vec);
            let (x, y, args) = match plan.kernel() {
                KernelCall::Gemm { x, y, args } if plan.kernel().is_extended() && plan.loop_labels().is_empty() => {
                    (*x, *y, *args)
                }
                other => return Err(format!("case {} extents {extents:?} plans {}", case.id, other.name())),
            };
            let batch = match batch_labels.as_deref() {
                Some(&[l]) => l,
                other => return Err(format!("case {}: batch labels {other:?}", case.id)),
            };
            let pick = |r: Role| if r == Role::A { a.data() } else { b.data() };
            let mut got = c0.clone();
            let before = allocations();
            strided_batched_gemm_ex(&args.with_scalars(1.0, 0.0), pick(x), pick(y), got.data_mut())
                .map_err(|e| e.to_string())?;
            let allocated = allocations() - before;
            ensure(allocated == 0, || format!("case {}: {allocated} allocations", case.id))?;

            let (pspec, role) = permuted_equivalent(&case, batch);
            let src = if role == Role::A { &a } else { &b };
            let order = src.order();
            let perm = ModePermutation::new((1..order).chain([0]).collect()).map_err(|e| e.to_string())?;
            let moved = src.permute_copy(&perm).map_err(|e| e.to_string())?;
            let (pa, pb) = if role == Role::A { (&moved, &b) } else { (&a, &moved) };
            let pplan = plan_single_mode(&pspec, pa.layout(), pb.layout(), c0.layout()).map_err(|e| e.to_string())?;
            ensure(pplan.strategy() != Strategy::ExtendedBatched, || format!("case {}: permuted form still extended", case.id))?;
            let mut want = c0.clone();
            execute_plan(&pplan, pa, pb, 1.0, 0.0, &mut want).map_err(|e| e.to_string())?;
            let err = max_relative_error(got.data(), want.data());
            ensure(err <= 1e-13, || format!("case {} extents {extents:?}: error {err:e}", case.id))?;
            worst = worst.max(err);
            checked += 1;
        }
    }
    Ok(format!("{checked} runs over 8 cases, worst relative error {worst:.2e}, 0 allocations"))
}

fn factorial(n: usize) -> usize {
    (1..=n).product()
}

fn count_law() -> Outcome {
    for a in 1..=3 {
        for b in 1..=3 {
            let got = enumerate_cases(a, b).len();
            let want = factorial(a + b - 2) * a * b;
            ensure(got == want, || format!("orders ({a}, {b}): {got} cases, expected {want}"))?;
        }
    }
    Ok("all order pairs in {1,2,3}^2 match (a+b-2)! a b".into())
}

fn nested_batching() -> Outcome {
    let spec = parse_contraction("C[mnpq] = A[mkp] * B[nkq]").map_err(|e| e.to_string())?;
    let mut notes = Vec::new();
    for (p, q) in [(4, 7), (7, 4)] {
        let extents: BTreeMap<char, usize> = [('m', 5), ('n', 3), ('k', 6), ('p', p), ('q', q)].into_iter().collect();
        let mut rng = SplitMix64::new(p as u64 * 10 + q as u64);
        let (a, b, c0) = random_operands(&spec, &extents, &mut rng);
        let plan = plan_single_mode(&spec, a.layout(), b.layout(), c0.layout()).map_err(|e| e.to_string())?;
        ensure(plan.strategy() == Strategy::NestedBatched, || format!("strategy {}", plan.strategy()))?;
        let larger = if p >= q { 'p' } else { 'q' };
        ensure(plan.batch_labels() == Some(&[larger][..]), || {
            format!("(p, q) = ({p}, {q}) batches {:?}", plan.batch_labels())
        })?;
        let mut got = c0.clone();
        execute_plan(&plan, &a, &b, 0.75, -0.5, &mut got).map_err(|e| e.to_string())?;
        let mut want = c0.clone();
        contract_naive(&spec, &a, &b, 0.75, -0.5, &mut want).map_err(|e| e.to_string())?;
        let err = max_relative_error(got.data(), want.data());
        ensure(err <= 1e-12, || format!("(p, q) = ({p}, {q}): error {err:e}"))?;
        notes.push(format!("({p},{q}) batches {larger}"));
    }
    Ok(notes.join(", "))
}

fn tucker_recovery() -> Outcome {
    let mut rng = SplitMix64::new(30);
    let t = synthetic_tucker([30, 30, 30], [4, 4, 4], &mut rng).map_err(|e| e.to_string())?;
    let model = hooi(&t, [4, 4, 4], 20).map_err(|e| e.to_string())?;
    let last = *model.fit_history.last().ok_or("empty fit history")?;
    ensure(last <= 1e-8, || format!("final relative error {last:e}"))?;
    let ortho = model.orthonormality_history.iter().copied().fold(0.0, f64::max);
    ensure(ortho <= 1e-10, || format!("orthonormality error {ortho:e}"))?;
    let rises = model.fit_history.windows(2).filter(|w| w[1] > w[0] + 1e-10).count();
    ensure(rises == 0, || format!("fit history rose {rises} times: {:?}", model.fit_history))?;
    Ok(format!("final relative error {last:.2e}, worst orthonormality {ortho:.2e}"))
}

fn naive_baseline_transpositions() -> Outcome {
    let case = enumerate_cases(2, 3).into_iter().find(|c| c.id == "2.4").ok_or("no case 2.4")?;
    let spec = case.spec();
    let extents: BTreeMap<char, usize> = [('m', 4), ('n', 5), ('p', 6), ('k', 3)].into_iter().collect();
    let mut rng = SplitMix64::new(24);
    let (a, b, mut c) = random_operands(&spec, &extents, &mut rng);
    let counters =
        contract_conventional_with(&spec, &a, &b, 1.0, 0.0, &mut c, PermutePolicy::Naive).map_err(|e| e.to_string())?;
    ensure(counters.transpositions == 4, || format!("{} transpositions", counters.transpositions))?;
    Ok(format!("{} = {} transpositions", spec, counters.transpositions))
}

fn benchmark_analog() -> Outcome {
    let config = BenchConfig {
        cases: vec!["1.3".into()],
        sizes: vec![32, 64, 128],
        strategies: vec![BenchStrategy::Batched, BenchStrategy::Conventional],
        reps: 3,
        ..BenchConfig::default()
    };
    let records = run_bench(&config).map_err(|e| e.to_string())?;
    ensure(records.len() == 6, || format!("{} records", records.len()))?;
    let mut ratios = Vec::new();
    for pair in records.chunks(2) {
        let (batched, conv) = (&pair[0], &pair[1]);
        ensure(batched.status == BenchStatus::Ok && conv.status == BenchStatus::Ok, || "skipped row".into())?;
        ensure(batched.transposes == Some(0), || format!("batched transposes {:?}", batched.transposes))?;
        ensure(conv.transposes.is_some_and(|t| t >= 1), || format!("conventional transposes {:?}", conv.transposes))?;
        let (tb, tc) = (batched.median_s.unwrap_or(f64::NAN), conv.median_s.unwrap_or(f64::NAN));
        ratios.push(format!("{}: {:.2}x", batched.extents[&'m'], tc / tb));
    }
    let mut buf = Vec::new();
    write_bench_csv(&mut buf, &records).map_err(|e| e.to_string())?;
    let text = String::from_utf8(buf).map_err(|e| e.to_string())?;
    let mut lines = text.lines();
    ensure(lines.next() == Some(BENCH_HEADER.join(",").as_str()), || "header mismatch".into())?;
    let masked: Vec<String> = lines
        .map(|l| {
            let mut f: Vec<&str> = l.split(',').collect();
            if f.len() == 12 {
                f[7] = "*";
            }
            f.join(",")
        })
        .collect();
    let golden = [
        "1.3,batched,32,32,32,32,3,*,0,0,,ok",
        "1.3,conventional,32,32,32,32,3,*,1,262144,,ok",
        "1.3,batched,64,64,64,64,3,*,0,0,,ok",
        "1.3,conventional,64,64,64,64,3,*,1,2097152,,ok",
        "1.3,batched,128,128,128,128,3,*,0,0,,ok",
        "1.3,conventional,128,128,128,128,3,*,1,16777216,,ok",
    ];
    ensure(masked == golden, || format!("csv rows {masked:?}"))?;
    Ok(format!("conventional/batched median time ratio by size {}", ratios.join(", ")))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("table conformance", Duration::from_secs(1), table_conformance),
        ("oracle equivalence sweep", Duration::from_secs(30), oracle_sweep),
        ("zero-transposition guarantee", Duration::from_secs(5), zero_transpositions),
        ("extended-kernel equivalence", Duration::from_secs(10), extended_equivalence),
        ("count law", Duration::from_secs(1), count_law),
        ("nested batching", Duration::from_secs(5), nested_batching),
        ("tucker recovery", Duration::from_secs(60), tucker_recovery),
        ("naive baseline transposition count", Duration::from_secs(1), naive_baseline_transpositions),
        ("qualitative benchmark analog", Duration::from_secs(120), benchmark_analog),
    ];
    let mut failed = 0;
    for (name, limit, run) in criteria {
        let t0 = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = t0.elapsed();
        let outcome = outcome.and_then(|note| {
            if elapsed <= limit {
                Ok(note)
            } else {
                Err(format!("took {:.2} s, limit {} s", elapsed.as_secs_f64(), limit.as_secs()))
            }
        });
        match outcome {
            Ok(note) => println!("PASS  {name} ({:.2} s): {note}", elapsed.as_secs_f64()),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name} ({:.2} s): {why}", elapsed.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        println!("{failed} of 9 criteria failed");
        std::process::exit(1);
    }
    println!("all 9 criteria passed");
}
