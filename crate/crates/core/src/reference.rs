//! Ground-truth evaluators: the direct summation oracle and the instrumented
//! copy-based evaluator.

use std::time::{Duration, Instant};

use crate::error::Result;
use crate::instrument::Snapshot;
use crate::layout::next_index;
use crate::notation::ContractionSpec;
use crate::planner::{execute_plan, label_extents, plan_conventional, EvaluationPlan, KernelCall, PermutePolicy, PlanStep};
use crate::tensor::DenseTensor;

/// Kernel invocations by kind.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct KernelCounts {
    pub dot: u64,
    pub ger: u64,
    pub gemv: u64,
    pub gemm: u64,
    pub strided_batched: u64,
    pub extended: u64,
}

impl KernelCounts {
    pub fn total(&self) -> u64 {
        self.dot + self.ger + self.gemv + self.gemm + self.strided_batched + self.extended
    }

    /// Calls `plan` makes per execution.
    pub fn of_plan(plan: &EvaluationPlan) -> Self {
        let repeats: u64 = plan
            .steps()
            .iter()
            .filter_map(|s| match s {
                PlanStep::Loop { extent, .. } => Some(*extent as u64),
                _ => None,
            })
            .product();
        let mut counts = Self::default();
        let slot = match plan.kernel() {
            KernelCall::Dot { .. } => &mut counts.dot,
            KernelCall::Ger { .. } => &mut counts.ger,
            KernelCall::Gemv { .. } => &mut counts.gemv,
            call if call.is_extended() => &mut counts.extended,
            KernelCall::Gemm { args, .. } if args.batch_count == 1 => &mut counts.gemm,
            KernelCall::Gemm { .. } => &mut counts.strided_batched,
        };
        *slot = repeats;
        counts
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EvalCounters {
    pub transpositions: u64,
    pub bytes_copied: u64,
    pub kernel_calls: KernelCounts,
    pub elapsed: Duration,
}

/// `C = alpha * sum_K A B + beta * C` by exhaustive loops over the output
/// and contracted labels. Contracted indices are summed in column-major
/// odometer order. Any number of contracted labels is accepted.
pub fn contract_naive(
    spec: &ContractionSpec,
    a: &DenseTensor,
    b: &DenseTensor,
    alpha: f64,
    beta: f64,
    c: &mut DenseTensor,
) -> Result<()> {
    let extents = label_extents(spec, a.layout(), b.layout(), c.layout())?;
    let cls = spec.classify();
    // Combined index: output labels, then contracted labels.
    let labels: Vec<char> = spec.c.iter().chain(&cls.contracted).copied().collect();
    let slot = |l: &char| labels.iter().position(|x| x == l).expect("label present");
    let a_slots: Vec<usize> = spec.a.iter().map(slot).collect();
    let b_slots: Vec<usize> = spec.b.iter().map(slot).collect();
    let c_dims: Vec<usize> = spec.c.iter().map(|l| extents[l]).collect();
    let k_dims: Vec<usize> = cls.contracted.iter().map(|l| extents[l]).collect();
    let nc = spec.c.len();
    let mut idx = vec![0; labels.len()];
    let offset = |t: &DenseTensor, slots: &[usize], idx: &[usize]| -> usize {
        slots.iter().zip(t.layout().strides()).map(|(&s, &st)| idx[s] * st).sum()
    };
    loop {
        idx[nc..].fill(0);
        let mut sum = 0.0;
        loop {
            sum += a.data()[offset(a, &a_slots, &idx)] * b.data()[offset(b, &b_slots, &idx)];
            if !next_index(&mut idx[nc..], &k_dims) {
                break;
            }
        }
        let at: usize = idx[..nc].iter().zip(c.layout().strides()).map(|(i, s)| i * s).sum();
        let dst = &mut c.data_mut()[at];
        *dst = if beta == 0.0 { alpha * sum } else { alpha * sum + beta * *dst };
        if !next_index(&mut idx[..nc], &c_dims) {
            break;
        }
    }
    Ok(())
}

/// Copy-based evaluation with the fewest permutations.
pub fn contract_conventional(
    spec: &ContractionSpec,
    a: &DenseTensor,
    b: &DenseTensor,
    alpha: f64,
    beta: f64,
    c: &mut DenseTensor,
) -> Result<EvalCounters> {
    contract_conventional_with(spec, a, b, alpha, beta, c, PermutePolicy::Optimized)
}

pub fn contract_conventional_with(
    spec: &ContractionSpec,
    a: &DenseTensor,
    b: &DenseTensor,
    alpha: f64,
    beta: f64,
    c: &mut DenseTensor,
    policy: PermutePolicy,
) -> Result<EvalCounters> {
    let plan = plan_conventional(spec, a.layout(), b.layout(), c.layout(), policy)?;
    run_counted(&plan, a, b, alpha, beta, c)
}

/// Executes `plan` and reports the data movement it caused.
pub fn run_counted(
    plan: &EvaluationPlan,
    a: &DenseTensor,
    b: &DenseTensor,
    alpha: f64,
    beta: f64,
    c: &mut DenseTensor,
) -> Result<EvalCounters> {
    let before = Snapshot::now();
    let t0 = Instant::now();
    execute_plan(plan, a, b, alpha, beta, c)?;
    let elapsed = t0.elapsed();
    let moved = before.elapsed();
    Ok(EvalCounters {
        transpositions: moved.transpositions,
        bytes_copied: moved.bytes_copied,
        kernel_calls: KernelCounts::of_plan(plan),
        elapsed,
    })
}

/// `max |got - want| / max |want|`, or the absolute error when `want` is
/// all zeros. NaN anywhere or a length mismatch gives infinity.
pub fn max_relative_error(got: &[f64], want: &[f64]) -> f64 {
    if got.len() != want.len() {
        return f64::INFINITY;
    }
    let mut diff: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for (&g, &w) in got.iter().zip(want) {
        let d = (g - w).abs();
        if d.is_nan() {
            return f64::INFINITY;
        }
        diff = diff.max(d);
        scale = scale.max(w.abs());
    }
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}
