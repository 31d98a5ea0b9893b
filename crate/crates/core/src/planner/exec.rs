use super::{plan_single_mode, EvaluationPlan, KernelCall, PlanStep, Role};
use crate::blas::{dot, gemv, ger, strided_batched_gemm_ex, strided_batched_gemm_par};
use crate::error::{Error, Result};
use crate::layout::Layout;
use crate::notation::ContractionSpec;
use crate::tensor::{permute_into, DenseTensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExecOptions {
    /// Workers for the batch loop of plain strided batched calls.
    pub threads: usize,
}

impl Default for ExecOptions {
    fn default() -> Self {
        Self { threads: 1 }
    }
}

/// Runs `plan` with scalars `alpha` and `beta` (the plan's own scalars are
/// ignored). Plans without permute steps allocate nothing.
pub fn execute_plan(
    plan: &EvaluationPlan,
    a: &DenseTensor,
    b: &DenseTensor,
    alpha: f64,
    beta: f64,
    c: &mut DenseTensor,
) -> Result<()> {
    execute_plan_with(plan, a, b, alpha, beta, c, ExecOptions::default())
}

pub fn execute_plan_with(
    plan: &EvaluationPlan,
    a: &DenseTensor,
    b: &DenseTensor,
    alpha: f64,
    beta: f64,
    c: &mut DenseTensor,
    opts: ExecOptions,
) -> Result<()> {
    for (role, t) in [(Role::A, a.layout()), (Role::B, b.layout()), (Role::C, c.layout())] {
        if plan.layout(role) != t {
            return Err(Error::Consistency(format!(
                "plan expects {} with layout {}, got {}",
                role.name(),
                plan.layout(role),
                t
            )));
        }
    }
    let ctx = Ctx { a: a.data(), b: b.data(), alpha, beta, threads: opts.threads.max(1) };
    if plan.transpositions() == 0 {
        run_steps(plan.steps(), [0; 3], &ctx, c.data_mut())
    } else {
        run_with_copies(plan, a, b, alpha, beta, c, &ctx)
    }
}

/// Plans with [`plan_single_mode`] and executes with the expression's scalars.
pub fn contract(spec: &ContractionSpec, a: &DenseTensor, b: &DenseTensor, c: &mut DenseTensor) -> Result<()> {
    let plan = plan_single_mode(spec, a.layout(), b.layout(), c.layout())?;
    execute_plan(&plan, a, b, spec.alpha, spec.beta, c)
}

struct Ctx<'a> {
    a: &'a [f64],
    b: &'a [f64],
    alpha: f64,
    beta: f64,
    threads: usize,
}

fn run_steps(steps: &[PlanStep], offs: [usize; 3], ctx: &Ctx, c: &mut [f64]) -> Result<()> {
    let Some((step, rest)) = steps.split_first() else {
        return Ok(());
    };
    match step {
        PlanStep::Flatten { .. } => run_steps(rest, offs, ctx, c),
        PlanStep::Loop { extent, strides, .. } => {
            for i in 0..*extent {
                let o = [offs[0] + i * strides[0], offs[1] + i * strides[1], offs[2] + i * strides[2]];
                run_steps(rest, o, ctx, c)?;
            }
            Ok(())
        }
        PlanStep::Kernel { call, .. } => {
            run_kernel(call, &ctx.a[offs[0]..], &ctx.b[offs[1]..], &mut c[offs[2]..], ctx)?;
            run_steps(rest, offs, ctx, c)
        }
        PlanStep::Permute { .. } => Err(Error::Consistency("permute step in a copy-free plan".into())),
    }
}

fn run_kernel(call: &KernelCall, a: &[f64], b: &[f64], c: &mut [f64], ctx: &Ctx) -> Result<()> {
    let pick = |r: Role| if r == Role::A { a } else { b };
    let (alpha, beta) = (ctx.alpha, ctx.beta);
    match *call {
        KernelCall::Gemm { x, y, args } => {
            let args = args.with_scalars(alpha, beta);
            if args.op_a.is_extended() || args.op_b.is_extended() {
                strided_batched_gemm_ex(&args, pick(x), pick(y), c)
            } else {
                strided_batched_gemm_par(&args, pick(x), pick(y), c, ctx.threads)
            }
        }
        KernelCall::Gemv { matrix, vector, op, m, n, lda, incx, incy } => {
            gemv(op, m, n, alpha, pick(matrix), lda, pick(vector), incx, beta, c, incy)
        }
        KernelCall::Ger { x, y, m, n, incx, incy, ldc } => {
            for j in 0..n {
                for v in &mut c[j * ldc..j * ldc + m] {
                    *v = if beta == 0.0 { 0.0 } else { beta * *v };
                }
            }
            ger(m, n, alpha, pick(x), incx, pick(y), incy, c, ldc)
        }
        KernelCall::Dot { n, incx, incy } => {
            let s = dot(n, a, incx, b, incy)?;
            c[0] = if beta == 0.0 { alpha * s } else { alpha * s + beta * c[0] };
            Ok(())
        }
    }
}

fn run_with_copies(
    plan: &EvaluationPlan,
    a: &DenseTensor,
    b: &DenseTensor,
    alpha: f64,
    beta: f64,
    c: &mut DenseTensor,
    ctx: &Ctx,
) -> Result<()> {
    let mut work_a: Option<DenseTensor> = None;
    let mut work_b: Option<DenseTensor> = None;
    let mut work_c: Option<DenseTensor> = None;
    let scratch_dims = plan.steps().iter().find_map(|s| match s {
        PlanStep::Permute { role: Role::C, output: true, perm, to_dims, .. } => {
            let mut dims = vec![0; to_dims.len()];
            for (q, &src) in perm.as_slice().iter().enumerate() {
                dims[src] = to_dims[q];
            }
            Some(dims)
        }
        _ => None,
    });
    for step in plan.steps() {
        match step {
            PlanStep::Permute { role, perm, output: false, .. } => {
                let src = match role {
                    Role::A => a,
                    Role::B => b,
                    Role::C => &*c,
                };
                let copy = src.permute_copy(perm)?;
                match role {
                    Role::A => work_a = Some(copy),
                    Role::B => work_b = Some(copy),
                    Role::C => work_c = Some(copy),
                }
            }
            PlanStep::Permute { perm, output: true, .. } => {
                let src = work_c.as_ref().ok_or_else(|| Error::Consistency("no working result to copy back".into()))?;
                permute_into(src, perm, c)?;
            }
            PlanStep::Kernel { call, .. } => {
                if work_c.is_none() {
                    if let Some(dims) = &scratch_dims {
                        work_c = Some(DenseTensor::zeros(Layout::packed(dims)?));
                    }
                }
                let av = work_a.as_ref().map_or(a.data(), |t| t.data());
                let bv = work_b.as_ref().map_or(b.data(), |t| t.data());
                let inner = Ctx { a: av, b: bv, alpha, beta, threads: ctx.threads };
                let cv = match work_c.as_mut() {
                    Some(t) => t.data_mut(),
                    None => c.data_mut(),
                };
                run_kernel(call, av, bv, cv, &inner)?;
            }
            PlanStep::Flatten { .. } | PlanStep::Loop { .. } => {
                return Err(Error::Consistency("loop steps are not supported alongside copies".into()));
            }
        }
    }
    Ok(())
}
