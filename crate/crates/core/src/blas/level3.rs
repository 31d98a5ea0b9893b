use super::{gemm_core, resolve, ExtendedPolicy, KernelArgs, Op, Resolved, SendConst, SendPtr, View};
use crate::error::Result;

/// General matrix multiply `C = alpha * op(A) op(B) + beta * C` on
/// column-major views. `op_a` and `op_b` must be `Normal` or `Transpose`.
/// With `beta == 0` the prior contents of `C` are never read.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    op_a: Op,
    op_b: Op,
    m: usize,
    n: usize,
    k: usize,
    alpha: f64,
    a: &[f64],
    lda: usize,
    b: &[f64],
    ldb: usize,
    beta: f64,
    c: &mut [f64],
    ldc: usize,
) -> Result<()> {
    let args = KernelArgs::gemm(op_a, op_b, m, n, k, lda, ldb, ldc).with_scalars(alpha, beta);
    strided_batched_gemm(&args, a, b, c)
}

/// Strided batched GEMM: the reference batch loop over `gemm`.
pub fn strided_batched_gemm(args: &KernelArgs, a: &[f64], b: &[f64], c: &mut [f64]) -> Result<()> {
    strided_batched_gemm_par(args, a, b, c, 1)
}

/// [`strided_batched_gemm`] with the batch loop split across `threads`
/// scoped workers. Each batch entry is computed by the same sequential core,
/// so the result does not depend on the thread count.
pub fn strided_batched_gemm_par(
    args: &KernelArgs,
    a: &[f64],
    b: &[f64],
    c: &mut [f64],
    threads: usize,
) -> Result<()> {
    let Some(r) = resolve(args, a.len(), b.len(), c.len(), ExtendedPolicy::Reject)? else {
        return Ok(());
    };
    run_batches(args, &r, a, b, c, threads, plain_range);
    Ok(())
}

/// Strided batched GEMM where exactly one operand carries an extended op
/// flag: its batch index is its unit-stride first mode and its `ld`/`lo`
/// slots hold the row and column strides of the stored matrix. Evaluated in
/// place with a tiling over (batch, rows, cols); nothing is copied or
/// allocated.
pub fn strided_batched_gemm_ex(args: &KernelArgs, a: &[f64], b: &[f64], c: &mut [f64]) -> Result<()> {
    let Some(r) = resolve(args, a.len(), b.len(), c.len(), ExtendedPolicy::RequireOne)? else {
        return Ok(());
    };
    run_batches(args, &r, a, b, c, 1, tiled3d_range);
    Ok(())
}

/// Untiled variant of [`strided_batched_gemm_ex`]: one `gemm` per batch entry
/// on the doubly strided matrix. Kept for differential testing.
pub fn strided_batched_gemm_ex_naive(args: &KernelArgs, a: &[f64], b: &[f64], c: &mut [f64]) -> Result<()> {
    let Some(r) = resolve(args, a.len(), b.len(), c.len(), ExtendedPolicy::RequireOne)? else {
        return Ok(());
    };
    run_batches(args, &r, a, b, c, 1, plain_range);
    Ok(())
}

type RangeKernel = unsafe fn(&KernelArgs, &Resolved, *const f64, *const f64, *mut f64, usize, usize);

fn run_batches(
    args: &KernelArgs,
    r: &Resolved,
    a: &[f64],
    b: &[f64],
    c: &mut [f64],
    threads: usize,
    kernel: RangeKernel,
) {
    let batches = args.batch_count;
    let threads = threads.clamp(1, batches);
    if threads == 1 {
        // SAFETY: `resolve` bounds-checked every batch entry against the
        // slice lengths, and `c` is uniquely borrowed.
        unsafe { kernel(args, r, a.as_ptr(), b.as_ptr(), c.as_mut_ptr(), 0, batches) };
        return;
    }
    let chunk = batches.div_ceil(threads);
    let (pa, pb, pc) = (SendConst(a.as_ptr()), SendConst(b.as_ptr()), SendPtr(c.as_mut_ptr()));
    std::thread::scope(|s| {
        for t in 0..threads {
            let (p0, p1) = (t * chunk, ((t + 1) * chunk).min(batches));
            if p0 >= p1 {
                break;
            }
            s.spawn(move || {
                let (pa, pb, pc) = (pa, pb, pc);
                // SAFETY: bounds as above; `resolve` verified that the C
                // regions of distinct batch entries are disjoint, so the
                // workers write to disjoint elements.
                unsafe { kernel(args, r, pa.0, pb.0, pc.0, p0, p1) };
            });
        }
    });
}

unsafe fn plain_range(args: &KernelArgs, r: &Resolved, a: *const f64, b: *const f64, c: *mut f64, p0: usize, p1: usize) {
    for p in p0..p1 {
        gemm_core(
            args.m,
            args.n,
            args.k,
            args.alpha,
            a.add(p * r.a.bs),
            r.a,
            b.add(p * r.b.bs),
            r.b,
            args.beta,
            c.add(p * r.c.bs),
            r.c.cs,
        );
    }
}

const TILE_ROWS: usize = 16;
const TILE_BATCH: usize = 8;

/// Tiles over (batch, rows) for each output column so that the unit-stride
/// batch index of the extended operand is walked contiguously.
unsafe fn tiled3d_range(args: &KernelArgs, r: &Resolved, a: *const f64, b: *const f64, c: *mut f64, p0: usize, p1: usize) {
    let KernelArgs { m, n, k, alpha, beta, .. } = *args;
    let (av, bv, cv): (View, View, View) = (r.a, r.b, r.c);
    if alpha == 0.0 {
        for p in p0..p1 {
            super::scale_matrix(m, n, beta, c.add(p * cv.bs), cv.cs);
        }
        return;
    }
    let mut acc = [[0.0f64; TILE_BATCH]; TILE_ROWS];
    let mut pt = p0;
    while pt < p1 {
        let np = TILE_BATCH.min(p1 - pt);
        for j in 0..n {
            let mut it = 0;
            while it < m {
                let ni = TILE_ROWS.min(m - it);
                for row in acc.iter_mut().take(ni) {
                    row[..np].fill(0.0);
                }
                for l in 0..k {
                    let a_l = a.add(pt * av.bs + it * av.rs + l * av.cs);
                    let b_l = b.add(pt * bv.bs + l * bv.rs + j * bv.cs);
                    for (ii, row) in acc.iter_mut().enumerate().take(ni) {
                        let a_i = a_l.add(ii * av.rs);
                        for (pp, s) in row.iter_mut().enumerate().take(np) {
                            *s += *a_i.add(pp * av.bs) * *b_l.add(pp * bv.bs);
                        }
                    }
                }
                for (ii, row) in acc.iter().enumerate().take(ni) {
                    for (pp, s) in row.iter().enumerate().take(np) {
                        let dst = c.add((pt + pp) * cv.bs + (it + ii) + j * cv.cs);
                        *dst = if beta == 0.0 { alpha * s } else { alpha * s + beta * *dst };
                    }
                }
                it += ni;
            }
        }
        pt += np;
    }
}
