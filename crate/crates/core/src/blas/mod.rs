//! Self-contained BLAS-like kernels.
//!
//! Every level-3 entry point funnels into one column-major core in which each
//! output element is accumulated over `k` in ascending order, so results are
//! bitwise reproducible for a given argument set.

mod level2;
mod level3;
mod tiled;

pub use level2::{dot, gemv, ger};
pub use level3::{
    gemm, strided_batched_gemm, strided_batched_gemm_ex, strided_batched_gemm_ex_naive,
    strided_batched_gemm_par,
};
pub use tiled::{
    blocked_gemm_tile_search, gemm_blocked, strided_batched_gemm_tiled, write_tile_csv, TileParams,
    TileProblem, TileSearch, TileTiming,
};

use crate::error::{Error, Result};
use crate::layout::non_aliasing;

/// Operand transformation applied before multiplication.
///
/// The extended flags mark an operand whose batch index is its first stored
/// (unit-stride) mode. For such an operand the `ld`/`lo` argument pair holds
/// the strides of the stored matrix's rows and columns, in that order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Op {
    Normal,
    Transpose,
    ExtendedNormal,
    ExtendedTranspose,
}

impl Op {
    pub fn is_extended(self) -> bool {
        matches!(self, Op::ExtendedNormal | Op::ExtendedTranspose)
    }

    pub fn is_transposed(self) -> bool {
        matches!(self, Op::Transpose | Op::ExtendedTranspose)
    }

    /// BLAS-style character: `N`, `T`, `EX_N`, `EX_T`.
    pub fn code(self) -> &'static str {
        match self {
            Op::Normal => "N",
            Op::Transpose => "T",
            Op::ExtendedNormal => "EX_N",
            Op::ExtendedTranspose => "EX_T",
        }
    }
}

/// Arguments of a strided batched GEMM:
/// `C_p = alpha * op(A_p) * op(B_p) + beta * C_p` for `p in 0..batch_count`,
/// with `X_p` starting at `p * lo{x}` (or `p` for an extended operand).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelArgs {
    pub op_a: Op,
    pub op_b: Op,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub lda: usize,
    pub loa: usize,
    pub ldb: usize,
    pub lob: usize,
    pub ldc: usize,
    pub loc: usize,
    pub batch_count: usize,
}

impl KernelArgs {
    /// Single-matrix arguments (one batch, zero leading orders).
    #[allow(clippy::too_many_arguments)]
    pub fn gemm(op_a: Op, op_b: Op, m: usize, n: usize, k: usize, lda: usize, ldb: usize, ldc: usize) -> Self {
        Self {
            op_a,
            op_b,
            m,
            n,
            k,
            alpha: 1.0,
            beta: 0.0,
            lda,
            loa: 0,
            ldb,
            lob: 0,
            ldc,
            loc: 0,
            batch_count: 1,
        }
    }

    pub fn with_scalars(mut self, alpha: f64, beta: f64) -> Self {
        self.alpha = alpha;
        self.beta = beta;
        self
    }

    pub fn with_batch(mut self, batch_count: usize, loa: usize, lob: usize, loc: usize) -> Self {
        self.batch_count = batch_count;
        self.loa = loa;
        self.lob = lob;
        self.loc = loc;
        self
    }
}

/// Element strides of `op(X)` seen as a `rows x cols` matrix, plus the
/// stride between batch entries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct View {
    pub rs: usize,
    pub cs: usize,
    pub bs: usize,
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub(crate) enum ExtendedPolicy {
    Reject,
    RequireOne,
    AllowOne,
}

pub(crate) struct Resolved {
    pub a: View,
    pub b: View,
    pub c: View,
}

fn operand_view(name: &str, op: Op, rows: usize, cols: usize, ld: usize, lo: usize, batch: usize) -> Result<View> {
    match op {
        Op::Normal | Op::Transpose => {
            let (stored_rows, stored_cols) = if op == Op::Normal { (rows, cols) } else { (cols, rows) };
            if stored_cols > 1 && ld < stored_rows {
                return Err(Error::arg(format!(
                    "ld{name} = {ld} is smaller than the {stored_rows} stored rows"
                )));
            }
            Ok(if op == Op::Normal {
                View { rs: 1, cs: ld, bs: lo }
            } else {
                View { rs: ld, cs: 1, bs: lo }
            })
        }
        Op::ExtendedNormal | Op::ExtendedTranspose => {
            let (stored_rows, stored_cols) = if op == Op::ExtendedNormal { (rows, cols) } else { (cols, rows) };
            if !non_aliasing(&[(batch, 1), (stored_rows, ld), (stored_cols, lo)]) {
                return Err(Error::arg(format!(
                    "extended operand {name}: strides ({ld}, {lo}) alias with a unit-stride batch of {batch}"
                )));
            }
            Ok(if op == Op::ExtendedNormal {
                View { rs: ld, cs: lo, bs: 1 }
            } else {
                View { rs: lo, cs: ld, bs: 1 }
            })
        }
    }
}

fn check_extent(name: &str, v: View, rows: usize, cols: usize, batch: usize, len: usize) -> Result<()> {
    let last = (batch - 1)
        .checked_mul(v.bs)
        .and_then(|x| x.checked_add((rows - 1).checked_mul(v.rs)?))
        .and_then(|x| x.checked_add((cols - 1).checked_mul(v.cs)?));
    match last {
        Some(last) if last < len => Ok(()),
        _ => Err(Error::arg(format!(
            "operand {name} addresses past its buffer of {len} elements"
        ))),
    }
}

/// Validates `args` against buffer lengths. Returns `None` for an empty batch.
pub(crate) fn resolve(
    args: &KernelArgs,
    a_len: usize,
    b_len: usize,
    c_len: usize,
    policy: ExtendedPolicy,
) -> Result<Option<Resolved>> {
    let KernelArgs { op_a, op_b, m, n, k, batch_count, .. } = *args;
    if m == 0 || n == 0 || k == 0 {
        return Err(Error::arg(format!("extents must be positive, got m={m} n={n} k={k}")));
    }
    let extended = usize::from(op_a.is_extended()) + usize::from(op_b.is_extended());
    match policy {
        ExtendedPolicy::Reject if extended > 0 => {
            return Err(Error::arg("extended op flags are only accepted by the extended strided batched kernel"))
        }
        ExtendedPolicy::RequireOne if extended != 1 => {
            return Err(Error::arg(format!("exactly one extended operand required, got {extended}")))
        }
        ExtendedPolicy::AllowOne if extended > 1 => {
            return Err(Error::arg("at most one operand may carry an extended op flag"))
        }
        _ => {}
    }
    let batch = batch_count.max(1);
    let a = operand_view("a", op_a, m, k, args.lda, args.loa, batch)?;
    let b = operand_view("b", op_b, k, n, args.ldb, args.lob, batch)?;
    if n > 1 && args.ldc < m {
        return Err(Error::arg(format!("ldc = {} is smaller than m = {m}", args.ldc)));
    }
    let c = View { rs: 1, cs: args.ldc, bs: args.loc };
    if !non_aliasing(&[(m, 1), (n, c.cs), (batch_count, c.bs)]) {
        return Err(Error::arg("C batch regions overlap"));
    }
    if batch_count == 0 {
        return Ok(None);
    }
    check_extent("a", a, m, k, batch, a_len)?;
    check_extent("b", b, k, n, batch, b_len)?;
    check_extent("c", c, m, n, batch, c_len)?;
    Ok(Some(Resolved { a, b, c }))
}

/// Row block held in registers/stack by the reference core.
const ROW_BLOCK: usize = 32;

/// `C = alpha * op(A) op(B) + beta * C` for one matrix. Each output is
/// accumulated over `l = 0..k` in order, starting from zero.
///
/// # Safety
/// All addressed elements must lie inside live allocations and `c` must not
/// alias `a` or `b`.
#[allow(clippy::too_many_arguments)]
pub(crate) unsafe fn gemm_core(
    m: usize,
    n: usize,
    k: usize,
    alpha: f64,
    a: *const f64,
    av: View,
    b: *const f64,
    bv: View,
    beta: f64,
    c: *mut f64,
    ldc: usize,
) {
    if alpha == 0.0 {
        scale_matrix(m, n, beta, c, ldc);
        return;
    }
    let mut acc = [0.0f64; ROW_BLOCK];
    for j in 0..n {
        let bj = b.add(j * bv.cs);
        let cj = c.add(j * ldc);
        let mut i0 = 0;
        while i0 < m {
            let rows = ROW_BLOCK.min(m - i0);
            let acc = &mut acc[..rows];
            acc.fill(0.0);
            let ai = a.add(i0 * av.rs);
            for l in 0..k {
                let blj = *bj.add(l * bv.rs);
                let al = ai.add(l * av.cs);
                for (ii, s) in acc.iter_mut().enumerate() {
                    *s += *al.add(ii * av.rs) * blj;
                }
            }
            let ci = cj.add(i0);
            if beta == 0.0 {
                for (ii, s) in acc.iter().enumerate() {
                    *ci.add(ii) = alpha * s;
                }
            } else {
                for (ii, s) in acc.iter().enumerate() {
                    let dst = ci.add(ii);
                    *dst = alpha * s + beta * *dst;
                }
            }
            i0 += rows;
        }
    }
}

/// `C = beta * C`, writing zeros without reading when `beta == 0`.
///
/// # Safety
/// As for [`gemm_core`].
pub(crate) unsafe fn scale_matrix(m: usize, n: usize, beta: f64, c: *mut f64, ldc: usize) {
    for j in 0..n {
        for i in 0..m {
            let dst = c.add(i + j * ldc);
            *dst = if beta == 0.0 { 0.0 } else { beta * *dst };
        }
    }
}

/// Raw pointer that may cross into scoped worker threads.
#[derive(Clone, Copy)]
pub(crate) struct SendPtr<T>(pub *mut T);
unsafe impl<T> Send for SendPtr<T> {}
unsafe impl<T> Sync for SendPtr<T> {}

#[derive(Clone, Copy)]
pub(crate) struct SendConst<T>(pub *const T);
unsafe impl<T> Send for SendConst<T> {}
unsafe impl<T> Sync for SendConst<T> {}
