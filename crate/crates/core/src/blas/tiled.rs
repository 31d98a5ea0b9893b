//! Cache-blocked strided batched GEMM and a tile-size sweep over it.

use std::io::Write;
use std::time::Instant;

use super::{resolve, scale_matrix, ExtendedPolicy, KernelArgs, Op};
use crate::error::{Error, Result};
use crate::reference::max_relative_error;
use crate::rng::SplitMix64;

/// Tile extents along the four loops of a strided batched GEMM.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TileParams {
    pub rows: usize,
    pub cols: usize,
    pub batch: usize,
    pub depth: usize,
}

impl TileParams {
    pub fn new(rows: usize, cols: usize, batch: usize, depth: usize) -> Self {
        Self { rows, cols, batch, depth }
    }

    /// Elements touched per tile: the 3D tile of the batched operand, the 2D
    /// tile of the other operand, and the 3D tile of C.
    pub fn working_set(&self) -> usize {
        self.rows * self.depth * self.batch + self.depth * self.cols + self.rows * self.cols * self.batch
    }
}

/// Working-set cap for a feasible tile: 32768 doubles, one 256 KiB L2.
pub const TILE_BUDGET: usize = 32 * 1024;

/// Strided batched GEMM evaluated tile by tile. Accepts plain op flags or a
/// single extended operand. The `depth` tiling splits each dot product into
/// partial sums, so results agree with [`super::strided_batched_gemm`] to
/// rounding rather than bitwise.
pub fn strided_batched_gemm_tiled(
    args: &KernelArgs,
    tiles: TileParams,
    a: &[f64],
    b: &[f64],
    c: &mut [f64],
) -> Result<()> {
    if [tiles.rows, tiles.cols, tiles.batch, tiles.depth].contains(&0) {
        return Err(Error::arg("tile extents must be positive"));
    }
    let Some(r) = resolve(args, a.len(), b.len(), c.len(), ExtendedPolicy::AllowOne)? else {
        return Ok(());
    };
    let KernelArgs { m, n, k, alpha, beta, batch_count, .. } = *args;
    let (av, bv, cv) = (r.a, r.b, r.c);
    let (pa, pb, pc) = (a.as_ptr(), b.as_ptr(), c.as_mut_ptr());
    // SAFETY: `resolve` bounds-checked every addressed element and verified
    // that C regions do not overlap; `c` is uniquely borrowed.
    unsafe {
        for p in 0..batch_count {
            scale_matrix(m, n, beta, pc.add(p * cv.bs), cv.cs);
        }
        if alpha == 0.0 {
            return Ok(());
        }
        for p0 in (0..batch_count).step_by(tiles.batch) {
            let p1 = (p0 + tiles.batch).min(batch_count);
            for j0 in (0..n).step_by(tiles.cols) {
                let j1 = (j0 + tiles.cols).min(n);
                for i0 in (0..m).step_by(tiles.rows) {
                    let i1 = (i0 + tiles.rows).min(m);
                    for l0 in (0..k).step_by(tiles.depth) {
                        let l1 = (l0 + tiles.depth).min(k);
                        for j in j0..j1 {
                            for i in i0..i1 {
                                for p in p0..p1 {
                                    let ap = pa.add(p * av.bs + i * av.rs);
                                    let bp = pb.add(p * bv.bs + j * bv.cs);
                                    let mut s = 0.0;
                                    for l in l0..l1 {
                                        s += *ap.add(l * av.cs) * *bp.add(l * bv.rs);
                                    }
                                    *pc.add(p * cv.bs + i + j * cv.cs) += alpha * s;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

/// Blocked single GEMM built on [`strided_batched_gemm_tiled`].
#[allow(clippy::too_many_arguments)]
pub fn gemm_blocked(
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
    tiles: TileParams,
) -> Result<()> {
    if op_a.is_extended() || op_b.is_extended() {
        return Err(Error::arg("gemm accepts only Normal or Transpose"));
    }
    let args = KernelArgs::gemm(op_a, op_b, m, n, k, lda, ldb, ldc).with_scalars(alpha, beta);
    strided_batched_gemm_tiled(&args, tiles, a, b, c)
}

/// A fixed strided batched problem with its operands.
#[derive(Clone, Debug)]
pub struct TileProblem {
    pub args: KernelArgs,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl TileProblem {
    /// The exceptional contraction `C[mnp] = A[kp] B[nkm]` (all packed) as
    /// one extended call: `B` in the row slot with `EX_T`, batched over `n`.
    pub fn exceptional_kp_nkm(m: usize, n: usize, p: usize, k: usize, seed: u64) -> Self {
        let mut rng = SplitMix64::new(seed);
        let mut fill = |len: usize| (0..len).map(|_| rng.uniform_signed()).collect::<Vec<_>>();
        let args = KernelArgs {
            op_a: Op::ExtendedTranspose,
            op_b: Op::Normal,
            m,
            n: p,
            k,
            alpha: 1.0,
            beta: 0.0,
            lda: n,
            loa: n * k,
            ldb: k,
            lob: 0,
            ldc: m * n,
            loc: m,
            batch_count: n,
        };
        let b_op = fill(n * k * m);
        let a_op = fill(k * p);
        Self { args, a: b_op, b: a_op, c: vec![0.0; m * n * p] }
    }

    fn extents(&self) -> TileParams {
        TileParams::new(self.args.m, self.args.n, self.args.batch_count.max(1), self.args.k)
    }

    fn reference(&self) -> Result<Vec<f64>> {
        let mut c = self.c.clone();
        if self.args.op_a.is_extended() || self.args.op_b.is_extended() {
            super::strided_batched_gemm_ex(&self.args, &self.a, &self.b, &mut c)?;
        } else {
            super::strided_batched_gemm(&self.args, &self.a, &self.b, &mut c)?;
        }
        Ok(c)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TileTiming {
    pub tiles: TileParams,
    pub micros: f64,
}

#[derive(Clone, Debug)]
pub struct TileSearch {
    pub best: TileParams,
    /// One entry per feasible tile tuple, in sweep order.
    pub table: Vec<TileTiming>,
    /// Infeasible tuples with the reason they were skipped.
    pub skipped: Vec<(TileParams, String)>,
}

fn infeasible(t: &TileParams, extents: &TileParams) -> Option<String> {
    let pairs = [
        ("rows", t.rows, extents.rows),
        ("cols", t.cols, extents.cols),
        ("batch", t.batch, extents.batch),
        ("depth", t.depth, extents.depth),
    ];
    for (name, tile, extent) in pairs {
        if tile > extent.next_power_of_two() {
            return Some(format!("{name} tile {tile} exceeds extent {extent}"));
        }
    }
    (t.working_set() > TILE_BUDGET).then(|| format!("working set {} > {TILE_BUDGET}", t.working_set()))
}

/// Sweeps every (rows, cols, batch, depth) tuple drawn from `candidates`,
/// checks each feasible tiling against the reference kernel to 1e-13
/// relative, and times it (median of `reps` runs after one checked run).
pub fn blocked_gemm_tile_search(problem: &TileProblem, candidates: &[usize], reps: usize) -> Result<TileSearch> {
    let mut cands: Vec<usize> = candidates.to_vec();
    cands.sort_unstable();
    cands.dedup();
    if cands.is_empty() {
        return Err(Error::arg("no tile candidates"));
    }
    if let Some(bad) = cands.iter().find(|&&t| !t.is_power_of_two() || t > 128) {
        return Err(Error::arg(format!("tile candidate {bad} is not a power of two in [1, 128]")));
    }
    let reps = reps.max(1);
    let extents = problem.extents();
    let expect = problem.reference()?;
    let mut table = Vec::new();
    let mut skipped = Vec::new();
    for &rows in &cands {
        for &batch in &cands {
            for &cols in &cands {
                for &depth in &cands {
                    let tiles = TileParams::new(rows, cols, batch, depth);
                    if let Some(reason) = infeasible(&tiles, &extents) {
                        skipped.push((tiles, reason));
                        continue;
                    }
                    let mut c = problem.c.clone();
                    strided_batched_gemm_tiled(&problem.args, tiles, &problem.a, &problem.b, &mut c)?;
                    let err = max_relative_error(&c, &expect);
                    if err.is_nan() || err > 1e-13 {
                        return Err(Error::arg(format!("tiling {tiles:?} disagrees with reference: {err:e}")));
                    }
                    let mut times = Vec::with_capacity(reps);
                    for _ in 0..reps {
                        c.copy_from_slice(&problem.c);
                        let t0 = Instant::now();
                        strided_batched_gemm_tiled(&problem.args, tiles, &problem.a, &problem.b, &mut c)?;
                        times.push(t0.elapsed().as_secs_f64() * 1e6);
                    }
                    table.push(TileTiming { tiles, micros: crate::bench::median(&mut times) });
                }
            }
        }
    }
    let best = table
        .iter()
        .min_by(|x, y| x.micros.total_cmp(&y.micros))
        .map(|t| t.tiles)
        .ok_or_else(|| Error::arg("every tile candidate was infeasible"))?;
    Ok(TileSearch { best, table, skipped })
}

/// CSV with columns `tm,tn,tp,tk,micros,status`, labelled after the loops of
/// the `C[mnp] = A[kp] B[nkm]` problem: `tm` rows, `tn` batch, `tp` cols,
/// `tk` depth.
pub fn write_tile_csv<W: Write>(out: W, search: &TileSearch) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["tm", "tn", "tp", "tk", "micros", "status"])?;
    let row = |t: &TileParams| [t.rows.to_string(), t.batch.to_string(), t.cols.to_string(), t.depth.to_string()];
    for t in &search.table {
        let [a, b, c, d] = row(&t.tiles);
        w.write_record([a, b, c, d, format!("{:.3}", t.micros), "ok".into()])?;
    }
    for (t, _) in &search.skipped {
        let [a, b, c, d] = row(t);
        w.write_record([a, b, c, d, String::new(), "skipped".into()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blas::gemm;

    #[test]
    fn blocked_matches_reference_on_odd_shapes() {
        let mut rng = SplitMix64::new(77);
        for &(m, n, k) in &[(1, 1, 1), (5, 7, 3), (33, 17, 65), (96, 1, 40)] {
            let a: Vec<f64> = (0..m * k).map(|_| rng.uniform_signed()).collect();
            let b: Vec<f64> = (0..k * n).map(|_| rng.uniform_signed()).collect();
            let mut c1 = vec![0.0; m * n];
            let mut c2 = vec![0.0; m * n];
            gemm(Op::Normal, Op::Transpose, m, n, k, 1.0, &a, m, &b, n, 0.0, &mut c1, m).unwrap();
            gemm_blocked(Op::Normal, Op::Transpose, m, n, k, 1.0, &a, m, &b, n, 0.0, &mut c2, m, TileParams::new(8, 4, 1, 16))
                .unwrap();
            assert!(max_relative_error(&c2, &c1) <= 1e-13);
        }
    }

    #[test]
    fn single_candidate_returns_it() {
        let problem = TileProblem::exceptional_kp_nkm(6, 5, 4, 3, 1);
        let s = blocked_gemm_tile_search(&problem, &[2], 1).unwrap();
        assert_eq!(s.best, TileParams::new(2, 2, 2, 2));
        assert_eq!(s.table.len(), 1);
        assert!(s.skipped.is_empty());
    }

    #[test]
    fn table_has_one_entry_per_feasible_tuple() {
        let problem = TileProblem::exceptional_kp_nkm(8, 4, 8, 2, 2);
        let cands = [1, 2, 4, 8];
        let s = blocked_gemm_tile_search(&problem, &cands, 1).unwrap();
        let extents = TileParams::new(8, 8, 4, 2);
        let mut feasible = 0;
        for &r in &cands {
            for &b in &cands {
                for &c in &cands {
                    for &d in &cands {
                        if infeasible(&TileParams::new(r, c, b, d), &extents).is_none() {
                            feasible += 1;
                        }
                    }
                }
            }
        }
        // batch tiles above 4 and depth tiles above 2 are skipped
        assert_eq!(feasible, 4 * 3 * 4 * 2);
        assert_eq!(s.table.len(), feasible);
        assert_eq!(s.table.len() + s.skipped.len(), 256);

        let mut csv = Vec::new();
        write_tile_csv(&mut csv, &s).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("tm,tn,tp,tk,micros,status\n"));
        assert_eq!(text.lines().count(), 257);
    }

    #[test]
    fn rejects_bad_candidates() {
        let problem = TileProblem::exceptional_kp_nkm(2, 2, 2, 2, 3);
        assert!(blocked_gemm_tile_search(&problem, &[3], 1).is_err());
        assert!(blocked_gemm_tile_search(&problem, &[256], 1).is_err());
        assert!(blocked_gemm_tile_search(&problem, &[], 1).is_err());
    }
}
