//! Tucker decomposition of third-order tensors by higher-order orthogonal
//! iteration. Every tensor-times-matrix product is a planned single-mode
//! contraction, so no unfolding is materialized except for the small
//! matrices handed to the eigen-solver.

use crate::blas::{gemm, Op};
use crate::error::{Error, Result};
use crate::notation::ContractionSpec;
use crate::planner::contract;
use crate::rng::SplitMix64;
use crate::tensor::DenseTensor;

const TENSOR_LABELS: [char; 3] = ['m', 'n', 'p'];
const CORE_LABELS: [char; 3] = ['i', 'j', 'k'];
const FACTOR_LABELS: [[char; 2]; 3] = [['m', 'i'], ['n', 'j'], ['p', 'k']];

#[derive(Clone, Debug, PartialEq)]
pub struct TuckerModel {
    /// Core tensor of dims `(i, j, k)`.
    pub core: DenseTensor,
    /// Factor matrices `A` (`m x i`), `B` (`n x j`) and `C` (`p x k`).
    pub factors: [DenseTensor; 3],
    /// `||T - T_hat|| / ||T||` after each iteration.
    pub fit_history: Vec<f64>,
    /// Worst `|Q^T Q - I|` entry over the three factors after each iteration.
    pub orthonormality_history: Vec<f64>,
}

/// Eigen-decomposition of the symmetric `n x n` column-major matrix `g` by
/// cyclic Jacobi rotations, stopping once the off-diagonal Frobenius norm is
/// at most `1e-12 * ||g||_F`. Returns eigenvalues in descending order and
/// the matching eigenvectors as columns of a column-major `n x n` matrix.
pub fn symmetric_eigen(g: &[f64], n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if g.len() != n * n {
        return Err(Error::arg(format!("expected {} entries for a {n}x{n} matrix, got {}", n * n, g.len())));
    }
    let mut a = g.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i + i * n] = 1.0;
    }
    let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = 1e-12 * norm;
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|j| (0..n).filter(move |&i| i != j).map(move |i| (i, j)))
            .map(|(i, j)| a[i + j * n] * a[i + j * n])
            .sum::<f64>()
            .sqrt();
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p + q * n];
                if apq == 0.0 {
                    continue;
                }
                let (app, aqq) = (a[p + p * n], a[q + q * n]);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k + p * n], a[k + q * n]);
                    a[k + p * n] = c * akp - s * akq;
                    a[k + q * n] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p + k * n], a[q + k * n]);
                    a[p + k * n] = c * apk - s * aqk;
                    a[q + k * n] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k + p * n], v[k + q * n]);
                    v[k + p * n] = c * vkp - s * vkq;
                    v[k + q * n] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[y + y * n].total_cmp(&a[x + x * n]));
    let values = order.iter().map(|&i| a[i + i * n]).collect();
    let mut vectors = Vec::with_capacity(n * n);
    for &i in &order {
        vectors.extend_from_slice(&v[i * n..(i + 1) * n]);
    }
    Ok((values, vectors))
}

/// Orthonormal basis (`rows x r`, packed) of the dominant `r`-dimensional
/// left singular subspace of the matrix `m`, from the eigenvectors of
/// `m m^T`. Each column is signed so its largest-magnitude entry is
/// positive.
pub fn leading_left_singular_vectors(m: &DenseTensor, r: usize) -> Result<DenseTensor> {
    if m.order() != 2 {
        return Err(Error::arg(format!("expected a matrix, got order {}", m.order())));
    }
    let (rows, cols) = (m.dims()[0], m.dims()[1]);
    if r == 0 || r > rows {
        return Err(Error::arg(format!("rank {r} outside [1, {rows}]")));
    }
    let mut gram = vec![0.0; rows * rows];
    let ld = m.layout().stride(1).max(rows);
    gemm(Op::Normal, Op::Transpose, rows, rows, cols, 1.0, m.data(), ld, m.data(), ld, 0.0, &mut gram, rows)?;
    let (_, vecs) = symmetric_eigen(&gram, rows)?;
    let mut out = DenseTensor::packed_zeros(&[rows, r])?;
    for j in 0..r {
        let col = &vecs[j * rows..(j + 1) * rows];
        let pivot = col.iter().copied().fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for (i, &x) in col.iter().enumerate() {
            out.data_mut()[i + j * rows] = sign * x;
        }
    }
    Ok(out)
}

/// Contracts `t` (labels `labels`) with each `(matrix, [row, col])` in
/// turn, replacing the shared label in place. Products whose shared label
/// has the larger extent go first.
fn chained_products(
    t: &DenseTensor,
    labels: [char; 3],
    factors: &[(&DenseTensor, [char; 2])],
) -> Result<(DenseTensor, [char; 3])> {
    let extent = |&(f, fl): &(&DenseTensor, [char; 2])| -> usize {
        let shared = if labels.contains(&fl[0]) { 0 } else { 1 };
        f.dims()[shared]
    };
    let mut order: Vec<&(&DenseTensor, [char; 2])> = factors.iter().collect();
    order.sort_by_key(|f| std::cmp::Reverse(extent(f)));
    let mut cur = t.clone();
    let mut cur_labels = labels;
    for &&(f, fl) in &order {
        let (shared, other) = if cur_labels.contains(&fl[0]) { (fl[0], fl[1]) } else { (fl[1], fl[0]) };
        let pos = cur_labels.iter().position(|&l| l == shared).ok_or_else(|| Error::arg("factor shares no label"))?;
        let mut out_labels = cur_labels;
        out_labels[pos] = other;
        let spec = ContractionSpec::new(
            &String::from_iter(cur_labels),
            &String::from_iter(fl),
            &String::from_iter(out_labels),
            1.0,
            0.0,
        )?;
        let mut dims = cur.dims().to_vec();
        dims[pos] = if fl[0] == other { f.dims()[0] } else { f.dims()[1] };
        let mut next = DenseTensor::packed_zeros(&dims)?;
        contract(&spec, &cur, f, &mut next)?;
        cur = next;
        cur_labels = out_labels;
    }
    Ok((cur, cur_labels))
}

/// `T_hat[mnp] = G[ijk] A[mi] B[nj] C[pk]`.
pub fn tucker_reconstruct(model: &TuckerModel) -> Result<DenseTensor> {
    let [a, b, c] = &model.factors;
    let (t, _) = chained_products(&model.core, CORE_LABELS, &[(a, FACTOR_LABELS[0]), (b, FACTOR_LABELS[1]), (c, FACTOR_LABELS[2])])?;
    Ok(t)
}

/// `t` multiplied by the transposes of every factor except `factors[mode]`,
/// e.g. `Y[mjk] = T[mnp] B[nj] C[pk]` for `mode = 0`.
pub fn project_except(t: &DenseTensor, factors: &[DenseTensor; 3], mode: usize) -> Result<DenseTensor> {
    if mode > 2 || t.order() != 3 {
        return Err(Error::arg(format!("mode {mode} of an order-{} tensor", t.order())));
    }
    let others: Vec<(&DenseTensor, [char; 2])> =
        (0..3).filter(|&s| s != mode).map(|s| (&factors[s], FACTOR_LABELS[s])).collect();
    Ok(chained_products(t, TENSOR_LABELS, &others)?.0)
}

fn core_of(t: &DenseTensor, factors: &[DenseTensor; 3]) -> Result<DenseTensor> {
    let [a, b, c] = factors;
    let (g, _) = chained_products(t, TENSOR_LABELS, &[(a, FACTOR_LABELS[0]), (b, FACTOR_LABELS[1]), (c, FACTOR_LABELS[2])])?;
    Ok(g)
}

fn relative_residual(t: &DenseTensor, approx: &DenseTensor) -> f64 {
    let (x, y) = (t.to_vec(), approx.to_vec());
    let diff = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let norm = t.frobenius_norm();
    if norm == 0.0 {
        diff
    } else {
        diff / norm
    }
}

/// Higher-order orthogonal iteration for `t ~ G x1 A x2 B x3 C` with core
/// dims `core_dims`, run for `iterations` sweeps after the truncated HOSVD
/// initialization.
pub fn hooi(t: &DenseTensor, core_dims: [usize; 3], iterations: usize) -> Result<TuckerModel> {
    if t.order() != 3 {
        return Err(Error::arg(format!("Tucker decomposition needs an order-3 tensor, got order {}", t.order())));
    }
    if iterations == 0 {
        return Err(Error::arg("at least one iteration is required"));
    }
    for (r, (&c, &d)) in core_dims.iter().zip(t.dims()).enumerate() {
        if c == 0 || c > d {
            return Err(Error::arg(format!("core dim {c} of mode {r} outside [1, {d}]")));
        }
    }
    let mut f = [
        leading_left_singular_vectors(&t.unfold(0)?, core_dims[0])?,
        leading_left_singular_vectors(&t.unfold(1)?, core_dims[1])?,
        leading_left_singular_vectors(&t.unfold(2)?, core_dims[2])?,
    ];
    let mut fit_history = Vec::with_capacity(iterations);
    let mut orthonormality_history = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        for r in 0..3 {
            let y = project_except(t, &f, r)?;
            let updated = leading_left_singular_vectors(&y.unfold(r)?, core_dims[r])?;
            f[r] = updated;
        }
        let core = core_of(t, &f)?;
        let model = TuckerModel { core, factors: f.clone(), fit_history: Vec::new(), orthonormality_history: Vec::new() };
        fit_history.push(relative_residual(t, &tucker_reconstruct(&model)?));
        orthonormality_history.push(f.iter().map(orthonormality_error).fold(0.0, f64::max));
    }
    let core = core_of(t, &f)?;
    Ok(TuckerModel { core, factors: f, fit_history, orthonormality_history })
}

/// `rows x cols` matrix with orthonormal columns: Gram-Schmidt (applied
/// twice) on uniform random columns.
pub fn random_orthonormal(rows: usize, cols: usize, rng: &mut SplitMix64) -> Result<DenseTensor> {
    if cols > rows {
        return Err(Error::arg(format!("cannot fit {cols} orthonormal columns in {rows} rows")));
    }
    let mut q = DenseTensor::random(&[rows, cols], rng)?;
    let d = q.data_mut();
    for j in 0..cols {
        for _ in 0..2 {
            for i in 0..j {
                let dotp: f64 = (0..rows).map(|r| d[r + i * rows] * d[r + j * rows]).sum();
                for r in 0..rows {
                    d[r + j * rows] -= dotp * d[r + i * rows];
                }
            }
        }
        let norm = (0..rows).map(|r| d[r + j * rows].powi(2)).sum::<f64>().sqrt();
        for r in 0..rows {
            d[r + j * rows] /= norm;
        }
    }
    Ok(q)
}

/// A tensor of exact multilinear rank `core_dims`: random core, random
/// orthonormal factors.
pub fn synthetic_tucker(dims: [usize; 3], core_dims: [usize; 3], rng: &mut SplitMix64) -> Result<DenseTensor> {
    let core = DenseTensor::random(&core_dims, rng)?;
    let a = random_orthonormal(dims[0], core_dims[0], rng)?;
    let b = random_orthonormal(dims[1], core_dims[1], rng)?;
    let c = random_orthonormal(dims[2], core_dims[2], rng)?;
    tucker_reconstruct(&TuckerModel { core, factors: [a, b, c], fit_history: Vec::new(), orthonormality_history: Vec::new() })
}

/// Largest entry of `|Q^T Q - I|` for a matrix `q`.
pub fn orthonormality_error(q: &DenseTensor) -> f64 {
    let (rows, cols) = (q.dims()[0], q.dims()[1]);
    let d = q.data();
    let mut worst: f64 = 0.0;
    for i in 0..cols {
        for j in 0..cols {
            let g: f64 = (0..rows).map(|r| d[r + i * rows] * d[r + j * rows]).sum();
            worst = worst.max((g - f64::from(u8::from(i == j))).abs());
        }
    }
    worst
}

/// Writes `iter,relative_error` rows, iterations numbered from 1.
pub fn write_fit_csv<W: std::io::Write>(out: W, history: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iter", "relative_error"])?;
    for (i, e) in history.iter().enumerate() {
        w.write_record([(i + 1).to_string(), format!("{e:e}")])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_and_rank_one() {
        let m = DenseTensor::from_fn(&[2, 2], |i| [[2.0, 0.0], [0.0, 1.0]][i[0]][i[1]]).unwrap();
        assert_eq!(leading_left_singular_vectors(&m, 1).unwrap().data(), &[1.0, 0.0]);
        let m = DenseTensor::from_fn(&[3, 4], |i| if i[0] == 0 { -(i[1] as f64 + 1.0) } else { 0.0 }).unwrap();
        let u = leading_left_singular_vectors(&m, 1).unwrap();
        assert!((u.data()[0] - 1.0).abs() < 1e-15 && u.data()[1] == 0.0 && u.data()[2] == 0.0);
        assert!(leading_left_singular_vectors(&m, 4).is_err());
        assert!(leading_left_singular_vectors(&m, 0).is_err());
    }

    #[test]
    fn eigenpair_residual() {
        let mut rng = SplitMix64::new(9);
        let m = DenseTensor::random(&[6, 20], &mut rng).unwrap();
        let u = leading_left_singular_vectors(&m, 3).unwrap();
        assert!(orthonormality_error(&u) <= 1e-10);
        let mut g = vec![0.0; 36];
        gemm(Op::Normal, Op::Transpose, 6, 6, 20, 1.0, m.data(), 6, m.data(), 6, 0.0, &mut g, 6).unwrap();
        let (vals, _) = symmetric_eigen(&g, 6).unwrap();
        let mut gu = vec![0.0; 18];
        gemm(Op::Normal, Op::Normal, 6, 3, 6, 1.0, &g, 6, u.data(), 6, 0.0, &mut gu, 6).unwrap();
        let resid = (0..3)
            .flat_map(|j| (0..6).map(move |i| (i, j)))
            .map(|(i, j)| (gu[i + 6 * j] - vals[j] * u.data()[i + 6 * j]).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(resid <= 1e-8, "{resid}");
        assert!(vals.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn reconstruct_identity_and_zero() {
        let mut rng = SplitMix64::new(1);
        let t = DenseTensor::random(&[3, 4, 2], &mut rng).unwrap();
        let eye = |n: usize| DenseTensor::from_fn(&[n, n], |i| f64::from(u8::from(i[0] == i[1]))).unwrap();
        let model = TuckerModel { core: t.clone(), factors: [eye(3), eye(4), eye(2)], fit_history: vec![], orthonormality_history: vec![] };
        assert_eq!(tucker_reconstruct(&model).unwrap(), t);
        let zero = TuckerModel {
            core: DenseTensor::packed_zeros(&[2, 2, 2]).unwrap(),
            factors: [0, 1, 2].map(|_| random_orthonormal(5, 2, &mut rng).unwrap()),
            fit_history: vec![],
            orthonormality_history: vec![],
        };
        assert!(tucker_reconstruct(&zero).unwrap().data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn full_rank_is_lossless() {
        let mut rng = SplitMix64::new(2);
        let t = DenseTensor::random(&[4, 3, 5], &mut rng).unwrap();
        let model = hooi(&t, [4, 3, 5], 1).unwrap();
        assert!(model.fit_history[0] <= 1e-10);
    }

    #[test]
    fn recovers_exact_rank() {
        let mut rng = SplitMix64::new(3);
        let t = synthetic_tucker([9, 8, 7], [3, 2, 2], &mut rng).unwrap();
        let model = hooi(&t, [3, 2, 2], 5).unwrap();
        assert!(*model.fit_history.last().unwrap() <= 1e-8);
        for f in &model.factors {
            assert!(orthonormality_error(f) <= 1e-10);
        }
    }

    #[test]
    fn rejects_bad_core_dims() {
        let t = DenseTensor::packed_zeros(&[2, 2, 2]).unwrap();
        assert!(hooi(&t, [3, 1, 1], 1).is_err());
        assert!(hooi(&t, [1, 1, 1], 0).is_err());
    }
}
