use crate::error::{Error, Result};
use crate::instrument;
use crate::layout::{next_index, Layout, ModePermutation};
use crate::rng::SplitMix64;

/// A [`Layout`] bound to a buffer of `f64` values.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    layout: Layout,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(layout: Layout, data: Vec<f64>) -> Result<Self> {
        if data.len() < layout.required_len() {
            return Err(Error::arg(format!(
                "buffer of {} elements is too short for {layout} (needs {})",
                data.len(),
                layout.required_len()
            )));
        }
        Ok(Self { layout, data })
    }

    pub fn zeros(layout: Layout) -> Self {
        instrument::record_buffer();
        let data = vec![0.0; layout.required_len()];
        Self { layout, data }
    }

    pub fn packed_zeros(dims: &[usize]) -> Result<Self> {
        Ok(Self::zeros(Layout::packed(dims)?))
    }

    /// Packed tensor with `f` evaluated at every multi-index.
    pub fn from_fn(dims: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let mut t = Self::packed_zeros(dims)?;
        let mut idx = vec![0; dims.len()];
        let mut pos = 0;
        loop {
            t.data[pos] = f(&idx);
            pos += 1;
            if !next_index(&mut idx, dims) {
                break;
            }
        }
        Ok(t)
    }

    /// Packed tensor with entries uniform in `[-1, 1)`.
    pub fn random(dims: &[usize], rng: &mut SplitMix64) -> Result<Self> {
        Self::from_fn(dims, |_| rng.uniform_signed())
    }

    /// Tensor with entries uniform in `[-1, 1)` stored in `layout`; padding
    /// slots are filled with NaN so stray reads are visible.
    pub fn random_in(layout: Layout, rng: &mut SplitMix64) -> Self {
        let mut t = Self::zeros(layout);
        t.data.fill(f64::NAN);
        let dims = t.layout.dims().to_vec();
        let mut idx = vec![0; dims.len()];
        loop {
            let off = t.layout.offset_unchecked(&idx);
            t.data[off] = rng.uniform_signed();
            if !next_index(&mut idx, &dims) {
                break;
            }
        }
        t
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn dims(&self) -> &[usize] {
        self.layout.dims()
    }

    pub fn order(&self) -> usize {
        self.layout.order()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, idx: &[usize]) -> Result<f64> {
        Ok(self.data[self.layout.linear_offset(idx)?])
    }

    pub fn set(&mut self, idx: &[usize], value: f64) -> Result<()> {
        let off = self.layout.linear_offset(idx)?;
        self.data[off] = value;
        Ok(())
    }

    /// Logical values in column-major order, skipping any padding.
    pub fn to_vec(&self) -> Vec<f64> {
        if self.layout.is_packed() {
            return self.data[..self.layout.num_elements()].to_vec();
        }
        let dims = self.layout.dims();
        let mut out = Vec::with_capacity(self.layout.num_elements());
        let mut idx = vec![0; dims.len()];
        loop {
            out.push(self.data[self.layout.offset_unchecked(&idx)]);
            if !next_index(&mut idx, dims) {
                break;
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.to_vec().iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Explicit transposition into a fresh packed tensor `u` with
    /// `u.dims[q] == self.dims[perm[q]]`. Recorded as one transposition.
    pub fn permute_copy(&self, perm: &ModePermutation) -> Result<DenseTensor> {
        if perm.len() != self.order() {
            return Err(Error::arg(format!(
                "permutation of length {} for order-{} tensor",
                perm.len(),
                self.order()
            )));
        }
        let dims: Vec<usize> = perm.as_slice().iter().map(|&p| self.dims()[p]).collect();
        let mut out = DenseTensor::packed_zeros(&dims)?;
        permute_into(self, perm, &mut out)?;
        Ok(out)
    }

    /// Mode-`r` unfolding: a packed `dims[r] x prod(other dims)` matrix whose
    /// columns enumerate the remaining modes in ascending mode order.
    pub fn unfold(&self, r: usize) -> Result<DenseTensor> {
        if r >= self.order() {
            return Err(Error::arg(format!("mode {r} out of range for order {}", self.order())));
        }
        let rows = self.dims()[r];
        let cols = self.layout.num_elements() / rows;
        let mut out = DenseTensor::packed_zeros(&[rows, cols])?;
        let dims = self.dims().to_vec();
        let mut idx = vec![0; dims.len()];
        loop {
            let mut col = 0;
            let mut scale = 1;
            for (mode, (&i, &d)) in idx.iter().zip(&dims).enumerate() {
                if mode != r {
                    col += i * scale;
                    scale *= d;
                }
            }
            out.data[idx[r] + col * rows] = self.data[self.layout.offset_unchecked(&idx)];
            if !next_index(&mut idx, &dims) {
                break;
            }
        }
        Ok(out)
    }
}

/// Writes `src` permuted by `perm` into `dst`, whose dims must already be the
/// permuted dims. Any layout of `dst` is accepted. Recorded as one
/// transposition.
pub(crate) fn permute_into(src: &DenseTensor, perm: &ModePermutation, dst: &mut DenseTensor) -> Result<()> {
    let p = perm.as_slice();
    if p.len() != src.order() || dst.order() != src.order() {
        return Err(Error::arg("permutation order mismatch"));
    }
    if p.iter().enumerate().any(|(q, &s)| dst.dims()[q] != src.dims()[s]) {
        return Err(Error::arg("destination dims do not match permuted source"));
    }
    instrument::record_transposition(src.layout.num_elements());
    let src_dims = src.dims().to_vec();
    // Destination stride seen from each source mode.
    let mut dst_stride_of_src = vec![0; p.len()];
    for (q, &s) in p.iter().enumerate() {
        dst_stride_of_src[s] = dst.layout.stride(q);
    }
    let mut idx = vec![0; src_dims.len()];
    loop {
        let from = src.layout.offset_unchecked(&idx);
        let to: usize = idx.iter().zip(&dst_stride_of_src).map(|(&i, &s)| i * s).sum();
        dst.data[to] = src.data[from];
        if !next_index(&mut idx, &src_dims) {
            break;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iota(dims: &[usize]) -> DenseTensor {
        let mut v = 0.0;
        DenseTensor::from_fn(dims, |_| {
            v += 1.0;
            v
        })
        .unwrap()
    }

    #[test]
    fn identity_permutation_copies_exactly() {
        let t = iota(&[2, 3, 4]);
        let u = t.permute_copy(&ModePermutation::identity(3)).unwrap();
        assert_eq!(t, u);
    }

    #[test]
    fn matrix_transpose_round_trip() {
        let t = iota(&[2, 3]);
        let swap = ModePermutation::new(vec![1, 0]).unwrap();
        let u = t.permute_copy(&swap).unwrap();
        assert_eq!(u.dims(), &[3, 2]);
        for i in 0..2 {
            for j in 0..3 {
                assert_eq!(u.get(&[j, i]).unwrap(), t.get(&[i, j]).unwrap());
            }
        }
        assert_eq!(u.permute_copy(&swap).unwrap(), t);
    }

    #[test]
    fn permute_pkn_to_kpn() {
        let b = iota(&[2, 3, 4]); // B[p][k][n]
        let perm = ModePermutation::between(&['p', 'k', 'n'], &['k', 'p', 'n']).unwrap();
        let before = instrument::Snapshot::now();
        let u = b.permute_copy(&perm).unwrap();
        let moved = before.elapsed();
        assert_eq!(moved.transpositions, 1);
        assert_eq!(moved.bytes_copied, 24 * 8);
        assert_eq!(u.dims(), &[3, 2, 4]);
        assert_eq!(u.get(&[2, 1, 3]).unwrap(), b.get(&[1, 2, 3]).unwrap());
        assert!(b.permute_copy(&ModePermutation::identity(2)).is_err());
    }

    #[test]
    fn unfold_examples() {
        let v = iota(&[5]);
        let u = v.unfold(0).unwrap();
        assert_eq!(u.dims(), &[5, 1]);
        assert_eq!(u.data(), v.data());

        let m = iota(&[3, 4]);
        assert_eq!(m.unfold(0).unwrap(), m);

        let t = iota(&[2, 3, 4]);
        let u0 = t.unfold(0).unwrap();
        assert_eq!(u0.dims(), &[2, 12]);
        assert_eq!(u0.get(&[1, 11]).unwrap(), t.get(&[1, 2, 3]).unwrap());
        assert!(t.unfold(3).is_err());
    }

    #[test]
    fn unfold_matches_brute_force() {
        let t = iota(&[2, 3, 4]);
        for r in 0..3 {
            let u = t.unfold(r).unwrap();
            let others: Vec<usize> = (0..3).filter(|&m| m != r).collect();
            for a in 0..2 {
                for b in 0..3 {
                    for c in 0..4 {
                        let idx = [a, b, c];
                        let col = idx[others[0]] + idx[others[1]] * t.dims()[others[0]];
                        assert_eq!(u.get(&[idx[r], col]).unwrap(), t.get(&idx).unwrap());
                    }
                }
            }
        }
    }

    #[test]
    fn to_vec_skips_padding() {
        let l = Layout::new(vec![2, 2], vec![1, 3]).unwrap();
        let t = DenseTensor::new(l, vec![1.0, 2.0, -9.0, 3.0, 4.0]).unwrap();
        assert_eq!(t.to_vec(), vec![1.0, 2.0, 3.0, 4.0]);
        assert!(DenseTensor::new(Layout::packed(&[3]).unwrap(), vec![0.0; 2]).is_err());
    }
}
