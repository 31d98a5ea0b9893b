//! Column-major strided layouts.
//!
//! A [`Layout`] pairs per-mode extents with per-mode element strides. Mode 0
//! always has unit stride; the packed layout of `dims` has
//! `strides[i] = dims[0] * ... * dims[i - 1]`.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Layout {
    dims: Vec<usize>,
    strides: Vec<usize>,
}

impl Layout {
    /// Builds a layout from explicit strides, rejecting zero extents, a
    /// non-unit first stride and layouts whose modes may alias.
    pub fn new(dims: Vec<usize>, strides: Vec<usize>) -> Result<Self> {
        if dims.len() != strides.len() {
            return Err(Error::arg(format!(
                "{} dims but {} strides",
                dims.len(),
                strides.len()
            )));
        }
        if let Some(i) = dims.iter().position(|&d| d == 0) {
            return Err(Error::arg(format!("mode {i} has zero extent")));
        }
        if let Some(i) = strides.iter().position(|&s| s == 0) {
            return Err(Error::arg(format!("mode {i} has zero stride")));
        }
        if strides.first().is_some_and(|&s| s != 1) {
            return Err(Error::arg("mode 0 must have unit stride"));
        }
        let modes: Vec<(usize, usize)> = dims.iter().copied().zip(strides.iter().copied()).collect();
        if !non_aliasing(&modes) {
            return Err(Error::arg(format!(
                "strides {strides:?} alias for dims {dims:?}"
            )));
        }
        Ok(Self { dims, strides })
    }

    pub fn packed(dims: &[usize]) -> Result<Self> {
        Self::new(dims.to_vec(), packed_strides(dims))
    }

    /// The order-0 layout of a single scalar.
    pub fn scalar() -> Self {
        Self { dims: Vec::new(), strides: Vec::new() }
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn dim(&self, mode: usize) -> usize {
        self.dims[mode]
    }

    pub fn stride(&self, mode: usize) -> usize {
        self.strides[mode]
    }

    pub fn num_elements(&self) -> usize {
        self.dims.iter().product()
    }

    /// Minimum buffer length able to hold every addressed element.
    pub fn required_len(&self) -> usize {
        1 + self
            .dims
            .iter()
            .zip(&self.strides)
            .map(|(&d, &s)| (d - 1) * s)
            .sum::<usize>()
    }

    pub fn is_packed(&self) -> bool {
        self.strides == packed_strides(&self.dims)
    }

    pub fn linear_offset(&self, idx: &[usize]) -> Result<usize> {
        if idx.len() != self.order() || idx.iter().zip(&self.dims).any(|(&i, &d)| i >= d) {
            return Err(Error::OutOfRange { index: idx.to_vec(), dims: self.dims.clone() });
        }
        Ok(self.offset_unchecked(idx))
    }

    #[inline]
    pub(crate) fn offset_unchecked(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(&i, &s)| i * s).sum()
    }

    /// Whether modes `i` (inner) and `j` (outer) may be treated as a single
    /// mode: `strides[j] == strides[i] * dims[i]`.
    pub fn can_flatten(&self, i: usize, j: usize) -> Result<bool> {
        self.check_pair(i, j)?;
        Ok(self.strides[j] == self.strides[i] * self.dims[i])
    }

    /// Merges mode `j` into mode `i`. The combined mode sits where `i` was,
    /// has extent `dims[i] * dims[j]` and keeps `strides[i]`.
    pub fn flatten(&self, i: usize, j: usize) -> Result<Layout> {
        if !self.can_flatten(i, j)? {
            return Err(Error::IllegalFlatten {
                i,
                j,
                reason: format!(
                    "stride {} != {} * {}",
                    self.strides[j], self.strides[i], self.dims[i]
                ),
            });
        }
        let mut dims = self.dims.clone();
        let mut strides = self.strides.clone();
        dims[i] *= dims[j];
        dims.remove(j);
        strides.remove(j);
        Layout::new(dims, strides).map_err(|e| Error::IllegalFlatten { i, j, reason: e.to_string() })
    }

    fn check_pair(&self, i: usize, j: usize) -> Result<()> {
        let order = self.order();
        if i >= order || j >= order {
            return Err(Error::arg(format!("modes ({i}, {j}) out of range for order {order}")));
        }
        if i == j {
            return Err(Error::arg(format!("cannot flatten mode {i} with itself")));
        }
        Ok(())
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "dims {:?} strides {:?}", self.dims, self.strides)
    }
}

pub fn packed_strides(dims: &[usize]) -> Vec<usize> {
    let mut acc = 1;
    dims.iter()
        .map(|&d| {
            let s = acc;
            acc *= d;
            s
        })
        .collect()
}

/// Sufficient condition for `(extent, stride)` modes to address distinct
/// offsets: sorted by stride, each stride covers the span of the modes below
/// it. Extent-1 modes never contribute an offset and are ignored.
pub(crate) fn non_aliasing(modes: &[(usize, usize)]) -> bool {
    // Visits live modes by ascending (stride, extent, position) without
    // allocating.
    let mut prev: Option<(usize, usize, usize)> = None;
    let mut span = 1usize;
    loop {
        let next = modes
            .iter()
            .enumerate()
            .filter(|&(_, &(d, _))| d > 1)
            .map(|(i, &(d, s))| (s, d, i))
            .filter(|key| prev.is_none_or(|p| *key > p))
            .min();
        let Some((s, d, i)) = next else {
            return true;
        };
        if s < span {
            return false;
        }
        span = s.saturating_mul(d);
        prev = Some((s, d, i));
    }
}

/// Advances a column-major multi-index (mode 0 fastest). Returns `false`
/// once every index has been visited.
pub fn next_index(idx: &mut [usize], dims: &[usize]) -> bool {
    for (i, d) in idx.iter_mut().zip(dims) {
        *i += 1;
        if *i < *d {
            return true;
        }
        *i = 0;
    }
    false
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModePermutation {
    perm: Vec<usize>,
}

impl ModePermutation {
    /// `perm[q]` names the source mode that becomes mode `q` of the result.
    pub fn new(perm: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; perm.len()];
        for &p in &perm {
            if p >= perm.len() || std::mem::replace(&mut seen[p], true) {
                return Err(Error::arg(format!("{perm:?} is not a permutation")));
            }
        }
        Ok(Self { perm })
    }

    pub fn identity(order: usize) -> Self {
        Self { perm: (0..order).collect() }
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.perm
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.perm.iter().enumerate().all(|(q, &p)| q == p)
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.perm.len()];
        for (q, &p) in self.perm.iter().enumerate() {
            inv[p] = q;
        }
        Self { perm: inv }
    }

    /// The permutation taking label sequence `from` to `to`.
    pub fn between<T: PartialEq>(from: &[T], to: &[T]) -> Result<Self> {
        if from.len() != to.len() {
            return Err(Error::arg("label sequences differ in length"));
        }
        let perm = to
            .iter()
            .map(|l| from.iter().position(|f| f == l).ok_or_else(|| Error::arg("label sets differ")))
            .collect::<Result<Vec<_>>>()?;
        Self::new(perm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_offset_examples() {
        let l = Layout::packed(&[2, 3, 4]).unwrap();
        assert_eq!(l.strides(), &[1, 2, 6]);
        assert_eq!(l.linear_offset(&[0, 0, 0]).unwrap(), 0);
        assert_eq!(l.linear_offset(&[1, 2, 3]).unwrap(), 23);
        // A strided vector is only legal as a non-leading mode; model it
        // behind a unit-extent leading mode.
        let v = Layout::new(vec![1, 4], vec![1, 3]).unwrap();
        assert_eq!(v.linear_offset(&[0, 2]).unwrap(), 6);
        assert!(matches!(l.linear_offset(&[2, 0, 0]), Err(Error::OutOfRange { .. })));
        assert!(l.linear_offset(&[0, 0]).is_err());
    }

    #[test]
    fn flatten_examples() {
        let l = Layout::packed(&[2, 3, 4]).unwrap();
        assert!(l.can_flatten(1, 2).unwrap());
        let f = l.flatten(1, 2).unwrap();
        assert_eq!(f.dims(), &[2, 12]);
        assert_eq!(f.strides(), &[1, 2]);
        let ff = f.flatten(0, 1).unwrap();
        assert_eq!(ff.dims(), &[24]);
        assert_eq!(ff.strides(), &[1]);

        let padded = Layout::new(vec![2, 3], vec![1, 4]).unwrap();
        assert!(!padded.can_flatten(0, 1).unwrap());
        assert!(matches!(padded.flatten(0, 1), Err(Error::IllegalFlatten { .. })));

        let v = Layout::packed(&[5]).unwrap();
        assert!(v.can_flatten(0, 0).is_err());
    }

    #[test]
    fn rejects_bad_layouts() {
        assert!(Layout::new(vec![2, 3], vec![2, 4]).is_err());
        assert!(Layout::new(vec![0, 3], vec![1, 1]).is_err());
        assert!(Layout::new(vec![3, 2], vec![1, 2]).is_err());
        assert!(Layout::new(vec![2], vec![1, 2]).is_err());
        // extent-1 modes may carry any stride
        assert!(Layout::new(vec![3, 1, 2], vec![1, 1, 3]).is_ok());
    }

    #[test]
    fn required_len_counts_padding() {
        let l = Layout::new(vec![2, 3], vec![1, 5]).unwrap();
        assert_eq!(l.required_len(), 1 + 1 + 2 * 5);
        assert!(!l.is_packed());
        assert_eq!(Layout::scalar().required_len(), 1);
    }

    #[test]
    fn permutation_inverse_and_between() {
        let p = ModePermutation::new(vec![2, 0, 1]).unwrap();
        let inv = p.inverse();
        assert_eq!(inv.as_slice(), &[1, 2, 0]);
        assert!(ModePermutation::new(vec![0, 0]).is_err());
        let b = ModePermutation::between(&['p', 'k', 'n'], &['k', 'p', 'n']).unwrap();
        assert_eq!(b.as_slice(), &[1, 0, 2]);
    }

    #[test]
    fn odometer_visits_all() {
        let dims = [2, 3];
        let mut idx = [0, 0];
        let mut seen = vec![idx];
        while next_index(&mut idx, &dims) {
            seen.push(idx);
        }
        assert_eq!(seen.len(), 6);
        assert_eq!(seen[1], [1, 0]);
        assert_eq!(seen[2], [0, 1]);
    }
}
