//! Index bookkeeping for operators on tensor-product spaces.
//!
//! Subsystems are ordered left to right with the last factor varying fastest,
//! matching `kron` ordering.

/// Mixed-radix conversion between a flat index and per-subsystem digits.
pub fn digits(mut idx: usize, dims: &[usize]) -> Vec<usize> {
    let mut out = vec![0; dims.len()];
    for k in (0..dims.len()).rev() {
        out[k] = idx % dims[k];
        idx /= dims[k];
    }
    out
}

pub fn flat(digits: &[usize], dims: &[usize]) -> usize {
    digits.iter().zip(dims).fold(0, |acc, (&d, &n)| acc * n + d)
}

/// Splits a tensor space into kept and traced factors.
#[derive(Clone, Debug)]
pub struct Split {
    dims: Vec<usize>,
    mask: Vec<bool>,
    kept_dims: Vec<usize>,
    traced_dims: Vec<usize>,
}

impl Split {
    /// `traced[k]` marks subsystem `k` as traced out.
    pub fn new(dims: &[usize], traced: &[bool]) -> Self {
        assert_eq!(dims.len(), traced.len(), "one flag per subsystem");
        let kept_dims = dims.iter().zip(traced).filter(|(_, &t)| !t).map(|(&d, _)| d).collect();
        let traced_dims = dims.iter().zip(traced).filter(|(_, &t)| t).map(|(&d, _)| d).collect();
        Split { dims: dims.to_vec(), mask: traced.to_vec(), kept_dims, traced_dims }
    }

    pub fn total(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn kept(&self) -> usize {
        self.kept_dims.iter().product()
    }

    pub fn traced(&self) -> usize {
        self.traced_dims.iter().product()
    }

    /// Flat index of the full space from a kept index and a traced index.
    pub fn join(&self, kept: usize, traced: usize) -> usize {
        let kd = digits(kept, &self.kept_dims);
        let td = digits(traced, &self.traced_dims);
        let (mut ki, mut ti) = (0, 0);
        let full: Vec<usize> = self
            .mask
            .iter()
            .map(|&t| {
                if t {
                    ti += 1;
                    td[ti - 1]
                } else {
                    ki += 1;
                    kd[ki - 1]
                }
            })
            .collect();
        flat(&full, &self.dims)
    }

    /// Table `map[k][t] = join(k, t)`.
    pub fn table(&self) -> Vec<Vec<usize>> {
        (0..self.kept()).map(|k| (0..self.traced()).map(|t| self.join(k, t)).collect()).collect()
    }
}

/// For a partial transpose on the flagged subsystems: maps the entry `(i, j)`
/// of the result to the entry of the source it is copied from.
pub fn partial_transpose_source(i: usize, j: usize, dims: &[usize], mask: &[bool]) -> (usize, usize) {
    let mut di = digits(i, dims);
    let mut dj = digits(j, dims);
    for k in 0..dims.len() {
        if mask[k] {
            std::mem::swap(&mut di[k], &mut dj[k]);
        }
    }
    (flat(&di, dims), flat(&dj, dims))
}

/// Permutation of subsystems: output factor `k` is input factor `perm[k]`.
/// Returns `src[new_index] = old_index`.
pub fn permutation_source(dims: &[usize], perm: &[usize]) -> Vec<usize> {
    assert_eq!(dims.len(), perm.len());
    let new_dims: Vec<usize> = perm.iter().map(|&p| dims[p]).collect();
    let total: usize = dims.iter().product();
    (0..total)
        .map(|n| {
            let nd = digits(n, &new_dims);
            let mut od = vec![0; dims.len()];
            for (k, &p) in perm.iter().enumerate() {
                od[p] = nd[k];
            }
            flat(&od, dims)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digits_roundtrip() {
        let dims = [2, 3, 4];
        for i in 0..24 {
            assert_eq!(flat(&digits(i, &dims), &dims), i);
        }
    }

    #[test]
    fn split_covers_space_once() {
        let s = Split::new(&[2, 3, 2], &[false, true, false]);
        let mut seen = vec![false; 12];
        for row in s.table() {
            for idx in row {
                assert!(!seen[idx]);
                seen[idx] = true;
            }
        }
        assert!(seen.into_iter().all(|b| b));
    }

    #[test]
    fn swap_permutation() {
        // |a b> -> |b a> on 2x3
        let src = permutation_source(&[2, 3], &[1, 0]);
        // new index (b, a) = b*2 + a picks old a*3 + b
        assert_eq!(src[1 * 2 + 0], 0 * 3 + 1);
        assert_eq!(src[2 * 2 + 1], 1 * 3 + 2);
    }
}
