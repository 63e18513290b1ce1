//! Dense GF(2) linear algebra on bit-packed words.
//!
//! Matrices are row-major `Vec<BitVec>`; anything column-oriented goes
//! through an explicit transpose.  Elimination always scans columns left to
//! right and rows top to bottom, so every derived object (RREF, rank,
//! nullspace basis, dual matrix) is deterministic for a given input.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum Gf2Error {
    #[error("row length mismatch: expected {expected}, got {got}")]
    RowLength { expected: usize, got: usize },
    #[error("index {index} out of range (len {len})")]
    IndexRange { index: usize, len: usize },
    #[error("malformed matrix text: {0}")]
    Parse(String),
}

/// Packed bit vector over GF(2). Bits beyond `len` in the last word are kept
/// zero so that word-wise operations never see garbage.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BitVec {
    len: usize,
    words: Vec<u64>,
}

#[inline]
fn word_count(len: usize) -> usize {
    len.div_ceil(64)
}

impl BitVec {
    pub fn zeros(len: usize) -> Self {
        BitVec {
            len,
            words: vec![0; word_count(len)],
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut v = BitVec {
            len,
            words: vec![!0u64; word_count(len)],
        };
        v.mask_tail();
        v
    }

    pub fn from_indices(len: usize, indices: &[usize]) -> Result<Self, Gf2Error> {
        let mut v = BitVec::zeros(len);
        for &i in indices {
            if i >= len {
                return Err(Gf2Error::IndexRange { index: i, len });
            }
            v.set(i, true);
        }
        Ok(v)
    }

    /// Bits drawn iid Bernoulli(p). Consumes one RNG draw per bit.
    pub fn random(len: usize, p: f64, rng: &mut crate::rng::SplitMix64) -> Self {
        let mut v = BitVec::zeros(len);
        for i in 0..len {
            if rng.bernoulli(p) {
                v.set(i, true);
            }
        }
        v
    }

    #[inline]
    fn mask_tail(&mut self) {
        let rem = self.len % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        debug_assert!(i < self.len);
        let mask = 1u64 << (i % 64);
        if value {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    #[inline]
    pub fn flip(&mut self, i: usize) {
        debug_assert!(i < self.len);
        self.words[i / 64] ^= 1u64 << (i % 64);
    }

    #[inline]
    pub fn xor_assign(&mut self, other: &BitVec) {
        debug_assert_eq!(self.len, other.len);
        for (w, o) in self.words.iter_mut().zip(&other.words) {
            *w ^= o;
        }
    }

    pub fn xor(&self, other: &BitVec) -> BitVec {
        let mut out = self.clone();
        out.xor_assign(other);
        out
    }

    #[inline]
    pub fn weight(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    #[inline]
    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Parity of the AND with `other` (GF(2) inner product).
    #[inline]
    pub fn dot(&self, other: &BitVec) -> bool {
        debug_assert_eq!(self.len, other.len);
        let mut acc = 0u64;
        for (w, o) in self.words.iter().zip(&other.words) {
            acc ^= w & o;
        }
        acc.count_ones() % 2 == 1
    }

    /// Index of the first set bit, if any.
    pub fn first_one(&self) -> Option<usize> {
        for (wi, &w) in self.words.iter().enumerate() {
            if w != 0 {
                return Some(wi * 64 + w.trailing_zeros() as usize);
            }
        }
        None
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    None
                } else {
                    let b = w.trailing_zeros() as usize;
                    w &= w - 1;
                    Some(wi * 64 + b)
                }
            })
        })
    }
}

impl fmt::Debug for BitVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len {
            write!(f, "{}", if self.get(i) { '1' } else { '0' })?;
        }
        Ok(())
    }
}

/// Binary matrix, rows packed as `BitVec`. May have zero rows or columns.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinMatrix {
    cols: usize,
    rows: Vec<BitVec>,
}

impl BinMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        BinMatrix {
            cols,
            rows: vec![BitVec::zeros(cols); rows],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = BinMatrix::zeros(n, n);
        for i in 0..n {
            m.rows[i].set(i, true);
        }
        m
    }

    pub fn from_rows(cols: usize, rows: Vec<BitVec>) -> Result<Self, Gf2Error> {
        for r in &rows {
            if r.len() != cols {
                return Err(Gf2Error::RowLength {
                    expected: cols,
                    got: r.len(),
                });
            }
        }
        Ok(BinMatrix { cols, rows })
    }

    /// Builds from per-row lists of set column indices.
    pub fn from_row_indices(cols: usize, rows: &[Vec<usize>]) -> Result<Self, Gf2Error> {
        let rows = rows
            .iter()
            .map(|idx| BitVec::from_indices(cols, idx))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(BinMatrix { cols, rows })
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &BitVec {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[BitVec] {
        &self.rows
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.rows[i].get(j)
    }

    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        self.rows[i].set(j, value);
    }

    pub fn push_row(&mut self, row: BitVec) -> Result<(), Gf2Error> {
        if row.len() != self.cols {
            return Err(Gf2Error::RowLength {
                expected: self.cols,
                got: row.len(),
            });
        }
        self.rows.push(row);
        Ok(())
    }

    /// Vertical concatenation `[self; other]`.
    pub fn stack(&self, other: &BinMatrix) -> Result<BinMatrix, Gf2Error> {
        let mut rows = self.rows.clone();
        for r in &other.rows {
            if r.len() != self.cols {
                return Err(Gf2Error::RowLength {
                    expected: self.cols,
                    got: r.len(),
                });
            }
            rows.push(r.clone());
        }
        Ok(BinMatrix {
            cols: self.cols,
            rows,
        })
    }

    pub fn transpose(&self) -> BinMatrix {
        let mut t = BinMatrix::zeros(self.cols, self.rows.len());
        for (i, row) in self.rows.iter().enumerate() {
            for j in row.iter_ones() {
                t.rows[j].set(i, true);
            }
        }
        t
    }

    /// y = M x over GF(2); `x` has `cols` bits, result has `rows` bits.
    pub fn mul_vec(&self, x: &BitVec) -> Result<BitVec, Gf2Error> {
        if x.len() != self.cols {
            return Err(Gf2Error::RowLength {
                expected: self.cols,
                got: x.len(),
            });
        }
        let mut y = BitVec::zeros(self.rows.len());
        for (i, row) in self.rows.iter().enumerate() {
            if row.dot(x) {
                y.set(i, true);
            }
        }
        Ok(y)
    }

    /// y = x M over GF(2); `x` has `rows` bits, result has `cols` bits.
    pub fn vec_mul(&self, x: &BitVec) -> Result<BitVec, Gf2Error> {
        if x.len() != self.rows.len() {
            return Err(Gf2Error::RowLength {
                expected: self.rows.len(),
                got: x.len(),
            });
        }
        let mut y = BitVec::zeros(self.cols);
        for i in x.iter_ones() {
            y.xor_assign(&self.rows[i]);
        }
        Ok(y)
    }

    pub fn col_weight(&self, j: usize) -> usize {
        self.rows.iter().filter(|r| r.get(j)).count()
    }

    pub fn row_weight(&self, i: usize) -> usize {
        self.rows[i].weight()
    }

    /// (max column weight, max row weight); zeros for empty dimensions.
    pub fn max_weights(&self) -> (usize, usize) {
        let max_col = (0..self.cols).map(|j| self.col_weight(j)).max().unwrap_or(0);
        let max_row = self.rows.iter().map(|r| r.weight()).max().unwrap_or(0);
        (max_col, max_row)
    }

    /// Reduced row echelon form with its pivot columns, via deterministic
    /// Gaussian elimination (leftmost pivot column, topmost available row).
    pub fn rref(&self) -> (BinMatrix, Vec<usize>) {
        let mut m = self.clone();
        let mut pivots = Vec::new();
        let mut next_row = 0;
        for col in 0..m.cols {
            let Some(pivot_row) = (next_row..m.rows.len()).find(|&i| m.rows[i].get(col)) else {
                continue;
            };
            m.rows.swap(next_row, pivot_row);
            let pivot = m.rows[next_row].clone();
            for (i, row) in m.rows.iter_mut().enumerate() {
                if i != next_row && row.get(col) {
                    row.xor_assign(&pivot);
                }
            }
            pivots.push(col);
            next_row += 1;
        }
        m.rows.truncate(next_row);
        (m, pivots)
    }

    pub fn rank(&self) -> usize {
        self.rref().1.len()
    }

    /// Basis of the right nullspace {x : M x = 0}, one vector per free
    /// column in increasing column order. For a 0 x n matrix this is the
    /// n x n identity.
    pub fn nullspace_basis(&self) -> BinMatrix {
        let (rref, pivots) = self.rref();
        let mut is_pivot = vec![false; self.cols];
        for &p in &pivots {
            is_pivot[p] = true;
        }
        let mut basis = Vec::new();
        for f in 0..self.cols {
            if is_pivot[f] {
                continue;
            }
            let mut v = BitVec::zeros(self.cols);
            v.set(f, true);
            for (i, &p) in pivots.iter().enumerate() {
                if rref.rows[i].get(f) {
                    v.set(p, true);
                }
            }
            basis.push(v);
        }
        BinMatrix {
            cols: self.cols,
            rows: basis,
        }
    }

    /// Dual coupling matrix: a full-rank matrix whose rowspace is the
    /// orthogonal complement of this one's.
    pub fn dual_matrix(&self) -> BinMatrix {
        self.nullspace_basis()
    }

    /// Membership of `v` in the rowspace, by reduction against the RREF.
    pub fn in_rowspace(&self, v: &BitVec) -> Result<bool, Gf2Error> {
        if v.len() != self.cols {
            return Err(Gf2Error::RowLength {
                expected: self.cols,
                got: v.len(),
            });
        }
        let (rref, pivots) = self.rref();
        Ok(reduce_by_rref(v, &rref, &pivots).is_zero())
    }

    /// Serializes to the sparse text format: header "rows cols", then one
    /// line per row of sorted set-column indices (blank line = zero row).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{} {}\n", self.rows.len(), self.cols));
        for row in &self.rows {
            let idx: Vec<String> = row.iter_ones().map(|i| i.to_string()).collect();
            out.push_str(&idx.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<BinMatrix, Gf2Error> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Gf2Error::Parse("empty input".into()))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 2 {
            return Err(Gf2Error::Parse(format!(
                "header must be 'rows cols', got '{header}'"
            )));
        }
        let n_rows: usize = parts[0]
            .parse()
            .map_err(|_| Gf2Error::Parse(format!("bad row count '{}'", parts[0])))?;
        let n_cols: usize = parts[1]
            .parse()
            .map_err(|_| Gf2Error::Parse(format!("bad column count '{}'", parts[1])))?;
        let mut rows = Vec::with_capacity(n_rows);
        for i in 0..n_rows {
            let line = lines
                .next()
                .ok_or_else(|| Gf2Error::Parse(format!("missing row {i}")))?;
            let mut row = BitVec::zeros(n_cols);
            let mut prev: Option<usize> = None;
            for tok in line.split_whitespace() {
                let j: usize = tok
                    .parse()
                    .map_err(|_| Gf2Error::Parse(format!("bad index '{tok}' in row {i}")))?;
                if j >= n_cols {
                    return Err(Gf2Error::Parse(format!(
                        "index {j} out of range in row {i} (cols {n_cols})"
                    )));
                }
                if let Some(p) = prev {
                    if j <= p {
                        return Err(Gf2Error::Parse(format!(
                            "indices not strictly increasing in row {i}"
                        )));
                    }
                }
                prev = Some(j);
                row.set(j, true);
            }
            rows.push(row);
        }
        if lines.any(|l| !l.trim().is_empty()) {
            return Err(Gf2Error::Parse("trailing content after last row".into()));
        }
        Ok(BinMatrix { cols: n_cols, rows })
    }
}

impl fmt::Debug for BinMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "BinMatrix {}x{}", self.rows.len(), self.cols)?;
        for row in &self.rows {
            writeln!(f, "  {row:?}")?;
        }
        Ok(())
    }
}

/// Reduces `v` against an RREF (pivot list must match); returns the residue.
pub(crate) fn reduce_by_rref(v: &BitVec, rref: &BinMatrix, pivots: &[usize]) -> BitVec {
    let mut w = v.clone();
    for (i, &p) in pivots.iter().enumerate() {
        if w.get(p) {
            w.xor_assign(rref.row(i));
        }
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn random_matrix(rows: usize, cols: usize, p: f64, rng: &mut SplitMix64) -> BinMatrix {
        let rows = (0..rows).map(|_| BitVec::random(cols, p, rng)).collect();
        BinMatrix::from_rows(cols, rows).unwrap()
    }

    /// Counts distinct row combinations by brute force: rank r iff the
    /// rowspace has 2^r elements.
    fn exhaustive_rank(m: &BinMatrix) -> usize {
        use std::collections::HashSet;
        let k = m.n_rows();
        assert!(k <= 16);
        let mut seen = HashSet::new();
        for mask in 0u32..(1 << k) {
            let mut v = BitVec::zeros(m.n_cols());
            for i in 0..k {
                if (mask >> i) & 1 == 1 {
                    v.xor_assign(m.row(i));
                }
            }
            seen.insert(format!("{v:?}"));
        }
        let count = seen.len();
        assert!(count.is_power_of_two());
        count.trailing_zeros() as usize
    }

    #[test]
    fn identity_rank() {
        assert_eq!(BinMatrix::identity(5).rank(), 5);
    }

    #[test]
    fn duplicate_rows_rank_one() {
        let m = BinMatrix::from_row_indices(4, &[vec![0, 2], vec![0, 2]]).unwrap();
        assert_eq!(m.rank(), 1);
    }

    #[test]
    fn empty_matrix_conventions() {
        let m = BinMatrix::zeros(0, 4);
        assert_eq!(m.rank(), 0);
        let ns = m.nullspace_basis();
        assert_eq!(ns, BinMatrix::identity(4));
    }

    #[test]
    fn rank_matches_exhaustive_oracle() {
        let mut rng = SplitMix64::new(11);
        for trial in 0..60 {
            let rows = 1 + (trial % 10);
            let cols = 1 + (trial % 12);
            let m = random_matrix(rows, cols, 0.4, &mut rng);
            assert_eq!(m.rank(), exhaustive_rank(&m), "trial {trial}");
        }
    }

    #[test]
    fn rank_plus_nullity() {
        let mut rng = SplitMix64::new(5);
        for _ in 0..100 {
            let m = random_matrix(
                1 + rng.below(12) as usize,
                1 + rng.below(20) as usize,
                0.35,
                &mut rng,
            );
            let ns = m.nullspace_basis();
            assert_eq!(m.rank() + ns.n_rows(), m.n_cols());
            assert_eq!(ns.rank(), ns.n_rows());
            // Every basis vector really annihilates M.
            for v in ns.rows() {
                assert!(m.mul_vec(v).unwrap().is_zero());
            }
        }
    }

    #[test]
    fn dual_of_dual_has_same_rowspace() {
        let mut rng = SplitMix64::new(17);
        for _ in 0..50 {
            let m = random_matrix(
                1 + rng.below(8) as usize,
                1 + rng.below(14) as usize,
                0.4,
                &mut rng,
            );
            let dd = m.dual_matrix().dual_matrix();
            assert_eq!(dd.rank(), m.rank());
            for v in dd.rows() {
                assert!(m.in_rowspace(v).unwrap());
            }
            for v in m.rows() {
                assert!(dd.in_rowspace(v).unwrap());
            }
        }
    }

    #[test]
    fn in_rowspace_matches_exhaustive() {
        let mut rng = SplitMix64::new(23);
        for _ in 0..40 {
            let m = random_matrix(1 + rng.below(8) as usize, 10, 0.3, &mut rng);
            let v = BitVec::random(10, 0.3, &mut rng);
            let k = m.n_rows();
            let mut exhaustive = false;
            for mask in 0u32..(1 << k) {
                let mut w = BitVec::zeros(10);
                for i in 0..k {
                    if (mask >> i) & 1 == 1 {
                        w.xor_assign(m.row(i));
                    }
                }
                if w == v {
                    exhaustive = true;
                    break;
                }
            }
            assert_eq!(m.in_rowspace(&v).unwrap(), exhaustive);
        }
    }

    #[test]
    fn transpose_involution() {
        let mut rng = SplitMix64::new(29);
        let m = random_matrix(7, 13, 0.4, &mut rng);
        assert_eq!(m.transpose().transpose(), m);
    }

    #[test]
    fn text_round_trip() {
        let mut rng = SplitMix64::new(31);
        for _ in 0..30 {
            let m = random_matrix(
                rng.below(6) as usize,
                1 + rng.below(70) as usize,
                0.2,
                &mut rng,
            );
            let text = m.to_text();
            let back = BinMatrix::from_text(&text).unwrap();
            assert_eq!(back, m);
            assert_eq!(back.to_text(), text);
        }
    }

    #[test]
    fn text_rejects_malformed() {
        assert!(BinMatrix::from_text("").is_err());
        assert!(BinMatrix::from_text("2\n0\n1\n").is_err());
        assert!(BinMatrix::from_text("1 3\n5\n").is_err());
        assert!(BinMatrix::from_text("1 3\n1 1\n").is_err());
        assert!(BinMatrix::from_text("2 3\n0\n").is_err());
    }

    #[test]
    fn dot_and_weight() {
        let a = BitVec::from_indices(80, &[0, 63, 64, 79]).unwrap();
        let b = BitVec::from_indices(80, &[63, 64]).unwrap();
        assert_eq!(a.weight(), 4);
        assert!(!a.dot(&b)); // overlap 2, even parity
        let c = BitVec::from_indices(80, &[64]).unwrap();
        assert!(a.dot(&c));
    }

    #[test]
    fn iter_ones_sorted() {
        let v = BitVec::from_indices(130, &[5, 0, 129, 64]).unwrap();
        let got: Vec<usize> = v.iter_ones().collect();
        assert_eq!(got, vec![0, 5, 64, 129]);
    }
}
