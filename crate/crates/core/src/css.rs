//! CSS code pairs (G, H) with G H^T = 0, their homology bases, and codeword
//! distances computed exhaustively (small codes) or by randomized
//! information-set search (large codes).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gf2::{reduce_by_rref, BinMatrix, BitVec, Gf2Error};
use crate::rng::{split_seed, SplitMix64};

/// Exhaustive coset searches walk 2^rank combinations; beyond this rank the
/// call is refused rather than left to run for hours.
pub const MAX_EXHAUSTIVE_RANK: usize = 26;

#[derive(Debug, Error)]
pub enum CssError {
    #[error("G has {g} columns but H has {h}")]
    ColumnMismatch { g: usize, h: usize },
    #[error("rows G[{g_row}] and H[{h_row}] are not orthogonal")]
    NotOrthogonal { g_row: usize, h_row: usize },
    #[error("vector length {got} does not match block length {expected}")]
    Length { expected: usize, got: usize },
    #[error("exhaustive search over rank {rank} exceeds the cap of {max}")]
    InfeasibleSize { rank: usize, max: usize },
    #[error("the code has no nontrivial codewords (k = 0)")]
    NoLogicals,
    #[error(transparent)]
    Gf2(#[from] Gf2Error),
}

/// Incremental GF(2) row basis keyed by leading bit, used for membership
/// and quotient-basis construction.
struct XorBasis {
    rows: std::collections::BTreeMap<usize, BitVec>,
}

impl XorBasis {
    fn new() -> Self {
        XorBasis {
            rows: std::collections::BTreeMap::new(),
        }
    }

    /// Reduces `v`; if independent of the basis, inserts the residue and
    /// returns it, otherwise returns None.
    fn insert(&mut self, v: &BitVec) -> Option<BitVec> {
        let mut w = v.clone();
        while let Some(lead) = w.first_one() {
            match self.rows.get(&lead) {
                Some(row) => w.xor_assign(row),
                None => {
                    self.rows.insert(lead, w.clone());
                    return Some(w);
                }
            }
        }
        None
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CssPair {
    g: BinMatrix,
    h: BinMatrix,
    rank_g: usize,
    rank_h: usize,
    k: usize,
}

impl CssPair {
    /// Validates orthogonality (reporting the first offending row pair) and
    /// computes k = n - rank G - rank H.
    pub fn new(g: BinMatrix, h: BinMatrix) -> Result<Self, CssError> {
        if g.n_cols() != h.n_cols() {
            return Err(CssError::ColumnMismatch {
                g: g.n_cols(),
                h: h.n_cols(),
            });
        }
        for (i, gr) in g.rows().iter().enumerate() {
            for (j, hr) in h.rows().iter().enumerate() {
                if gr.dot(hr) {
                    return Err(CssError::NotOrthogonal { g_row: i, h_row: j });
                }
            }
        }
        let rank_g = g.rank();
        let rank_h = h.rank();
        let k = g.n_cols() - rank_g - rank_h;
        Ok(CssPair {
            g,
            h,
            rank_g,
            rank_h,
            k,
        })
    }

    pub fn g(&self) -> &BinMatrix {
        &self.g
    }

    pub fn h(&self) -> &BinMatrix {
        &self.h
    }

    /// Block length n.
    pub fn n(&self) -> usize {
        self.g.n_cols()
    }

    /// Number of logical classes generators, k = n - rank G - rank H.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn rank_g(&self) -> usize {
        self.rank_g
    }

    pub fn rank_h(&self) -> usize {
        self.rank_h
    }

    /// Code rate k/n.
    pub fn rate(&self) -> f64 {
        self.k as f64 / self.n() as f64
    }

    /// The same pair with the roles of G and H exchanged.
    pub fn swapped(&self) -> CssPair {
        CssPair {
            g: self.h.clone(),
            h: self.g.clone(),
            rank_g: self.rank_h,
            rank_h: self.rank_g,
            k: self.k,
        }
    }

    /// k vectors in the kernel of H that are independent modulo the rowspace
    /// of G: representatives of the nontrivial codeword classes.
    /// Deterministic for a given pair.
    pub fn homology_basis(&self) -> BinMatrix {
        let mut xb = XorBasis::new();
        for row in self.g.rows() {
            xb.insert(row);
        }
        let kernel = self.h.nullspace_basis();
        let mut basis = Vec::with_capacity(self.k);
        for v in kernel.rows() {
            if basis.len() == self.k {
                break;
            }
            if let Some(reduced) = xb.insert(v) {
                basis.push(reduced);
            }
        }
        debug_assert_eq!(basis.len(), self.k);
        BinMatrix::from_rows(self.n(), basis).expect("basis rows have width n")
    }

    /// The augmented dual matrix H* = rows(G) + homology basis. Its rank is
    /// rank G + k = n - rank H, and its rowspace is the kernel of H.
    pub fn h_star(&self) -> BinMatrix {
        self.g
            .stack(&self.homology_basis())
            .expect("same column count")
    }

    /// The mirror construction G* = rows(H) + homology basis of the swapped
    /// pair; its rowspace is the kernel of G.
    pub fn g_star(&self) -> BinMatrix {
        self.swapped().h_star()
    }
}

/// Minimum weight over the coset e + rowspace(M), by Gray-code walk over all
/// 2^rank(M) combinations.
pub fn defect_distance(e: &BitVec, m: &BinMatrix) -> Result<usize, CssError> {
    if e.len() != m.n_cols() {
        return Err(CssError::Length {
            expected: m.n_cols(),
            got: e.len(),
        });
    }
    let (rref, pivots) = m.rref();
    let rank = pivots.len();
    if rank > MAX_EXHAUSTIVE_RANK {
        return Err(CssError::InfeasibleSize {
            rank,
            max: MAX_EXHAUSTIVE_RANK,
        });
    }
    let mut cur = e.clone();
    let mut best = cur.weight();
    for i in 1u64..(1u64 << rank) {
        let j = i.trailing_zeros() as usize;
        cur.xor_assign(rref.row(j));
        best = best.min(cur.weight());
        if best == 0 {
            break;
        }
    }
    Ok(best)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CssDistances {
    pub d_g: usize,
    pub d_h: usize,
}

/// Exact distances by full enumeration: d_G is the minimum weight over the
/// kernel of H minus the rowspace of G (and symmetrically for d_H).
pub fn css_distance_exact(pair: &CssPair) -> Result<CssDistances, CssError> {
    if pair.k() == 0 {
        return Err(CssError::NoLogicals);
    }
    let d_g = one_sided_exact(pair)?;
    let d_h = one_sided_exact(&pair.swapped())?;
    Ok(CssDistances { d_g, d_h })
}

fn one_sided_exact(pair: &CssPair) -> Result<usize, CssError> {
    let total_rank = pair.rank_g() + pair.k();
    if total_rank > MAX_EXHAUSTIVE_RANK {
        return Err(CssError::InfeasibleSize {
            rank: total_rank,
            max: MAX_EXHAUSTIVE_RANK,
        });
    }
    let basis = pair.homology_basis();
    let k = pair.k();
    let mut class_rep = BitVec::zeros(pair.n());
    let mut best = usize::MAX;
    // Gray walk over the 2^k - 1 nontrivial classes; each class rep gets an
    // exhaustive coset minimization against rowspace(G).
    for i in 1u64..(1u64 << k) {
        let j = i.trailing_zeros() as usize;
        class_rep.xor_assign(basis.row(j));
        best = best.min(defect_distance(&class_rep, pair.g())?);
    }
    Ok(best)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DistanceEstimate {
    /// Verified upper bound on d_G.
    pub weight: usize,
    /// A codeword achieving it (in the kernel of H, outside rowspace(G)).
    pub codeword: BitVec,
    /// Trials actually executed (early stop once the running minimum has
    /// been stable for half the budget).
    pub trials_run: usize,
    /// Trial index of the last improvement.
    pub improved_at: usize,
}

/// Randomized information-set search for low-weight codewords: each trial
/// draws a column permutation, row-reduces a generator of ker H along that
/// order, and harvests the resulting rows (plus row pairs for small
/// generators) as codeword candidates. Every improvement is re-verified
/// against both H and rowspace(G). The running minimum is non-increasing in
/// the trial index for a fixed seed, and independent of worker count.
pub fn css_distance_upper(
    pair: &CssPair,
    trials: usize,
    seed: u64,
) -> Result<Option<DistanceEstimate>, CssError> {
    if pair.k() == 0 {
        return Ok(None);
    }
    let n = pair.n();
    let gen = pair.h().nullspace_basis();
    let dim = gen.n_rows();
    let (g_rref, g_pivots) = pair.g().rref();

    let is_logical = |c: &BitVec| -> bool {
        !reduce_by_rref(c, &g_rref, &g_pivots).is_zero()
            && pair.h().mul_vec(c).expect("width n").is_zero()
    };

    let run_trial = |t: usize| -> Option<(usize, BitVec)> {
        let mut rng = SplitMix64::new(split_seed(seed, t as u64));
        let mut perm: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut perm);
        let mut rows: Vec<BitVec> = gen.rows().to_vec();
        let mut next = 0usize;
        for &col in &perm {
            let Some(p) = (next..rows.len()).find(|&i| rows[i].get(col)) else {
                continue;
            };
            rows.swap(next, p);
            let pivot = rows[next].clone();
            for (i, row) in rows.iter_mut().enumerate() {
                if i != next && row.get(col) {
                    row.xor_assign(&pivot);
                }
            }
            next += 1;
            if next == rows.len() {
                break;
            }
        }
        let mut best: Option<(usize, BitVec)> = None;
        let mut consider = |c: &BitVec| {
            let w = c.weight();
            if w > 0 && best.as_ref().map_or(true, |(bw, _)| w < *bw) && is_logical(c) {
                best = Some((w, c.clone()));
            }
        };
        for row in &rows {
            consider(row);
        }
        if dim <= 64 {
            for i in 0..rows.len() {
                for j in (i + 1)..rows.len() {
                    consider(&rows[i].xor(&rows[j]));
                }
            }
        }
        best
    };

    let chunk = 64usize;
    let mut best: Option<(usize, BitVec)> = None;
    let mut improved_at = 0usize;
    let mut done = 0usize;
    while done < trials {
        let upto = (done + chunk).min(trials);
        let found: Vec<(usize, Option<(usize, BitVec)>)> = (done..upto)
            .into_par_iter()
            .map(|t| (t, run_trial(t)))
            .collect();
        for (t, cand) in found {
            if let Some((w, c)) = cand {
                if best.as_ref().map_or(true, |(bw, _)| w < *bw) {
                    best = Some((w, c));
                    improved_at = t;
                }
            }
        }
        done = upto;
        if best.is_some() && done >= 2 * improved_at.max(1) && done - improved_at > trials / 2 {
            break;
        }
    }

    Ok(best.map(|(weight, codeword)| DistanceEstimate {
        weight,
        codeword,
        trials_run: done,
        improved_at,
    }))
}

/// Header written alongside the two matrix files of a stored pair.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CssHeader {
    pub n: usize,
    pub rank_g: usize,
    pub rank_h: usize,
    pub k: usize,
    pub rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance_estimate: Option<usize>,
    #[serde(default)]
    pub note: String,
}

impl CssPair {
    pub fn header(&self, distance_estimate: Option<usize>, note: &str) -> CssHeader {
        CssHeader {
            n: self.n(),
            rank_g: self.rank_g,
            rank_h: self.rank_h,
            k: self.k,
            rate: self.rate(),
            distance_estimate,
            note: note.to_string(),
        }
    }
}
