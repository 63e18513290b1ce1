//! Exact solution of small coupling-matrix Ising models by Gray-code
//! enumeration.
//!
//! One pass over the 2^r spin assignments bins every state by its number of
//! unsatisfied bonds w and its number of down spins u (plus up to eight
//! tracked parity observables). The bin counts are independent of (K, h), so
//! a single enumeration answers partition-function and average queries on an
//! entire coupling grid. All evaluation is log-domain with max subtraction.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{kw_dual, BoundsError, LN2};
use crate::css::{defect_distance, CssError, CssPair};
use crate::gf2::{BinMatrix, BitVec, Gf2Error};
use crate::model::{DisorderEnsemble, IsingModel, ModelError};

/// Default ceiling on enumerable spin counts (2^24 states).
pub const DEFAULT_ENUM_CAP: u32 = 24;
/// Hard ceiling: above this the histogram itself stops being sensible.
const HARD_CAP: u32 = 30;

#[derive(Debug, Error)]
pub enum ExactError {
    #[error("{spins} spins exceed the enumeration cap of {cap}")]
    CapExceeded { spins: usize, cap: u32 },
    #[error("at most 8 observables per enumeration, got {0}")]
    TooManyObservables(usize),
    #[error("vector length {got}, expected {expected}")]
    Length { expected: usize, got: usize },
    #[error("operation requires a clean model (disorder must be zero)")]
    DisorderRequiredZero,
    #[error("operation requires zero field")]
    FieldRequiredZero,
    #[error("operation requires K > 0, got {0}")]
    CouplingNotPositive(f64),
    #[error("model is not two-body: column {column} has weight {weight}")]
    NotTwoBody { column: usize, weight: usize },
    #[error("defect is gauge-trivial (distance 0)")]
    TrivialDefect,
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Css(#[from] CssError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error(transparent)]
    Gf2(#[from] Gf2Error),
}

/// A parity observable tracked during enumeration.
#[derive(Clone, Debug)]
pub enum Observable {
    /// Product of spins over a vertex subset.
    SpinSet(BitVec),
    /// Product of bond values over a bond subset (disorder signs excluded).
    BondSet(BitVec),
}

/// State counts binned by (unsatisfied bonds, down spins, observable bits).
#[derive(Clone, Debug)]
pub struct StateHistogram {
    n_bonds: usize,
    n_spins: usize,
    n_obs: usize,
    counts: Vec<u64>,
}

impl StateHistogram {
    #[inline]
    fn index(&self, w: usize, u: usize, bits: u8) -> usize {
        ((w * (self.n_spins + 1) + u) << self.n_obs) | bits as usize
    }

    fn decode(&self, idx: usize) -> (usize, usize, u8) {
        let bits = (idx & ((1 << self.n_obs) - 1)) as u8;
        let wu = idx >> self.n_obs;
        (wu / (self.n_spins + 1), wu % (self.n_spins + 1), bits)
    }

    /// ln Z at coupling `k` and field `h`, plus the signed mean of each
    /// tracked observable.
    pub fn evaluate(&self, k: f64, h: f64) -> Result<Evaluation, ExactError> {
        let n = self.n_bonds as f64;
        let r = self.n_spins as f64;
        let mut max_expo = f64::NEG_INFINITY;
        for (idx, &c) in self.counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let (w, u, _) = self.decode(idx);
            let expo = k * (n - 2.0 * w as f64) + h * (r - 2.0 * u as f64);
            max_expo = max_expo.max(expo);
        }
        if !max_expo.is_finite() {
            return Err(ExactError::Numerical("empty histogram".into()));
        }
        let mut den = 0.0f64;
        let mut num = vec![0.0f64; self.n_obs];
        let mut mean_w = 0.0f64;
        for (idx, &c) in self.counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let (w, u, bits) = self.decode(idx);
            let expo = k * (n - 2.0 * w as f64) + h * (r - 2.0 * u as f64);
            let weight = c as f64 * (expo - max_expo).exp();
            den += weight;
            mean_w += w as f64 * weight;
            for (oi, acc) in num.iter_mut().enumerate() {
                if (bits >> oi) & 1 == 1 {
                    *acc -= weight;
                } else {
                    *acc += weight;
                }
            }
        }
        let ln_z = max_expo + den.ln();
        let envelope = r * LN2 + k.abs() * n + h.abs() * r;
        if !ln_z.is_finite() || ln_z > envelope + 1e-9 || ln_z < r * LN2 - k.abs() * n - h.abs() * r - 1e-9 {
            return Err(ExactError::Numerical(format!(
                "ln Z = {ln_z} escapes its envelope"
            )));
        }
        Ok(Evaluation {
            ln_z,
            observable_means: num.iter().map(|&x| x / den).collect(),
            mean_unsat: mean_w / den,
        })
    }

    pub fn ln_z(&self, k: f64, h: f64) -> Result<f64, ExactError> {
        Ok(self.evaluate(k, h)?.ln_z)
    }

    /// Thermal moments of the bond energy E = -(n - 2w) and the absolute
    /// magnetization M = |r - 2u|.
    pub fn thermo_moments(&self, k: f64, h: f64) -> Result<ThermoMoments, ExactError> {
        let n = self.n_bonds as f64;
        let r = self.n_spins as f64;
        let mut max_expo = f64::NEG_INFINITY;
        for (idx, &c) in self.counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let (w, u, _) = self.decode(idx);
            max_expo = max_expo.max(k * (n - 2.0 * w as f64) + h * (r - 2.0 * u as f64));
        }
        let (mut den, mut e1, mut e2, mut m1, mut m2, mut m4) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for (idx, &c) in self.counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let (w, u, _) = self.decode(idx);
            let expo = k * (n - 2.0 * w as f64) + h * (r - 2.0 * u as f64);
            let weight = c as f64 * (expo - max_expo).exp();
            let e = -(n - 2.0 * w as f64);
            let m = (r - 2.0 * u as f64).abs();
            den += weight;
            e1 += e * weight;
            e2 += e * e * weight;
            m1 += m * weight;
            m2 += m * m * weight;
            m4 += m * m * m * m * weight;
        }
        Ok(ThermoMoments {
            e1: e1 / den,
            e2: e2 / den,
            m1: m1 / den,
            m2: m2 / den,
            m4: m4 / den,
        })
    }

    /// Raw moments of X = j*(n - 2w) + h'*(r - 2u) under the uniform spin
    /// measure, orders 1..=s_max.
    pub fn uniform_moments(&self, j: f64, h_prime: f64, s_max: usize) -> Vec<f64> {
        let n = self.n_bonds as f64;
        let r = self.n_spins as f64;
        let total = 2f64.powi(self.n_spins as i32);
        let mut mu = vec![0.0f64; s_max];
        for (idx, &c) in self.counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let (w, u, _) = self.decode(idx);
            let x = j * (n - 2.0 * w as f64) + h_prime * (r - 2.0 * u as f64);
            let mut pow = 1.0;
            for m in mu.iter_mut() {
                pow *= x;
                *m += c as f64 * pow;
            }
        }
        for m in mu.iter_mut() {
            *m /= total;
        }
        mu
    }
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub ln_z: f64,
    pub observable_means: Vec<f64>,
    /// Thermal mean of the unsatisfied-bond count; d lnZ / dK = n - 2<w>.
    pub mean_unsat: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct ThermoMoments {
    pub e1: f64,
    pub e2: f64,
    pub m1: f64,
    pub m2: f64,
    pub m4: f64,
}

/// Gray-code enumeration of all spin states of `theta` with disorder `e`.
pub fn enumerate(
    theta: &BinMatrix,
    disorder: &BitVec,
    observables: &[Observable],
    cap: u32,
) -> Result<StateHistogram, ExactError> {
    let r = theta.n_rows();
    let n = theta.n_cols();
    if disorder.len() != n {
        return Err(ExactError::Length {
            expected: n,
            got: disorder.len(),
        });
    }
    let cap = cap.min(HARD_CAP);
    if r as u32 > cap {
        return Err(ExactError::CapExceeded { spins: r, cap });
    }
    if observables.len() > 8 {
        return Err(ExactError::TooManyObservables(observables.len()));
    }
    let n_obs = observables.len();
    let mut flips = vec![0u8; r];
    for (oi, obs) in observables.iter().enumerate() {
        match obs {
            Observable::SpinSet(set) => {
                if set.len() != r {
                    return Err(ExactError::Length {
                        expected: r,
                        got: set.len(),
                    });
                }
                for v in set.iter_ones() {
                    flips[v] |= 1 << oi;
                }
            }
            Observable::BondSet(mask) => {
                if mask.len() != n {
                    return Err(ExactError::Length {
                        expected: n,
                        got: mask.len(),
                    });
                }
                for (v, flip) in flips.iter_mut().enumerate() {
                    if theta.row(v).dot(mask) {
                        *flip |= 1 << oi;
                    }
                }
            }
        }
    }

    let mut hist = StateHistogram {
        n_bonds: n,
        n_spins: r,
        n_obs,
        counts: vec![0u64; ((n + 1) * (r + 1)) << n_obs],
    };
    let mut d = disorder.clone();
    let mut down = vec![false; r];
    let mut u = 0usize;
    let mut bits = 0u8;
    let idx0 = hist.index(d.weight(), u, bits);
    hist.counts[idx0] += 1;
    let total: u64 = 1u64 << r;
    for i in 1..total {
        let v = i.trailing_zeros() as usize;
        d.xor_assign(theta.row(v));
        down[v] = !down[v];
        if down[v] {
            u += 1;
        } else {
            u -= 1;
        }
        bits ^= flips[v];
        let idx = hist.index(d.weight(), u, bits);
        hist.counts[idx] += 1;
    }
    Ok(hist)
}

pub fn enumerate_model(
    model: &IsingModel,
    observables: &[Observable],
    cap: u32,
) -> Result<StateHistogram, ExactError> {
    enumerate(&model.theta, &model.disorder, observables, cap)
}

/// ln Z of the model at its own (K, h).
pub fn ln_partition(model: &IsingModel, cap: u32) -> Result<f64, ExactError> {
    enumerate_model(model, &[], cap)?.ln_z(model.coupling, model.field)
}

/// Free energy density f = -ln Z / n.
pub fn free_energy_density(model: &IsingModel, cap: u32) -> Result<f64, ExactError> {
    Ok(-ln_partition(model, cap)? / model.n_bonds() as f64)
}

fn ln_z_theta(theta: &BinMatrix, e: &BitVec, k: f64, h: f64, cap: u32) -> Result<f64, ExactError> {
    enumerate(theta, e, &[], cap)?.ln_z(k, h)
}

/// Thermal average of the spin product over `subset`.
pub fn spin_average(model: &IsingModel, subset: &BitVec, cap: u32) -> Result<f64, ExactError> {
    let hist = enumerate_model(model, &[Observable::SpinSet(subset.clone())], cap)?;
    Ok(hist.evaluate(model.coupling, model.field)?.observable_means[0])
}

/// Thermal average of the product of bond values over `mask`.
pub fn bond_set_average(model: &IsingModel, mask: &BitVec, cap: u32) -> Result<f64, ExactError> {
    let hist = enumerate_model(model, &[Observable::BondSet(mask.clone())], cap)?;
    Ok(hist.evaluate(model.coupling, model.field)?.observable_means[0])
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DualityResidual {
    pub lhs_ln_z: f64,
    pub rhs_ln_z: f64,
    pub residual: f64,
    pub dual_coupling: f64,
}

/// Checks the coupling-matrix duality
/// ln Z(Theta; K) = ln Z(Theta*; K*) + (r - n_g*) ln 2 + (n/2) ln(sinh K cosh K)
/// with Theta* the dual matrix and tanh K* = exp(-2K). Requires a clean
/// model at zero field with K > 0.
pub fn verify_duality(model: &IsingModel, cap: u32) -> Result<DualityResidual, ExactError> {
    if !model.disorder.is_zero() {
        return Err(ExactError::DisorderRequiredZero);
    }
    if model.field != 0.0 {
        return Err(ExactError::FieldRequiredZero);
    }
    let k = model.coupling;
    if k <= 0.0 {
        return Err(ExactError::CouplingNotPositive(k));
    }
    let theta = &model.theta;
    let n = theta.n_cols();
    let r = theta.n_rows();
    let dual = theta.dual_matrix();
    let k_dual = kw_dual(k)?;
    let lhs = ln_z_theta(theta, &model.disorder, k, 0.0, cap)?;
    let zero = BitVec::zeros(n);
    let ln_z_dual = ln_z_theta(&dual, &zero, k_dual, 0.0, cap)?;
    let gauge_excess = dual.n_rows() - dual.rank();
    let rhs = ln_z_dual + (r as f64 - gauge_excess as f64) * LN2
        + 0.5 * n as f64 * (k.sinh() * k.cosh()).ln();
    Ok(DualityResidual {
        lhs_ln_z: lhs,
        rhs_ln_z: rhs,
        residual: (lhs - rhs).abs(),
        dual_coupling: k_dual,
    })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EmDualityResidual {
    pub z_ratio: f64,
    pub dual_average: f64,
    pub residual: f64,
}

/// Checks the order-disorder relation Z_e / Z_0 = <prod_{e_b=1} R_b> taken
/// in the clean dual model at the dual coupling. Requires zero field.
pub fn verify_em_duality(model: &IsingModel, cap: u32) -> Result<EmDualityResidual, ExactError> {
    if model.field != 0.0 {
        return Err(ExactError::FieldRequiredZero);
    }
    let k = model.coupling;
    if k <= 0.0 {
        return Err(ExactError::CouplingNotPositive(k));
    }
    let theta = &model.theta;
    let zero = BitVec::zeros(theta.n_cols());
    let ln_z_e = ln_z_theta(theta, &model.disorder, k, 0.0, cap)?;
    let ln_z_0 = ln_z_theta(theta, &zero, k, 0.0, cap)?;
    let dual = theta.dual_matrix();
    let dual_model = IsingModel::new(dual, kw_dual(k)?, 0.0)?;
    let avg = bond_set_average(&dual_model, &model.disorder, cap)?;
    let ratio = (ln_z_e - ln_z_0).exp();
    Ok(EmDualityResidual {
        z_ratio: ratio,
        dual_average: avg,
        residual: (ratio - avg).abs(),
    })
}

/// Homological free-energy difference of a CSS pair at coupling `k` and
/// disorder `e`: (ln Z_e(H*) - ln Z_e(G)) / n with H* = rows(G) + homology
/// basis. Nonnegative, at most (k/n) ln 2 at e = 0.
pub fn homological_difference(
    pair: &CssPair,
    k: f64,
    e: &BitVec,
    cap: u32,
) -> Result<f64, ExactError> {
    let n = pair.n();
    if e.len() != n {
        return Err(ExactError::Length {
            expected: n,
            got: e.len(),
        });
    }
    let h_star = pair.h_star();
    let ln_g = ln_z_theta(pair.g(), e, k, 0.0, cap)?;
    let ln_hs = ln_z_theta(&h_star, e, k, 0.0, cap)?;
    Ok((ln_hs - ln_g) / n as f64)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DefectDelta {
    /// ln Z_e - ln Z_{e+c}.
    pub delta: f64,
    /// Coset distance of c against the coupling matrix.
    pub distance: usize,
    /// delta / distance when the distance is nonzero.
    pub tension: Option<f64>,
}

/// Free-energy cost of adding defect `c` on top of the model's own
/// disorder, with the per-bond tension when c is gauge-nontrivial.
pub fn defect_delta(model: &IsingModel, c: &BitVec, cap: u32) -> Result<DefectDelta, ExactError> {
    let theta = &model.theta;
    if c.len() != theta.n_cols() {
        return Err(ExactError::Length {
            expected: theta.n_cols(),
            got: c.len(),
        });
    }
    let k = model.coupling;
    let h = model.field;
    let ln_e = ln_z_theta(theta, &model.disorder, k, h, cap)?;
    let shifted = model.disorder.xor(c);
    let ln_ec = ln_z_theta(theta, &shifted, k, h, cap)?;
    let delta = ln_e - ln_ec;
    let distance = defect_distance(c, theta)?;
    let tension = if distance > 0 {
        Some(delta / distance as f64)
    } else {
        if delta.abs() > 1e-10 {
            return Err(ExactError::Numerical(format!(
                "gauge-trivial defect changed ln Z by {delta}"
            )));
        }
        None
    };
    Ok(DefectDelta {
        delta,
        distance,
        tension,
    })
}

/// Exact d(delta_e)/dK via the unsatisfied-bond averages:
/// d lnZ/dK = n - 2<w>, so the derivative is 2(<w>_{e+c} - <w>_e).
pub fn defect_delta_dk(model: &IsingModel, c: &BitVec, cap: u32) -> Result<f64, ExactError> {
    let theta = &model.theta;
    let k = model.coupling;
    let h = model.field;
    let w_e = enumerate(theta, &model.disorder, &[], cap)?
        .evaluate(k, h)?
        .mean_unsat;
    let shifted = model.disorder.xor(c);
    let w_ec = enumerate(theta, &shifted, &[], cap)?
        .evaluate(k, h)?
        .mean_unsat;
    Ok(2.0 * (w_ec - w_e))
}

/// Area-law exponent of a defect: -(1/d_e) ln <prod_{e_b=1} R_b> evaluated
/// in the clean dual of G at the dual coupling. Equals the defect tension
/// of the direct model by the order-disorder relation.
pub fn area_law_exponent(
    pair: &CssPair,
    e: &BitVec,
    k: f64,
    cap: u32,
) -> Result<f64, ExactError> {
    if k <= 0.0 {
        return Err(ExactError::CouplingNotPositive(k));
    }
    let d_e = defect_distance(e, pair.g())?;
    if d_e == 0 {
        return Err(ExactError::TrivialDefect);
    }
    let dual = pair.g().dual_matrix();
    let dual_model = IsingModel::new(dual, kw_dual(k)?, 0.0)?;
    let avg = bond_set_average(&dual_model, e, cap)?;
    if avg <= 0.0 {
        return Err(ExactError::Numerical(format!(
            "dual loop average {avg} is not positive"
        )));
    }
    Ok(-avg.ln() / d_e as f64)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TensionReport {
    /// Distance-weighted average tension over nontrivial classes.
    pub tau_bar: f64,
    /// Mean class distance over all 2^k classes, divided by n.
    pub zeta: f64,
    /// Disorder-averaged homological difference on the same samples.
    pub avg_delta_f: f64,
    /// Rate term (k/n) ln 2 appearing in the average-tension inequality.
    pub rate_ln2: f64,
    /// Coset distance of every class, class 0 first.
    pub class_distances: Vec<usize>,
    pub samples_used: usize,
}

/// Distance-weighted average tension, the mean class distance zeta, and the
/// matching disorder-averaged homological difference, all on the same
/// disorder samples so the inequality
/// zeta * tau_bar >= (k/n) ln2 - avg_delta_f holds sample by sample.
pub fn weighted_average_tension(
    pair: &CssPair,
    k: f64,
    ens: &DisorderEnsemble,
    cap: u32,
) -> Result<TensionReport, ExactError> {
    let kk = pair.k();
    if kk == 0 {
        return Err(ExactError::Css(CssError::NoLogicals));
    }
    let n = pair.n();
    let basis = pair.homology_basis();
    let n_classes = 1usize << kk;

    // Class representatives and distances by Gray walk.
    let mut reps = Vec::with_capacity(n_classes);
    let mut rep = BitVec::zeros(n);
    reps.push(rep.clone());
    let mut gray = 0u64;
    for i in 1..n_classes as u64 {
        let code = i ^ (i >> 1);
        let flip = (gray ^ code).trailing_zeros() as usize;
        gray = code;
        rep.xor_assign(basis.row(flip));
        reps.push(rep.clone());
    }
    let class_distances: Vec<usize> = reps
        .iter()
        .map(|c| defect_distance(c, pair.g()))
        .collect::<Result<_, _>>()?;
    let zeta =
        class_distances.iter().map(|&d| d as f64).sum::<f64>() / (n_classes as f64 * n as f64);

    let samples = if ens.p == 0.0 {
        vec![BitVec::zeros(n)]
    } else {
        ens.sample(n)
    };
    let h_star = pair.h_star();
    let weight_sum: f64 = class_distances[1..].iter().map(|&d| d as f64).sum();
    let mut tau_sums = vec![0.0f64; n_classes];
    let mut delta_f_sum = 0.0f64;
    for e in &samples {
        let ln_e = ln_z_theta(pair.g(), e, k, 0.0, cap)?;
        let ln_hs = ln_z_theta(&h_star, e, k, 0.0, cap)?;
        delta_f_sum += (ln_hs - ln_e) / n as f64;
        for (ci, c) in reps.iter().enumerate().skip(1) {
            let ln_ec = ln_z_theta(pair.g(), &e.xor(c), k, 0.0, cap)?;
            tau_sums[ci] += (ln_e - ln_ec) / class_distances[ci] as f64;
        }
    }
    let m = samples.len() as f64;
    let tau_bar = class_distances[1..]
        .iter()
        .zip(&tau_sums[1..])
        .map(|(&d, &s)| d as f64 * s / m)
        .sum::<f64>()
        / weight_sum;
    Ok(TensionReport {
        tau_bar,
        zeta,
        avg_delta_f: delta_f_sum / m,
        rate_ln2: pair.rate() * LN2,
        class_distances,
        samples_used: samples.len(),
    })
}

/// Cumulants kappa_1..kappa_{s_max} of X = J sum_b (-1)^{e_b} R_b
/// + h' sum_v S_v under the uniform spin measure, with (J, h') read from
/// the model's (coupling, field) at unit inverse temperature. Computed from
/// exact raw moments via the moment-cumulant recursion.
pub fn energy_cumulants(
    model: &IsingModel,
    s_max: usize,
    cap: u32,
) -> Result<Vec<f64>, ExactError> {
    assert!((1..=8).contains(&s_max), "cumulant order must be 1..=8");
    let hist = enumerate_model(model, &[], cap)?;
    let mu = hist.uniform_moments(model.coupling, model.field, s_max);
    let mut kappa = vec![0.0f64; s_max];
    for s in 1..=s_max {
        let mut acc = mu[s - 1];
        for j in 1..s {
            acc -= binomial(s - 1, j - 1) * kappa[j - 1] * mu[s - j - 1];
        }
        kappa[s - 1] = acc;
    }
    Ok(kappa)
}

fn binomial(n: usize, k: usize) -> f64 {
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorrelationReport {
    /// Smallest decay rate -ln <S_i S_j> / dist(i,j) over connected pairs;
    /// infinite when every correlation is non-positive.
    pub min_rate: f64,
    pub pairs_scanned: usize,
    pub pairs_excluded: usize,
}

/// Two-body correlation decay: scans all connected spin pairs of a graph
/// model (every column weight exactly 2), excluding non-positive
/// correlations from the rate minimization.
pub fn correlation_exponent(model: &IsingModel, cap: u32) -> Result<CorrelationReport, ExactError> {
    let theta = &model.theta;
    let r = theta.n_rows();
    for b in 0..theta.n_cols() {
        let w = theta.col_weight(b);
        if w != 2 {
            return Err(ExactError::NotTwoBody {
                column: b,
                weight: w,
            });
        }
    }
    // Graph distances by BFS.
    let mut adj = vec![Vec::new(); r];
    for b in 0..theta.n_cols() {
        let ends: Vec<usize> = theta
            .rows()
            .iter()
            .enumerate()
            .filter(|(_, row)| row.get(b))
            .map(|(v, _)| v)
            .collect();
        adj[ends[0]].push(ends[1]);
        adj[ends[1]].push(ends[0]);
    }
    let mut pairs: Vec<(usize, usize, usize)> = Vec::new();
    for s in 0..r {
        let mut dist = vec![usize::MAX; r];
        dist[s] = 0;
        let mut queue = std::collections::VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        for t in (s + 1)..r {
            if dist[t] != usize::MAX {
                pairs.push((s, t, dist[t]));
            }
        }
    }

    let mut min_rate = f64::INFINITY;
    let mut excluded = 0usize;
    for chunk in pairs.chunks(8) {
        let obs: Vec<Observable> = chunk
            .iter()
            .map(|&(i, j, _)| {
                Observable::SpinSet(BitVec::from_indices(r, &[i, j]).expect("valid spins"))
            })
            .collect();
        let hist = enumerate_model(model, &obs, cap)?;
        let means = hist
            .evaluate(model.coupling, model.field)?
            .observable_means;
        for (&(_, _, d), &val) in chunk.iter().zip(&means) {
            if val <= 0.0 {
                excluded += 1;
            } else {
                min_rate = min_rate.min(-val.ln() / d as f64);
            }
        }
    }
    Ok(CorrelationReport {
        min_rate,
        pairs_scanned: pairs.len(),
        pairs_excluded: excluded,
    })
}

/// Disorder average of `quantity`: exhaustive (exact weights, zero stderr)
/// up to 16 bonds, sampled with the ensemble's streams otherwise. Returns
/// (mean, standard error).
pub fn disorder_average<F>(
    ens: &DisorderEnsemble,
    n_bonds: usize,
    mut quantity: F,
) -> Result<(f64, f64), ExactError>
where
    F: FnMut(&BitVec) -> Result<f64, ExactError>,
{
    if n_bonds <= 16 {
        if ens.p == 0.0 {
            return Ok((quantity(&BitVec::zeros(n_bonds))?, 0.0));
        }
        let mut mean = 0.0f64;
        for mask in 0u64..(1u64 << n_bonds) {
            let mut e = BitVec::zeros(n_bonds);
            let mut m = mask;
            while m != 0 {
                e.set(m.trailing_zeros() as usize, true);
                m &= m - 1;
            }
            let w = e.weight() as i32;
            let prob = ens.p.powi(w) * (1.0 - ens.p).powi(n_bonds as i32 - w);
            if prob > 0.0 {
                mean += prob * quantity(&e)?;
            }
        }
        return Ok((mean, 0.0));
    }
    let samples = ens.sample(n_bonds);
    let mut values = Vec::with_capacity(samples.len());
    for e in &samples {
        values.push(quantity(e)?);
    }
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
    Ok((mean, (var / m).sqrt()))
}

/// Full exact solution snapshot for reporting.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExactReport {
    pub n_spins: usize,
    pub n_bonds: usize,
    pub coupling: f64,
    pub field: f64,
    pub disorder_weight: usize,
    pub ln_z: f64,
    /// Free energy density -ln Z / n.
    pub f: f64,
    pub averages: BTreeMap<String, f64>,
}

pub fn report(model: &IsingModel, cap: u32) -> Result<ExactReport, ExactError> {
    let hist = enumerate_model(model, &[], cap)?;
    let eval = hist.evaluate(model.coupling, model.field)?;
    let moments = hist.thermo_moments(model.coupling, model.field)?;
    let n = model.n_bonds() as f64;
    let r = model.n_spins() as f64;
    let mut averages = BTreeMap::new();
    averages.insert("energy_per_bond".into(), moments.e1 / n);
    averages.insert("magnetization_per_spin".into(), moments.m1 / r);
    averages.insert("mean_unsatisfied_bonds".into(), eval.mean_unsat);
    Ok(ExactReport {
        n_spins: model.n_spins(),
        n_bonds: model.n_bonds(),
        coupling: model.coupling,
        field: model.field,
        disorder_weight: model.disorder.weight(),
        ln_z: eval.ln_z,
        f: -eval.ln_z / n,
        averages,
    })
}
