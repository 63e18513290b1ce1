//! Ising models in coupling-matrix form.
//!
//! A model is a binary coupling matrix Theta (spins x bonds), a dimensionless
//! coupling K = beta*J, a dimensionless field h = beta*h', and a disorder
//! vector e over bonds (e_b = 1 flips the sign of bond b).  Bond b takes the
//! value R_b = prod_v S_v^{Theta_vb}, and a spin assignment S has statistical
//! weight prod_b exp(K (-1)^{e_b} R_b) * prod_v exp(h S_v).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gf2::{BinMatrix, BitVec, Gf2Error};
use crate::rng::{split_seed, SplitMix64};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("bond index {index} out of range ({n_bonds} bonds)")]
    BondRange { index: usize, n_bonds: usize },
    #[error("spin config has {got} spins, model has {expected}")]
    SpinCount { expected: usize, got: usize },
    #[error("disorder vector has {got} bits, model has {expected} bonds")]
    DisorderLength { expected: usize, got: usize },
    #[error("gauge vector has {got} bits, model has {expected} spins")]
    GaugeLength { expected: usize, got: usize },
    #[error("coupling and field must be finite, got K={k} h={h}")]
    NonFinite { k: f64, h: f64 },
    #[error(transparent)]
    Gf2(#[from] Gf2Error),
}

/// Spin assignment, one of +1/-1 per spin.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpinConfig(pub Vec<i8>);

impl SpinConfig {
    pub fn all_up(n: usize) -> Self {
        SpinConfig(vec![1; n])
    }

    pub fn random(n: usize, rng: &mut SplitMix64) -> Self {
        SpinConfig((0..n).map(|_| if rng.next_u64() & 1 == 1 { 1 } else { -1 }).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Bernoulli disorder ensemble: each bond flipped independently with
/// probability `p`; sample `i` uses the derived seed stream `i`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DisorderEnsemble {
    pub p: f64,
    pub seed: u64,
    pub samples: usize,
}

impl DisorderEnsemble {
    pub fn new(p: f64, seed: u64, samples: usize) -> Self {
        assert!((0.0..=1.0).contains(&p), "flip probability must be in [0,1]");
        DisorderEnsemble { p, seed, samples }
    }

    /// Draws the full set of disorder vectors over `n_bonds` bonds.
    pub fn sample(&self, n_bonds: usize) -> Vec<BitVec> {
        (0..self.samples)
            .map(|i| {
                let mut rng = SplitMix64::new(split_seed(self.seed, i as u64));
                BitVec::random(n_bonds, self.p, &mut rng)
            })
            .collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IsingModel {
    pub theta: BinMatrix,
    /// Dimensionless coupling K = beta*J.
    pub coupling: f64,
    /// Dimensionless field h = beta*h'.
    pub field: f64,
    /// Disorder vector over bonds; all-zero means the clean model.
    pub disorder: BitVec,
}

/// The two energy pieces, kept separate because duality statements act on
/// the bond part only. Both are integers for +-1 spins.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyTerms {
    /// -sum_b (-1)^{e_b} R_b
    pub bonds: i64,
    /// -sum_v S_v (multiplied by h' only at use sites)
    pub field: i64,
}

impl IsingModel {
    pub fn new(theta: BinMatrix, coupling: f64, field: f64) -> Result<Self, ModelError> {
        if !coupling.is_finite() || !field.is_finite() {
            return Err(ModelError::NonFinite {
                k: coupling,
                h: field,
            });
        }
        let n = theta.n_cols();
        Ok(IsingModel {
            theta,
            coupling,
            field,
            disorder: BitVec::zeros(n),
        })
    }

    pub fn with_disorder(mut self, e: BitVec) -> Result<Self, ModelError> {
        if e.len() != self.theta.n_cols() {
            return Err(ModelError::DisorderLength {
                expected: self.theta.n_cols(),
                got: e.len(),
            });
        }
        self.disorder = e;
        Ok(self)
    }

    pub fn n_spins(&self) -> usize {
        self.theta.n_rows()
    }

    pub fn n_bonds(&self) -> usize {
        self.theta.n_cols()
    }

    /// (l, m) = (max bonds per spin is m; max spins per bond is l):
    /// l = max column weight, m = max row weight.
    pub fn sparsity(&self) -> (usize, usize) {
        self.theta.max_weights()
    }

    /// R_b for the given spin assignment.
    pub fn bond_value(&self, s: &SpinConfig, b: usize) -> Result<i8, ModelError> {
        if b >= self.n_bonds() {
            return Err(ModelError::BondRange {
                index: b,
                n_bonds: self.n_bonds(),
            });
        }
        if s.len() != self.n_spins() {
            return Err(ModelError::SpinCount {
                expected: self.n_spins(),
                got: s.len(),
            });
        }
        let mut prod: i8 = 1;
        for (v, &sv) in s.0.iter().enumerate() {
            if self.theta.get(v, b) {
                prod *= sv;
            }
        }
        Ok(prod)
    }

    /// Bond and field energy terms for a spin assignment.
    pub fn energy(&self, s: &SpinConfig) -> Result<EnergyTerms, ModelError> {
        if s.len() != self.n_spins() {
            return Err(ModelError::SpinCount {
                expected: self.n_spins(),
                got: s.len(),
            });
        }
        let mut bonds: i64 = 0;
        for b in 0..self.n_bonds() {
            let r = self.bond_value(s, b)? as i64;
            let sign = if self.disorder.get(b) { -1 } else { 1 };
            bonds -= sign * r;
        }
        let field: i64 = -s.0.iter().map(|&x| x as i64).sum::<i64>();
        Ok(EnergyTerms { bonds, field })
    }

    /// Frustration pattern e H^T of the disorder against a check matrix.
    pub fn frustration(&self, h: &BinMatrix) -> Result<BitVec, ModelError> {
        Ok(h.mul_vec(&self.disorder)?)
    }

    /// Gauge transform e -> e + alpha Theta (alpha over spins). Leaves every
    /// frustration pattern of an orthogonal check matrix, and the partition
    /// function at h = 0, unchanged.
    pub fn gauge_transform(&self, alpha: &BitVec) -> Result<IsingModel, ModelError> {
        if alpha.len() != self.n_spins() {
            return Err(ModelError::GaugeLength {
                expected: self.n_spins(),
                got: alpha.len(),
            });
        }
        let shift = self.theta.vec_mul(alpha)?;
        let mut out = self.clone();
        out.disorder.xor_assign(&shift);
        Ok(out)
    }
}

/// Sidecar describing the scalar part of a model on disk; the coupling
/// matrix itself lives in a separate matrix text file.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelSidecar {
    pub coupling: f64,
    #[serde(default)]
    pub field: f64,
    /// Explicit disorder support (sorted bond indices), if given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disorder_bonds: Option<Vec<usize>>,
    /// Bernoulli disorder parameters, if the disorder is to be drawn.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disorder_p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ModelSidecar {
    /// Combines the sidecar with its coupling matrix. Explicit disorder wins
    /// over (p, seed); with neither the model is clean.
    pub fn into_model(self, theta: BinMatrix) -> Result<IsingModel, ModelError> {
        let n = theta.n_cols();
        let model = IsingModel::new(theta, self.coupling, self.field)?;
        if let Some(bonds) = self.disorder_bonds {
            let e = BitVec::from_indices(n, &bonds)?;
            return model.with_disorder(e);
        }
        if let Some(p) = self.disorder_p {
            let ens = DisorderEnsemble::new(p, self.seed.unwrap_or(0), 1);
            let e = ens.sample(n).pop().expect("one sample requested");
            return model.with_disorder(e);
        }
        Ok(model)
    }
}
