//! Toolkit for few-body Ising models in coupling-matrix form: exact
//! enumeration at small scale, cluster and single-flip Monte Carlo at large
//! scale, CSS-code homology, hyperbolic quotient lattices, and the duality
//! and analyticity bounds that tie them together.

pub mod analysis;
pub mod bounds;
pub mod css;
pub mod exact;
pub mod gf2;
pub mod mc;
pub mod model;
pub mod rng;
pub mod tiling;

pub use css::CssPair;
pub use gf2::{BinMatrix, BitVec};
pub use model::{DisorderEnsemble, IsingModel, SpinConfig};
pub use rng::SplitMix64;
pub use tiling::{GroupPresentation, Tiling};
