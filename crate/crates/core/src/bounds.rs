//! Closed-form inequalities: the Kramers-Wannier dual coupling, the
//! defect-freezing region and the disorder-averaged homological-difference
//! bound it guarantees, high-temperature-series analyticity radii, cumulant
//! coefficient bounds, and the critical-coupling gap for {f,d} tilings.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const LN2: f64 = std::f64::consts::LN_2;

#[derive(Debug, Error, PartialEq)]
pub enum BoundsError {
    #[error("coupling must be positive and finite, got {0}")]
    BadCoupling(f64),
    #[error("flip probability must be in [0,1], got {0}")]
    BadProbability(f64),
    #[error("(m, p, K) = ({m}, {p}, {k}) lies outside the freezing region")]
    OutsideRegion { m: usize, p: f64, k: f64 },
    #[error("{{f,d}} = {{{f},{d}}} has no positive rate: need fd/(f+d) >= 2")]
    NotHyperbolic { f: usize, d: usize },
    #[error("sparsity parameters must satisfy l >= 1, m >= 1, got ({l}, {m})")]
    BadSparsity { l: usize, m: usize },
    #[error("cumulant order must be >= 1, got {0}")]
    BadOrder(u32),
}

/// Kramers-Wannier dual coupling: tanh K* = exp(-2K), i.e.
/// K* = ln(coth K) / 2. Strictly decreasing involution on K > 0.
pub fn kw_dual(k: f64) -> Result<f64, BoundsError> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(BoundsError::BadCoupling(k));
    }
    Ok(0.5 * (1.0 / k.tanh()).ln())
}

/// Fixed point of `kw_dual`: ln(1 + sqrt 2)/2.
pub fn self_dual_coupling() -> f64 {
    0.5 * (1.0 + std::f64::consts::SQRT_2).ln()
}

/// Temperature of the self-dual point at J = 1: 2 / ln(1 + sqrt 2).
pub fn self_dual_temperature() -> f64 {
    1.0 / self_dual_coupling()
}

/// The combination S = exp(-2K)(1-p) + exp(2K) p controlling defect
/// freezing for checks of weight at most m.
pub fn freezing_s(p: f64, k: f64) -> f64 {
    (-2.0 * k).exp() * (1.0 - p) + (2.0 * k).exp() * p
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RegionReport {
    pub m: usize,
    pub p: f64,
    pub k: f64,
    /// (m-1) S; the region requires this to be < 1.
    pub contraction: f64,
    pub satisfied: bool,
    /// Coupling threshold at p = 0: K > ln(m-1)/2 (0 when m <= 2).
    pub clean_threshold: f64,
}

/// Membership in the low-temperature, low-disorder region where defect free
/// energies are exponentially close to their frozen values.
pub fn freezing_region(m: usize, p: f64, k: f64) -> Result<RegionReport, BoundsError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(BoundsError::BadProbability(p));
    }
    if !k.is_finite() || k <= 0.0 {
        return Err(BoundsError::BadCoupling(k));
    }
    let contraction = (m.saturating_sub(1)) as f64 * freezing_s(p, k);
    let clean_threshold = if m >= 3 {
        0.5 * ((m - 1) as f64).ln()
    } else {
        0.0
    };
    Ok(RegionReport {
        m,
        p,
        k,
        contraction,
        satisfied: contraction < 1.0,
        clean_threshold,
    })
}

/// Upper bound on the disorder-averaged homological difference inside the
/// freezing region: (m-1)^{d} S^{d+1} / (1 - (m-1) S), where d is the
/// distance of the code whose checks have weight <= m.
pub fn delta_f_disorder_bound(m: usize, p: f64, k: f64, d: usize) -> Result<f64, BoundsError> {
    let region = freezing_region(m, p, k)?;
    if !region.satisfied {
        return Err(BoundsError::OutsideRegion { m, p, k });
    }
    let s = freezing_s(p, k);
    let mm = (m.saturating_sub(1)) as f64;
    Ok(mm.powi(d as i32) * s.powi(d as i32 + 1) / (1.0 - mm * s))
}

/// Radius of guaranteed analyticity of the high-temperature series in beta
/// for (l, m)-sparse bond interactions at zero field: 1/(2e[(l-1)m + 1]).
pub fn hts_radius(l: usize, m: usize) -> Result<f64, BoundsError> {
    if l < 1 || m < 1 {
        return Err(BoundsError::BadSparsity { l, m });
    }
    let delta = ((l - 1) * m) as f64;
    Ok(1.0 / (2.0 * std::f64::consts::E * (delta + 1.0)))
}

/// Which interaction terms are present, fixing the dependency-graph degree
/// and term density of the cumulant bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CumulantCase {
    /// Bond and field terms both present; `spin_density` is r/n.
    WithField { spin_density: f64 },
    /// Bond terms only (h' = 0).
    ZeroField,
}

/// Per-bond bound on the s-th cumulant coefficient of the energy under the
/// uniform spin measure: |kappa_s| / n <= 2^{s-1} s^{s-2} C (Delta+1)^{s-1} A^s,
/// with (Delta, C, A) fixed by the case.
pub fn cumulant_coeff_bound(
    s: u32,
    l: usize,
    m: usize,
    j: f64,
    h_prime: f64,
    case: CumulantCase,
) -> Result<f64, BoundsError> {
    if s < 1 {
        return Err(BoundsError::BadOrder(s));
    }
    if l < 1 || m < 1 {
        return Err(BoundsError::BadSparsity { l, m });
    }
    let (delta, density, amplitude) = match case {
        CumulantCase::WithField { spin_density } => (
            (l * m) as f64,
            spin_density + 1.0,
            j.abs().max(h_prime.abs()),
        ),
        CumulantCase::ZeroField => (((l - 1) * m) as f64, 1.0, j.abs()),
    };
    let s_f = s as f64;
    Ok(2f64.powi(s as i32 - 1)
        * s_f.powf(s_f - 2.0)
        * density
        * (delta + 1.0).powi(s as i32 - 1)
        * amplitude.powi(s as i32))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TilingTcBound {
    pub f: usize,
    pub d: usize,
    /// Rate bound R = 1 - 2/f - 2/d of the associated code family.
    pub rate: f64,
    /// Guaranteed gap: K_c(free) - K_c(wired) >= rate * ln 2.
    pub coupling_gap: f64,
    /// For self-dual tilings (f = d): wired-boundary coupling bound K0
    /// solving tanh(K + R ln 2) = exp(-2K), and the matching temperature
    /// bound T_c(wired) >= 1/K0 at J = 1.
    pub k_wired: Option<f64>,
    pub t_wired: Option<f64>,
}

/// Critical-coupling gap for the {f,d} tiling family. For f = d the gap
/// pins a concrete bisection-solved temperature bound.
pub fn tiling_tc_bound(f: usize, d: usize) -> Result<TilingTcBound, BoundsError> {
    if f < 3 || d < 3 {
        return Err(BoundsError::NotHyperbolic { f, d });
    }
    let rate = 1.0 - 2.0 / f as f64 - 2.0 / d as f64;
    if rate < 0.0 {
        return Err(BoundsError::NotHyperbolic { f, d });
    }
    let (k_wired, t_wired) = if f == d {
        let shift = rate * LN2;
        let g = |k: f64| (k + shift).tanh() - (-2.0 * k).exp();
        let mut lo = 1e-6;
        let mut hi = 5.0;
        debug_assert!(g(lo) < 0.0 && g(hi) > 0.0);
        while hi - lo > 1e-10 {
            let mid = 0.5 * (lo + hi);
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let k0 = 0.5 * (lo + hi);
        (Some(k0), Some(1.0 / k0))
    } else {
        (None, None)
    };
    Ok(TilingTcBound {
        f,
        d,
        rate,
        coupling_gap: rate * LN2,
        k_wired,
        t_wired,
    })
}

/// One named bound evaluation, for reporting.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundReport {
    pub name: String,
    pub inputs: Vec<(String, f64)>,
    pub value: f64,
    pub satisfied: Option<bool>,
}

impl BoundReport {
    pub fn aligned(&self) -> String {
        let inputs = self
            .inputs
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" ");
        let status = match self.satisfied {
            Some(true) => "satisfied",
            Some(false) => "violated",
            None => "-",
        };
        format!("{:<28} {:<40} {:>18.12e} {}", self.name, inputs, self.value, status)
    }
}

/// Checks K_a - K_b >= rate * ln 2 for each measured coupling pair.
pub fn coupling_gap_check(pairs: &[(f64, f64)], rate: f64) -> Vec<BoundReport> {
    pairs
        .iter()
        .map(|&(ka, kb)| {
            let margin = ka - kb - rate * LN2;
            BoundReport {
                name: "coupling-gap".into(),
                inputs: vec![
                    ("K_a".into(), ka),
                    ("K_b".into(), kb),
                    ("rate".into(), rate),
                ],
                value: margin,
                satisfied: Some(margin >= 0.0),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kw_dual_involution() {
        for &k in &[0.05, 0.2, 0.44, 1.0, 2.5] {
            let kk = kw_dual(kw_dual(k).unwrap()).unwrap();
            assert!((kk - k).abs() < 1e-12, "k={k} round trip {kk}");
        }
        assert!(kw_dual(0.0).is_err());
        assert!(kw_dual(-1.0).is_err());
    }

    #[test]
    fn kw_dual_fixed_point() {
        let ks = self_dual_coupling();
        assert!((ks - 0.4406867935).abs() < 1e-9);
        assert!((kw_dual(ks).unwrap() - ks).abs() < 1e-12);
        assert!((self_dual_temperature() - 2.269185314).abs() < 1e-8);
    }

    #[test]
    fn kw_dual_monotone_decreasing() {
        let mut prev = kw_dual(0.01).unwrap();
        for i in 1..200 {
            let k = 0.01 + i as f64 * 0.02;
            let d = kw_dual(k).unwrap();
            assert!(d < prev);
            prev = d;
        }
    }

    #[test]
    fn freezing_region_clean_threshold() {
        // m = 4: threshold at K = ln(3)/2.
        let kc = 0.5 * 3f64.ln();
        assert!(!freezing_region(4, 0.0, kc - 1e-3).unwrap().satisfied);
        assert!(freezing_region(4, 0.0, kc + 1e-3).unwrap().satisfied);
        let rep = freezing_region(4, 0.0, 1.0).unwrap();
        assert!((rep.clean_threshold - kc).abs() < 1e-15);
    }

    #[test]
    fn freezing_region_shrinks_with_p() {
        let in_region = freezing_region(4, 0.0, 0.7).unwrap();
        assert!(in_region.satisfied);
        let out = freezing_region(4, 0.2, 0.7).unwrap();
        assert!(out.contraction > in_region.contraction);
    }

    #[test]
    fn delta_f_bound_example() {
        // m=4, p=0, K=1, d=2: 9 e^{-6} / (1 - 3 e^{-2}).
        let got = delta_f_disorder_bound(4, 0.0, 1.0, 2).unwrap();
        let want = 9.0 * (-6.0f64).exp() / (1.0 - 3.0 * (-2.0f64).exp());
        assert!((got - want).abs() < 1e-15);
        assert!(delta_f_disorder_bound(4, 0.0, 0.3, 2).is_err());
    }

    #[test]
    fn delta_f_bound_decreases_with_k() {
        // Clean case: strictly decreasing in K.
        let mut prev = f64::INFINITY;
        for i in 0..50 {
            let k = 0.8 + 0.05 * i as f64;
            let b = delta_f_disorder_bound(4, 0.0, k, 2).unwrap();
            assert!(b < prev);
            prev = b;
        }
        // With disorder the contraction S = e^{-2K}(1-p) + e^{2K}p turns
        // around at K = ln((1-p)/p)/4; the bound decreases before that
        // point and grows past it.
        let p = 0.001f64;
        let k_opt = 0.25 * ((1.0 - p) / p).ln();
        let mut prev = f64::INFINITY;
        for i in 0..10 {
            let k = 0.8 + (k_opt - 0.8) * i as f64 / 10.0;
            let b = delta_f_disorder_bound(4, p, k, 2).unwrap();
            assert!(b < prev);
            prev = b;
        }
        let at_opt = delta_f_disorder_bound(4, p, k_opt, 2).unwrap();
        assert!(delta_f_disorder_bound(4, p, k_opt + 1.0, 2).unwrap() > at_opt);
        assert!(delta_f_disorder_bound(4, p, k_opt - 1.0, 2).unwrap() > at_opt);
    }

    #[test]
    fn hts_radius_example() {
        let r = hts_radius(2, 4).unwrap();
        assert!((r - 1.0 / (10.0 * std::f64::consts::E)).abs() < 1e-15);
        // Larger interactions shrink the radius.
        assert!(hts_radius(3, 4).unwrap() < r);
        assert!(hts_radius(2, 6).unwrap() < r);
    }

    #[test]
    fn cumulant_bound_example() {
        let b = cumulant_coeff_bound(2, 2, 4, 1.0, 0.0, CumulantCase::ZeroField).unwrap();
        assert!((b - 10.0).abs() < 1e-12);
        // s = 4, case (b), l=2, m=4, J=1: 2^3 * 4^2 * 5^3 = 16000.
        let b4 = cumulant_coeff_bound(4, 2, 4, 1.0, 0.0, CumulantCase::ZeroField).unwrap();
        assert!((b4 - 16000.0).abs() < 1e-9);
    }

    #[test]
    fn tiling_tc_bound_five_five() {
        let b = tiling_tc_bound(5, 5).unwrap();
        assert!((b.rate - 0.2).abs() < 1e-14);
        let t = b.t_wired.unwrap();
        assert!((t - 2.668).abs() < 1e-3, "T bound {t}");
        // Consistency: the root actually solves the equation.
        let k0 = b.k_wired.unwrap();
        assert!(((k0 + 0.2 * LN2).tanh() - (-2.0 * k0).exp()).abs() < 1e-9);
    }

    #[test]
    fn tiling_tc_bound_square_degenerates_to_self_dual() {
        let b = tiling_tc_bound(4, 4).unwrap();
        assert!((b.rate).abs() < 1e-14);
        assert!((b.k_wired.unwrap() - self_dual_coupling()).abs() < 1e-9);
        assert!((b.t_wired.unwrap() - self_dual_temperature()).abs() < 1e-7);
    }

    #[test]
    fn tiling_tc_bound_rejects_spherical() {
        assert!(tiling_tc_bound(3, 3).is_err());
        assert!(tiling_tc_bound(3, 4).is_err());
        assert!(tiling_tc_bound(2, 7).is_err());
    }

    #[test]
    fn tiling_tc_bound_grows_with_f() {
        // Larger f,d push the wired bound further above the self-dual point.
        let mut prev = self_dual_temperature();
        for fd in [5, 6, 8, 12] {
            let t = tiling_tc_bound(fd, fd).unwrap().t_wired.unwrap();
            assert!(t > prev);
            prev = t;
        }
    }

    #[test]
    fn gap_check_reports() {
        let reports = coupling_gap_check(&[(0.6, 0.4), (0.5, 0.45)], 0.2);
        assert_eq!(reports.len(), 2);
        assert_eq!(reports[0].satisfied, Some(true));
        assert_eq!(reports[1].satisfied, Some(false));
    }
}
