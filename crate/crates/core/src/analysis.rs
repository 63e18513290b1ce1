//! Post-processing of measurement curves: duality transform of energy
//! series, quartic peak fits, infinite-size extrapolation, and Binder
//! cumulant crossings.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::kw_dual;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("series arrays have mismatched lengths")]
    LengthMismatch,
    #[error("x values are not strictly monotone at index {0}")]
    NotMonotone(usize),
    #[error("temperature {0} is not positive")]
    BadTemperature(f64),
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("degenerate fit window")]
    DegenerateWindow,
    #[error("fit did not converge; best residual {residual}")]
    NonConvergence { residual: f64, best: Box<PeakFit> },
    #[error("series x ranges do not overlap")]
    NoOverlap,
    #[error("singular linear system in fit")]
    Singular,
}

/// A measured curve with optional per-point errors. x is strictly
/// monotone (either direction).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Series {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub y_err: Vec<f64>,
    pub label: String,
}

impl Series {
    pub fn new(
        x: Vec<f64>,
        y: Vec<f64>,
        y_err: Vec<f64>,
        label: impl Into<String>,
    ) -> Result<Series, AnalysisError> {
        if x.len() != y.len() || (!y_err.is_empty() && y_err.len() != x.len()) {
            return Err(AnalysisError::LengthMismatch);
        }
        if x.len() >= 2 {
            let ascending = x[1] > x[0];
            for i in 1..x.len() {
                if (ascending && x[i] <= x[i - 1]) || (!ascending && x[i] >= x[i - 1]) {
                    return Err(AnalysisError::NotMonotone(i));
                }
            }
        }
        let y_err = if y_err.is_empty() {
            vec![0.0; x.len()]
        } else {
            y_err
        };
        Ok(Series {
            x,
            y,
            y_err,
            label: label.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Ascending-x copy.
    fn ascending(&self) -> Series {
        if self.x.len() >= 2 && self.x[1] < self.x[0] {
            Series {
                x: self.x.iter().rev().copied().collect(),
                y: self.y.iter().rev().copied().collect(),
                y_err: self.y_err.iter().rev().copied().collect(),
                label: self.label.clone(),
            }
        } else {
            self.clone()
        }
    }

    /// Linear interpolation; x must lie within the range.
    fn interpolate(&self, x: f64) -> f64 {
        let s = self;
        debug_assert!(s.x.len() >= 2 && s.x[1] > s.x[0]);
        let i = match s.x.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(i) => return s.y[i],
            Err(i) => i.clamp(1, s.x.len() - 1),
        };
        let t = (x - s.x[i - 1]) / (s.x[i] - s.x[i - 1]);
        s.y[i - 1] + t * (s.y[i] - s.y[i - 1])
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("x\ty\ty_err\n");
        for i in 0..self.x.len() {
            out.push_str(&format!("{}\t{}\t{}\n", self.x[i], self.y[i], self.y_err[i]));
        }
        out
    }
}

/// Transforms an energy-per-bond curve epsilon(T) to its dual:
/// T* = 1/K*(1/T) and eps* = -sinh(2K) eps - cosh(2K). The transform is an
/// involution on matched grids because sinh(2K) sinh(2K*) = 1.
pub fn dualize_energy(series: &Series) -> Result<Series, AnalysisError> {
    let mut x = Vec::with_capacity(series.len());
    let mut y = Vec::with_capacity(series.len());
    let mut y_err = Vec::with_capacity(series.len());
    for i in 0..series.len() {
        let t = series.x[i];
        if !(t > 0.0) {
            return Err(AnalysisError::BadTemperature(t));
        }
        let k = 1.0 / t;
        let k_dual = kw_dual(k).map_err(|_| AnalysisError::BadTemperature(t))?;
        let s2k = (2.0 * k).sinh();
        let c2k = (2.0 * k).cosh();
        x.push(1.0 / k_dual);
        y.push(-s2k * series.y[i] - c2k);
        y_err.push(s2k * series.y_err[i]);
    }
    Series::new(x, y, y_err, format!("{}*", series.label))
}

/// Solves a dense linear system by Gaussian elimination with partial
/// pivoting. None when singular to working precision.
fn gaussian_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap()
        })?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in (col + 1)..n {
            acc -= a[col][k] * x[k];
        }
        x[col] = acc / a[col][col];
    }
    Some(x)
}

fn invert(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        cols.push(gaussian_solve(a.to_vec(), e)?);
    }
    let mut inv = vec![vec![0.0; n]; n];
    for (j, col) in cols.iter().enumerate() {
        for i in 0..n {
            inv[i][j] = col[i];
        }
    }
    Some(inv)
}

/// Result of a quartic peak fit y = y_m + a2 dx^2 + a3 dx^3 + a4 dx^4 with
/// dx = x - x_m.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PeakFit {
    pub x_peak: f64,
    pub y_peak: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
    pub x_err: f64,
    pub y_err: f64,
    /// Sum of squared weighted residuals at the optimum.
    pub residual: f64,
    pub n_points: usize,
    pub covariance: Vec<Vec<f64>>,
}

fn quartic_model(p: &[f64; 5], x: f64) -> f64 {
    let dx = x - p[0];
    p[1] + p[2] * dx * dx + p[3] * dx * dx * dx + p[4] * dx * dx * dx * dx
}

fn quartic_jacobian_row(p: &[f64; 5], x: f64) -> [f64; 5] {
    let dx = x - p[0];
    [
        -(2.0 * p[2] * dx + 3.0 * p[3] * dx * dx + 4.0 * p[4] * dx * dx * dx),
        1.0,
        dx * dx,
        dx * dx * dx,
        dx * dx * dx * dx,
    ]
}

pub const DEFAULT_PEAK_WINDOW: f64 = 0.4;
const PEAK_MAX_ITER: usize = 200;

/// Fits a general quartic peak within `half_width` of the discrete maximum
/// by Levenberg-Marquardt, initialized from a parabola through the three
/// points nearest that maximum.
pub fn quartic_peak_fit(series: &Series, half_width: Option<f64>) -> Result<PeakFit, AnalysisError> {
    quartic_peak_fit_with(series, half_width, PEAK_MAX_ITER)
}

pub fn quartic_peak_fit_with(
    series: &Series,
    half_width: Option<f64>,
    max_iter: usize,
) -> Result<PeakFit, AnalysisError> {
    let hw = half_width.unwrap_or(DEFAULT_PEAK_WINDOW);
    if !(hw > 0.0) {
        return Err(AnalysisError::DegenerateWindow);
    }
    let s = series.ascending();
    let i_max = (0..s.len())
        .max_by(|&i, &j| s.y[i].partial_cmp(&s.y[j]).unwrap())
        .ok_or(AnalysisError::TooFewPoints { needed: 7, got: 0 })?;
    let center = s.x[i_max];
    let idx: Vec<usize> = (0..s.len())
        .filter(|&i| (s.x[i] - center).abs() <= hw)
        .collect();
    if idx.len() < 7 {
        return Err(AnalysisError::TooFewPoints {
            needed: 7,
            got: idx.len(),
        });
    }
    let xs: Vec<f64> = idx.iter().map(|&i| s.x[i]).collect();
    let ys: Vec<f64> = idx.iter().map(|&i| s.y[i]).collect();
    let weighted = idx.iter().all(|&i| s.y_err[i] > 0.0);
    let sig: Vec<f64> = idx
        .iter()
        .map(|&i| if weighted { s.y_err[i] } else { 1.0 })
        .collect();

    // Parabola through the three points nearest the discrete maximum.
    let j_max = idx
        .iter()
        .position(|&i| i == i_max)
        .expect("max is inside its own window");
    let j0 = j_max.clamp(1, xs.len() - 2);
    let (x1, x2, x3) = (xs[j0 - 1], xs[j0], xs[j0 + 1]);
    let (y1, y2, y3) = (ys[j0 - 1], ys[j0], ys[j0 + 1]);
    let d21 = (y2 - y1) / (x2 - x1);
    let d32 = (y3 - y2) / (x3 - x2);
    let curv = (d32 - d21) / (x3 - x1);
    let mut p: [f64; 5] = if curv < 0.0 {
        let slope = 0.5 * (d21 + d32);
        let xv = (x2 - slope / (2.0 * curv)).clamp(xs[0], xs[xs.len() - 1]);
        [xv, ys[j_max], curv, 0.0, 0.0]
    } else {
        [xs[j_max], ys[j_max], -1.0, 0.0, 0.0]
    };

    let chi2 = |p: &[f64; 5]| -> f64 {
        xs.iter()
            .zip(&ys)
            .zip(&sig)
            .map(|((&x, &y), &s)| ((y - quartic_model(p, x)) / s).powi(2))
            .sum()
    };
    let mut best = chi2(&p);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut jtj_at_opt: Option<Vec<Vec<f64>>> = None;
    for _ in 0..max_iter {
        // Normal equations with current damping.
        let mut jtj = vec![vec![0.0; 5]; 5];
        let mut jtr = vec![0.0; 5];
        for ((&x, &y), &sg) in xs.iter().zip(&ys).zip(&sig) {
            let row = quartic_jacobian_row(&p, x);
            let r = (y - quartic_model(&p, x)) / sg;
            for a in 0..5 {
                jtr[a] += row[a] / sg * r;
                for b in 0..5 {
                    jtj[a][b] += row[a] / sg * row[b] / sg;
                }
            }
        }
        jtj_at_opt = Some(jtj.clone());
        let mut accepted = false;
        for _ in 0..12 {
            let mut damped = jtj.clone();
            for (a, row) in damped.iter_mut().enumerate() {
                row[a] += lambda * jtj[a][a].max(1e-12);
            }
            let Some(step) = gaussian_solve(damped, jtr.clone()) else {
                return Err(AnalysisError::Singular);
            };
            let mut trial = p;
            for a in 0..5 {
                trial[a] += step[a];
            }
            let c = chi2(&trial);
            if c.is_finite() && c <= best {
                let gain = best - c;
                p = trial;
                best = c;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if gain <= 1e-12 * (1.0 + best) {
                    converged = true;
                }
                break;
            }
            lambda *= 8.0;
        }
        if converged || !accepted {
            converged = converged || accepted;
            if !accepted && lambda > 1e8 {
                // Cannot improve further: treat the stall as convergence.
                converged = true;
            }
            if converged {
                break;
            }
        }
    }

    let jtj = jtj_at_opt.ok_or(AnalysisError::Singular)?;
    let cov_raw = invert(&jtj).ok_or(AnalysisError::Singular)?;
    let dof = (xs.len() as f64 - 5.0).max(1.0);
    let scale = if weighted { 1.0 } else { best / dof };
    let covariance: Vec<Vec<f64>> = cov_raw
        .iter()
        .map(|row| row.iter().map(|v| v * scale).collect())
        .collect();
    let fit = PeakFit {
        x_peak: p[0],
        y_peak: p[1],
        a2: p[2],
        a3: p[3],
        a4: p[4],
        x_err: covariance[0][0].max(0.0).sqrt(),
        y_err: covariance[1][1].max(0.0).sqrt(),
        residual: best,
        n_points: xs.len(),
        covariance,
    };
    if !converged {
        return Err(AnalysisError::NonConvergence {
            residual: best,
            best: Box::new(fit),
        });
    }
    Ok(fit)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtrapolationMode {
    Linear,
    Quadratic,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Extrapolation {
    /// Intercept at n -> infinity.
    pub intercept: f64,
    pub stderr: f64,
    /// Polynomial coefficients in x = n^{-1/2}, constant first.
    pub coefficients: Vec<f64>,
    pub points_used: usize,
}

/// Weighted least squares of peak positions against x = n^{-1/2}. Linear
/// mode uses only the four smallest-x (largest-n) points when more are
/// supplied. Points are (n, value, stderr); zero stderr means unweighted.
pub fn extrapolate_infinite_size(
    points: &[(f64, f64, f64)],
    mode: ExtrapolationMode,
) -> Result<Extrapolation, AnalysisError> {
    let order = match mode {
        ExtrapolationMode::Linear => 1usize,
        ExtrapolationMode::Quadratic => 2,
    };
    let mut data: Vec<(f64, f64, f64)> = points
        .iter()
        .map(|&(n, v, e)| (n.powf(-0.5), v, e))
        .collect();
    data.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    if mode == ExtrapolationMode::Linear && data.len() > 4 {
        data.truncate(4);
    }
    let needed = order + 1;
    if data.len() < needed {
        return Err(AnalysisError::TooFewPoints {
            needed,
            got: data.len(),
        });
    }
    let weighted = data.iter().all(|&(_, _, e)| e > 0.0);
    let k = order + 1;
    let mut xtx = vec![vec![0.0; k]; k];
    let mut xty = vec![0.0; k];
    for &(x, y, e) in &data {
        let w = if weighted { 1.0 / (e * e) } else { 1.0 };
        let mut xp = vec![1.0; k];
        for j in 1..k {
            xp[j] = xp[j - 1] * x;
        }
        for a in 0..k {
            xty[a] += w * xp[a] * y;
            for b in 0..k {
                xtx[a][b] += w * xp[a] * xp[b];
            }
        }
    }
    let coeff = gaussian_solve(xtx.clone(), xty).ok_or(AnalysisError::Singular)?;
    let inv = invert(&xtx).ok_or(AnalysisError::Singular)?;
    let chi2: f64 = data
        .iter()
        .map(|&(x, y, e)| {
            let w = if weighted { 1.0 / (e * e) } else { 1.0 };
            let mut fit = 0.0;
            let mut xp = 1.0;
            for c in &coeff {
                fit += c * xp;
                xp *= x;
            }
            w * (y - fit).powi(2)
        })
        .sum();
    let dof = (data.len() as f64 - k as f64).max(1.0);
    let scale = if weighted && data.len() > k {
        1.0
    } else if weighted {
        1.0
    } else {
        chi2 / dof
    };
    Ok(Extrapolation {
        intercept: coeff[0],
        stderr: (inv[0][0] * scale).max(0.0).sqrt(),
        coefficients: coeff,
        points_used: data.len(),
    })
}

/// One bracketed sign change of the difference of two curves.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Crossing {
    pub x_lo: f64,
    pub x_hi: f64,
    /// Linear-interpolation root inside [x_lo, x_hi].
    pub x_estimate: f64,
}

/// All crossings of two curves over their overlapping x range, found on
/// the union grid with linear interpolation. An empty result means the
/// curves do not cross. Errors when the ranges do not overlap.
pub fn binder_crossing(a: &Series, b: &Series) -> Result<Vec<Crossing>, AnalysisError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(AnalysisError::TooFewPoints {
            needed: 2,
            got: a.len().min(b.len()),
        });
    }
    let a = a.ascending();
    let b = b.ascending();
    let lo = a.x[0].max(b.x[0]);
    let hi = a.x[a.len() - 1].min(b.x[b.len() - 1]);
    if lo >= hi {
        return Err(AnalysisError::NoOverlap);
    }
    let mut grid: Vec<f64> = a
        .x
        .iter()
        .chain(b.x.iter())
        .copied()
        .filter(|&x| (lo..=hi).contains(&x))
        .collect();
    grid.sort_by(|p, q| p.partial_cmp(q).unwrap());
    grid.dedup();
    let diff: Vec<f64> = grid
        .iter()
        .map(|&x| a.interpolate(x) - b.interpolate(x))
        .collect();
    let mut crossings = Vec::new();
    for i in 1..grid.len() {
        let (d0, d1) = (diff[i - 1], diff[i]);
        if d0 == 0.0 {
            if i == 1 || diff[i - 2] * d1 < 0.0 {
                crossings.push(Crossing {
                    x_lo: grid[i - 1],
                    x_hi: grid[i - 1],
                    x_estimate: grid[i - 1],
                });
            }
        } else if d0 * d1 < 0.0 {
            let t = d0 / (d0 - d1);
            crossings.push(Crossing {
                x_lo: grid[i - 1],
                x_hi: grid[i],
                x_estimate: grid[i - 1] + t * (grid[i] - grid[i - 1]),
            });
        }
    }
    Ok(crossings)
}
