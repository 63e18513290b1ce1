//! Monte Carlo engines and the measurement protocol.
//!
//! The model's `coupling` and `field` are read as the physical J and h' at
//! unit Boltzmann constant; temperature enters through the acceptance rule
//! exp(-dE/T). Both engines keep integer bond and spin sums, so energies
//! carry no accumulated drift: the state after a billion updates is exactly
//! the state recomputable from the spins.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::IsingModel;
use crate::rng::{split_seed, SplitMix64};

#[derive(Debug, Error)]
pub enum McError {
    #[error("temperature grid is empty")]
    EmptyGrid,
    #[error("temperature {0} is not positive and finite")]
    BadTemperature(f64),
    #[error("schedule needs at least one cycle")]
    NoCycles,
    #[error("discard fraction {0} must lie in [0, 0.9]")]
    BadDiscard(f64),
    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("cluster updates need two-body bonds: column {column} has weight {weight}")]
    NotTwoBody { column: usize, weight: usize },
    #[error("cluster updates require zero disorder")]
    DisorderedCluster,
    #[error("cluster updates require zero field")]
    FieldCluster,
    #[error("cluster updates require a positive coupling, got {0}")]
    CouplingCluster(f64),
    #[error("csv parse error: {0}")]
    Csv(String),
}

/// Single-spin-flip Metropolis dynamics on an arbitrary coupling matrix,
/// with disorder signs and a longitudinal field.
pub struct Metropolis {
    adj: Vec<Vec<u32>>,
    sign: Vec<i8>,
    r_val: Vec<i8>,
    spins: Vec<i8>,
    j: f64,
    h: f64,
    bond_sum: i64,
    spin_sum: i64,
}

impl Metropolis {
    pub fn new(model: &IsingModel) -> Metropolis {
        let r = model.n_spins();
        let n = model.n_bonds();
        let mut adj = vec![Vec::new(); r];
        for v in 0..r {
            for b in model.theta.row(v).iter_ones() {
                adj[v].push(b as u32);
            }
        }
        let sign: Vec<i8> = (0..n)
            .map(|b| if model.disorder.get(b) { -1 } else { 1 })
            .collect();
        let bond_sum = sign.iter().map(|&s| s as i64).sum();
        Metropolis {
            adj,
            sign,
            r_val: vec![1; n],
            spins: vec![1; r],
            j: model.coupling,
            h: model.field,
            bond_sum,
            spin_sum: r as i64,
        }
    }

    /// One sweep = one proposed flip per spin, each at a uniformly random
    /// site; returns the accepted count. Random site order matters: a fixed
    /// scan is not irreducible once zero-cost moves are always accepted
    /// (on a plain cycle it confines the end-of-sweep state to a strict
    /// subset of configurations).
    pub fn sweep(&mut self, t: f64, rng: &mut SplitMix64) -> usize {
        let mut accepted = 0;
        if self.spins.is_empty() {
            return 0;
        }
        for _ in 0..self.spins.len() {
            let v = rng.below(self.spins.len() as u64) as usize;
            let mut d_bond = 0i64;
            for &b in &self.adj[v] {
                d_bond += (self.sign[b as usize] * self.r_val[b as usize]) as i64;
            }
            let de = 2.0 * self.j * d_bond as f64 + 2.0 * self.h * self.spins[v] as f64;
            if de <= 0.0 || rng.next_f64() < (-de / t).exp() {
                self.spins[v] = -self.spins[v];
                self.spin_sum += 2 * self.spins[v] as i64;
                for &b in &self.adj[v] {
                    let b = b as usize;
                    self.bond_sum -= 2 * (self.sign[b] * self.r_val[b]) as i64;
                    self.r_val[b] = -self.r_val[b];
                }
                accepted += 1;
            }
        }
        accepted
    }

    pub fn energy(&self) -> f64 {
        -self.j * self.bond_sum as f64 - self.h * self.spin_sum as f64
    }

    pub fn abs_magnetization(&self) -> i64 {
        self.spin_sum.abs()
    }

    pub fn n_spins(&self) -> usize {
        self.spins.len()
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    /// Recomputes the integer sums from the spins; true when the
    /// incremental bookkeeping is consistent.
    pub fn bookkeeping_consistent(&self) -> bool {
        let mut bond = 0i64;
        for b in 0..self.r_val.len() {
            let mut prod = 1i8;
            for (v, s) in self.spins.iter().enumerate() {
                if self.adj[v].contains(&(b as u32)) {
                    prod *= s;
                }
            }
            if prod != self.r_val[b] {
                return false;
            }
            bond += (self.sign[b] * prod) as i64;
        }
        bond == self.bond_sum && self.spins.iter().map(|&s| s as i64).sum::<i64>() == self.spin_sum
    }
}

/// Wolff single-cluster dynamics for clean two-body ferromagnets at zero
/// field. Parallel bonds are activated independently.
pub struct Wolff {
    adj: Vec<Vec<(u32, u32)>>,
    spins: Vec<i8>,
    r_val: Vec<i8>,
    j: f64,
    bond_sum: i64,
    spin_sum: i64,
    in_cluster: Vec<bool>,
    stack: Vec<u32>,
    members: Vec<u32>,
}

impl Wolff {
    pub fn new(model: &IsingModel) -> Result<Wolff, McError> {
        if !model.disorder.is_zero() {
            return Err(McError::DisorderedCluster);
        }
        if model.field != 0.0 {
            return Err(McError::FieldCluster);
        }
        if model.coupling <= 0.0 {
            return Err(McError::CouplingCluster(model.coupling));
        }
        let r = model.n_spins();
        let n = model.n_bonds();
        let mut adj = vec![Vec::new(); r];
        for b in 0..n {
            let ends: Vec<usize> = (0..r).filter(|&v| model.theta.get(v, b)).collect();
            if ends.len() != 2 {
                return Err(McError::NotTwoBody {
                    column: b,
                    weight: ends.len(),
                });
            }
            adj[ends[0]].push((ends[1] as u32, b as u32));
            adj[ends[1]].push((ends[0] as u32, b as u32));
        }
        Ok(Wolff {
            adj,
            spins: vec![1; r],
            r_val: vec![1; n],
            j: model.coupling,
            bond_sum: n as i64,
            spin_sum: r as i64,
            in_cluster: vec![false; r],
            stack: Vec::new(),
            members: Vec::new(),
        })
    }

    /// Grows and flips one cluster; returns its size.
    pub fn update(&mut self, t: f64, rng: &mut SplitMix64) -> usize {
        let p_add = 1.0 - (-2.0 * self.j / t).exp();
        let seed = rng.below(self.spins.len() as u64) as usize;
        self.stack.clear();
        self.members.clear();
        self.stack.push(seed as u32);
        self.members.push(seed as u32);
        self.in_cluster[seed] = true;
        while let Some(v) = self.stack.pop() {
            let v = v as usize;
            for i in 0..self.adj[v].len() {
                let (nb, _) = self.adj[v][i];
                let nb = nb as usize;
                if !self.in_cluster[nb]
                    && self.spins[nb] == self.spins[v]
                    && rng.next_f64() < p_add
                {
                    self.in_cluster[nb] = true;
                    self.stack.push(nb as u32);
                    self.members.push(nb as u32);
                }
            }
        }
        // Flip the cluster; only boundary bonds change value.
        for mi in 0..self.members.len() {
            let v = self.members[mi] as usize;
            self.spin_sum -= 2 * self.spins[v] as i64;
            self.spins[v] = -self.spins[v];
        }
        for mi in 0..self.members.len() {
            let v = self.members[mi] as usize;
            for i in 0..self.adj[v].len() {
                let (nb, b) = self.adj[v][i];
                if !self.in_cluster[nb as usize] {
                    let old = self.r_val[b as usize];
                    self.r_val[b as usize] = -old;
                    self.bond_sum -= 2 * old as i64;
                }
            }
        }
        for &v in &self.members {
            self.in_cluster[v as usize] = false;
        }
        self.members.len()
    }

    pub fn energy(&self) -> f64 {
        -self.j * self.bond_sum as f64
    }

    pub fn abs_magnetization(&self) -> i64 {
        self.spin_sum.abs()
    }

    pub fn bookkeeping_consistent(&self) -> bool {
        let mut bond = 0i64;
        for (v, list) in self.adj.iter().enumerate() {
            for &(nb, b) in list {
                if v < nb as usize {
                    let prod = self.spins[v] * self.spins[nb as usize];
                    if prod != self.r_val[b as usize] {
                        return false;
                    }
                    bond += prod as i64;
                }
            }
        }
        bond == self.bond_sum && self.spins.iter().map(|&s| s as i64).sum::<i64>() == self.spin_sum
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Metropolis,
    Wolff,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Cool,
    Heat,
}

impl Direction {
    fn as_str(self) -> &'static str {
        match self {
            Direction::Cool => "cool",
            Direction::Heat => "heat",
        }
    }
}

/// A cooling-heating measurement schedule. Each cycle walks the grid from
/// its hottest to its coldest point and back; spins persist throughout, so
/// the two passes expose hysteresis when there is any.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Schedule {
    /// Stored hottest-first; the heating pass reverses it.
    pub temperatures: Vec<f64>,
    pub cycles: usize,
    pub sweeps_per_t: usize,
    pub algorithm: Algorithm,
    pub seed: u64,
    /// Fraction of sweeps discarded at each temperature visit.
    pub discard_fraction: f64,
}

impl Schedule {
    pub fn new(
        temperatures: &[f64],
        cycles: usize,
        sweeps_per_t: usize,
        algorithm: Algorithm,
        seed: u64,
    ) -> Result<Schedule, McError> {
        if temperatures.is_empty() {
            return Err(McError::EmptyGrid);
        }
        for &t in temperatures {
            if !(t > 0.0) || !t.is_finite() {
                return Err(McError::BadTemperature(t));
            }
        }
        if cycles == 0 {
            return Err(McError::NoCycles);
        }
        let mut temps = temperatures.to_vec();
        temps.sort_by(|a, b| b.partial_cmp(a).expect("finite temperatures"));
        temps.dedup();
        Ok(Schedule {
            temperatures: temps,
            cycles,
            sweeps_per_t,
            algorithm,
            seed,
            discard_fraction: 0.25,
        })
    }

    pub fn with_discard(mut self, fraction: f64) -> Result<Schedule, McError> {
        if !(0.0..=0.9).contains(&fraction) {
            return Err(McError::BadDiscard(fraction));
        }
        self.discard_fraction = fraction;
        self
            .validate()
            .map(|_| self)
    }

    fn validate(&self) -> Result<(), McError> {
        let kept = self.kept_sweeps();
        if kept == 0 || self.cycles * kept < 16 {
            return Err(McError::TooFewSamples {
                needed: 16,
                got: self.cycles * kept,
            });
        }
        Ok(())
    }

    fn kept_sweeps(&self) -> usize {
        self.sweeps_per_t - (self.sweeps_per_t as f64 * self.discard_fraction) as usize
    }

    /// Uniform default grid: 61 points descending over [2, 5].
    pub fn default_grid() -> Vec<f64> {
        (0..61).map(|i| 5.0 - 0.05 * i as f64).collect()
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct Block {
    m1: f64,
    m2: f64,
    m4: f64,
    e1: f64,
    e2: f64,
    count: u64,
}

#[derive(Clone, Debug, Default)]
struct Bucket {
    blocks: Vec<Block>,
    update_metric: f64,
    updates: u64,
}

/// One measured temperature of one sweep direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McPoint {
    pub t: f64,
    pub direction: Direction,
    pub m: f64,
    pub m_err: f64,
    pub chi: f64,
    pub chi_err: f64,
    pub eps: f64,
    pub eps_err: f64,
    pub c: f64,
    pub c_err: f64,
    pub u4: f64,
    pub u4_err: f64,
    pub n_samples: u64,
    /// Metropolis: acceptance rate. Wolff: mean cluster fraction.
    /// Not serialized into the CSV schema.
    pub update_metric: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct McSeries {
    pub points: Vec<McPoint>,
    pub n_spins: usize,
    pub n_bonds: usize,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub runs: usize,
}

enum Engine {
    Metropolis(Metropolis),
    Wolff(Wolff),
}

impl Engine {
    fn build(model: &IsingModel, algorithm: Algorithm) -> Result<Engine, McError> {
        Ok(match algorithm {
            Algorithm::Metropolis => Engine::Metropolis(Metropolis::new(model)),
            Algorithm::Wolff => Engine::Wolff(Wolff::new(model)?),
        })
    }

    /// One update unit: a full sweep (Metropolis) or one cluster (Wolff).
    /// Returns the normalized update metric.
    fn step(&mut self, t: f64, rng: &mut SplitMix64) -> f64 {
        match self {
            Engine::Metropolis(m) => {
                let acc = m.sweep(t, rng);
                acc as f64 / m.n_spins() as f64
            }
            Engine::Wolff(w) => {
                let size = w.update(t, rng);
                size as f64 / w.spins.len() as f64
            }
        }
    }

    fn measure(&self) -> (f64, i64) {
        match self {
            Engine::Metropolis(m) => (m.energy(), m.abs_magnetization()),
            Engine::Wolff(w) => (w.energy(), w.abs_magnetization()),
        }
    }
}

fn collect_run(
    model: &IsingModel,
    sched: &Schedule,
    seed: u64,
) -> Result<Vec<Vec<Bucket>>, McError> {
    let g = sched.temperatures.len();
    let mut buckets = vec![vec![Bucket::default(); g]; 2];
    let mut engine = Engine::build(model, sched.algorithm)?;
    let mut rng = SplitMix64::new(seed);
    let discard = (sched.sweeps_per_t as f64 * sched.discard_fraction) as usize;
    let kept = sched.sweeps_per_t - discard;
    // Enough chunks that jackknife always has at least 16 blocks in total.
    let chunks = (16usize.div_ceil(sched.cycles)).min(kept).max(1);
    for _ in 0..sched.cycles {
        for (dir, idxs) in [
            (0usize, (0..g).collect::<Vec<_>>()),
            (1, (0..g).rev().collect()),
        ] {
            for ti in idxs {
                let t = sched.temperatures[ti];
                let bucket = &mut buckets[dir][ti];
                for _ in 0..discard {
                    bucket.update_metric += engine.step(t, &mut rng);
                    bucket.updates += 1;
                }
                let mut done = 0usize;
                for ch in 0..chunks {
                    let len = kept / chunks + usize::from(ch < kept % chunks);
                    let mut blk = Block::default();
                    for _ in 0..len {
                        bucket.update_metric += engine.step(t, &mut rng);
                        bucket.updates += 1;
                        let (e, m_abs) = engine.measure();
                        let m = m_abs as f64;
                        blk.m1 += m;
                        blk.m2 += m * m;
                        blk.m4 += m * m * m * m;
                        blk.e1 += e;
                        blk.e2 += e * e;
                        blk.count += 1;
                    }
                    done += len;
                    if blk.count > 0 {
                        bucket.blocks.push(blk);
                    }
                }
                debug_assert_eq!(done, kept);
            }
        }
    }
    Ok(buckets)
}

fn finalize(
    model: &IsingModel,
    sched: &Schedule,
    runs: usize,
    buckets: Vec<Vec<Bucket>>,
) -> McSeries {
    let n_spins = model.n_spins() as f64;
    let n_bonds = model.n_bonds() as f64;
    let mut points = Vec::new();
    for (dir_idx, dir) in [(0usize, Direction::Cool), (1, Direction::Heat)] {
        // Ascending temperature order within each direction.
        for ti in (0..sched.temperatures.len()).rev() {
            let bucket = &buckets[dir_idx][ti];
            let t = sched.temperatures[ti];
            let estimate = |means: &[f64; 5]| -> [f64; 5] {
                let [m1, m2, m4, e1, e2] = *means;
                [
                    m1 / n_spins,
                    (m2 - m1 * m1) / (n_spins * t * t),
                    e1 / n_bonds,
                    (e2 - e1 * e1) / (n_bonds * t * t),
                    1.0 - m4 / (3.0 * m2 * m2),
                ]
            };
            let mut sums = [0.0f64; 5];
            let mut total = 0u64;
            for blk in &bucket.blocks {
                sums[0] += blk.m1;
                sums[1] += blk.m2;
                sums[2] += blk.m4;
                sums[3] += blk.e1;
                sums[4] += blk.e2;
                total += blk.count;
            }
            let grand: [f64; 5] = std::array::from_fn(|i| sums[i] / total as f64);
            let center = estimate(&grand);
            // Delete-one-block jackknife over all (run, cycle, chunk) blocks.
            let nb = bucket.blocks.len();
            let mut jk = vec![[0.0f64; 5]; nb];
            for (bi, blk) in bucket.blocks.iter().enumerate() {
                let rest = (total - blk.count) as f64;
                let means: [f64; 5] = [
                    (sums[0] - blk.m1) / rest,
                    (sums[1] - blk.m2) / rest,
                    (sums[2] - blk.m4) / rest,
                    (sums[3] - blk.e1) / rest,
                    (sums[4] - blk.e2) / rest,
                ];
                jk[bi] = estimate(&means);
            }
            let mut err = [0.0f64; 5];
            for obs in 0..5 {
                let mean_jk = jk.iter().map(|v| v[obs]).sum::<f64>() / nb as f64;
                let ss = jk
                    .iter()
                    .map(|v| (v[obs] - mean_jk).powi(2))
                    .sum::<f64>();
                err[obs] = ((nb as f64 - 1.0) / nb as f64 * ss).sqrt();
            }
            points.push(McPoint {
                t,
                direction: dir,
                m: center[0],
                m_err: err[0],
                chi: center[1],
                chi_err: err[1],
                eps: center[2],
                eps_err: err[2],
                c: center[3],
                c_err: err[3],
                u4: center[4],
                u4_err: err[4],
                n_samples: total,
                update_metric: bucket.update_metric / bucket.updates.max(1) as f64,
            });
        }
    }
    McSeries {
        points,
        n_spins: model.n_spins(),
        n_bonds: model.n_bonds(),
        algorithm: sched.algorithm,
        seed: sched.seed,
        runs,
    }
}

/// Runs one chain through the schedule. Deterministic for a fixed seed.
pub fn run_schedule(model: &IsingModel, sched: &Schedule) -> Result<McSeries, McError> {
    sched.validate()?;
    let buckets = collect_run(model, sched, sched.seed)?;
    Ok(finalize(model, sched, 1, buckets))
}

/// Averages `runs` independent chains with derived per-run seeds. The
/// parallel fold merges run results in index order, so output does not
/// depend on thread scheduling.
pub fn run_ensemble(
    model: &IsingModel,
    sched: &Schedule,
    runs: usize,
) -> Result<McSeries, McError> {
    sched.validate()?;
    if runs == 0 {
        return Err(McError::TooFewSamples { needed: 1, got: 0 });
    }
    let collected: Vec<Result<Vec<Vec<Bucket>>, McError>> = (0..runs)
        .into_par_iter()
        .map(|run| collect_run(model, sched, split_seed(sched.seed, run as u64)))
        .collect();
    let mut merged: Option<Vec<Vec<Bucket>>> = None;
    for res in collected {
        let buckets = res?;
        match &mut merged {
            None => merged = Some(buckets),
            Some(acc) => {
                for (acc_dir, dir) in acc.iter_mut().zip(buckets) {
                    for (acc_b, b) in acc_dir.iter_mut().zip(dir) {
                        acc_b.blocks.extend(b.blocks);
                        acc_b.update_metric += b.update_metric;
                        acc_b.updates += b.updates;
                    }
                }
            }
        }
    }
    Ok(finalize(model, sched, runs, merged.expect("runs >= 1")))
}

const CSV_HEADER: &str = "T,m,m_err,chi,chi_err,eps,eps_err,C,C_err,U4,U4_err,n_samples,direction";

impl McSeries {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                p.t,
                p.m,
                p.m_err,
                p.chi,
                p.chi_err,
                p.eps,
                p.eps_err,
                p.c,
                p.c_err,
                p.u4,
                p.u4_err,
                p.n_samples,
                p.direction.as_str()
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Vec<McPoint>, McError> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == CSV_HEADER => {}
            other => {
                return Err(McError::Csv(format!(
                    "bad header: {:?}",
                    other.unwrap_or("")
                )))
            }
        }
        let mut points = Vec::new();
        for (ln, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 13 {
                return Err(McError::Csv(format!(
                    "line {}: expected 13 fields, got {}",
                    ln + 2,
                    fields.len()
                )));
            }
            let num = |i: usize| -> Result<f64, McError> {
                fields[i]
                    .parse()
                    .map_err(|e| McError::Csv(format!("line {}: {e}", ln + 2)))
            };
            let direction = match fields[12].trim() {
                "cool" => Direction::Cool,
                "heat" => Direction::Heat,
                other => return Err(McError::Csv(format!("line {}: direction {other:?}", ln + 2))),
            };
            points.push(McPoint {
                t: num(0)?,
                m: num(1)?,
                m_err: num(2)?,
                chi: num(3)?,
                chi_err: num(4)?,
                eps: num(5)?,
                eps_err: num(6)?,
                c: num(7)?,
                c_err: num(8)?,
                u4: num(9)?,
                u4_err: num(10)?,
                n_samples: fields[11]
                    .parse()
                    .map_err(|e| McError::Csv(format!("line {}: {e}", ln + 2)))?,
                direction,
                update_metric: f64::NAN,
            });
        }
        Ok(points)
    }
}

/// Blocking (binning) stderr of the mean: doubles the block size while at
/// least 32 blocks remain and reports the largest level estimate, which is
/// the plateau value for correlated streams.
pub fn blocking_stderr(series: &[f64]) -> Result<f64, McError> {
    if series.len() < 16 {
        return Err(McError::TooFewSamples {
            needed: 16,
            got: series.len(),
        });
    }
    let mut data = series.to_vec();
    let mut best = 0.0f64;
    loop {
        let b = data.len() as f64;
        let mean = data.iter().sum::<f64>() / b;
        let var = data.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (b - 1.0);
        best = best.max((var / b).sqrt());
        if data.len() / 2 < 32 {
            break;
        }
        data = data
            .chunks_exact(2)
            .map(|c| 0.5 * (c[0] + c[1]))
            .collect();
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{enumerate_model, testutil::ring_theta};
    use crate::gf2::{BinMatrix, BitVec};
    use crate::tiling::square_torus;

    fn torus_model(l: usize, j: f64) -> IsingModel {
        let t = square_torus(l).unwrap();
        IsingModel::new(t.g.clone(), j, 0.0).unwrap()
    }

    /// Exact observables of `model` at temperature t, via enumeration with
    /// K = J/t, h = h'/t.
    fn exact_point(model: &IsingModel, t: f64) -> (f64, f64, f64, f64, f64) {
        let hist = enumerate_model(model, &[], 24).unwrap();
        let mm = hist
            .thermo_moments(model.coupling / t, model.field / t)
            .unwrap();
        let n = model.n_bonds() as f64;
        let r = model.n_spins() as f64;
        let j = model.coupling;
        // Physical energy: E = J * e1 (field part vanishes in these tests).
        let (e1, e2) = (j * mm.e1, j * j * mm.e2);
        let m = mm.m1 / r;
        let chi = (mm.m2 - mm.m1 * mm.m1) / (r * t * t);
        let eps = e1 / n;
        let c = (e2 - e1 * e1) / (n * t * t);
        let u4 = 1.0 - mm.m4 / (3.0 * mm.m2 * mm.m2);
        (m, chi, eps, c, u4)
    }

    #[test]
    fn metropolis_acceptance_extremes() {
        let model = IsingModel::new(ring_theta(4), 1.0, 0.0).unwrap();
        let mut hot = Metropolis::new(&model);
        let mut rng = SplitMix64::new(1);
        let mut acc = 0;
        for _ in 0..50 {
            acc += hot.sweep(1e12, &mut rng);
        }
        assert_eq!(acc, 200, "infinite temperature accepts everything");
        let mut cold = Metropolis::new(&model);
        let mut acc = 0;
        for _ in 0..50 {
            acc += cold.sweep(1e-9, &mut rng);
        }
        assert_eq!(acc, 0, "ground state at T -> 0 freezes");
    }

    #[test]
    fn metropolis_bookkeeping_stays_exact() {
        let mut rng = SplitMix64::new(9);
        let theta = crate::exact::testutil::random_sparse_theta(8, 14, 3, &mut rng);
        let e = BitVec::random(14, 0.3, &mut rng);
        let model = IsingModel::new(theta, 0.7, 0.2)
            .unwrap()
            .with_disorder(e)
            .unwrap();
        let mut eng = Metropolis::new(&model);
        for _ in 0..300 {
            eng.sweep(1.7, &mut rng);
        }
        assert!(eng.bookkeeping_consistent());
    }

    #[test]
    fn wolff_bookkeeping_stays_exact() {
        let model = torus_model(3, 1.0);
        let mut eng = Wolff::new(&model).unwrap();
        let mut rng = SplitMix64::new(10);
        for _ in 0..500 {
            eng.update(2.3, &mut rng);
        }
        assert!(eng.bookkeeping_consistent());
    }

    #[test]
    fn wolff_cluster_extremes() {
        let model = torus_model(3, 1.0);
        let mut eng = Wolff::new(&model).unwrap();
        let mut rng = SplitMix64::new(4);
        let mut total = 0usize;
        for _ in 0..2000 {
            total += eng.update(1e9, &mut rng);
        }
        let mean = total as f64 / 2000.0;
        assert!(mean < 1.05, "hot clusters should be single spins, got {mean}");
        // Every zero-temperature update merges a maximal aligned component
        // with all its neighbors, so at most r updates reach full alignment.
        for _ in 0..10 {
            eng.update(1e-6, &mut rng);
        }
        for _ in 0..20 {
            let size = eng.update(1e-6, &mut rng);
            assert_eq!(size, 9, "cold cluster spans the torus");
        }
    }

    #[test]
    fn wolff_rejects_incompatible_models() {
        let disordered = IsingModel::new(ring_theta(4), 1.0, 0.0)
            .unwrap()
            .with_disorder(BitVec::from_indices(4, &[0]).unwrap())
            .unwrap();
        assert!(matches!(
            Wolff::new(&disordered),
            Err(McError::DisorderedCluster)
        ));
        let fielded = IsingModel::new(ring_theta(4), 1.0, 0.3).unwrap();
        assert!(matches!(Wolff::new(&fielded), Err(McError::FieldCluster)));
        let hyper = IsingModel::new(
            BinMatrix::from_row_indices(3, &[vec![0], vec![0], vec![0]]).unwrap(),
            1.0,
            0.0,
        )
        .unwrap();
        assert!(matches!(
            Wolff::new(&hyper),
            Err(McError::NotTwoBody {
                column: 0,
                weight: 3
            })
        ));
        let af = IsingModel::new(ring_theta(4), -1.0, 0.0).unwrap();
        assert!(matches!(Wolff::new(&af), Err(McError::CouplingCluster(_))));
    }

    #[test]
    fn metropolis_matches_exact_on_four_cycle() {
        let model = IsingModel::new(ring_theta(4), 1.0, 0.0).unwrap();
        let sched = Schedule::new(&[2.0], 32, 512, Algorithm::Metropolis, 42).unwrap();
        let series = run_schedule(&model, &sched).unwrap();
        let (m, chi, eps, c, u4) = exact_point(&model, 2.0);
        for p in &series.points {
            assert!((p.m - m).abs() < 3.0 * p.m_err, "m {} vs {m}", p.m);
            assert!((p.chi - chi).abs() < 3.0 * p.chi_err, "chi {} vs {chi}", p.chi);
            assert!((p.eps - eps).abs() < 3.0 * p.eps_err, "eps {} vs {eps}", p.eps);
            assert!((p.c - c).abs() < 3.0 * p.c_err, "C {} vs {c}", p.c);
            assert!((p.u4 - u4).abs() < 3.0 * p.u4_err, "U4 {} vs {u4}", p.u4);
        }
    }

    #[test]
    fn wolff_matches_exact_on_three_torus() {
        let model = torus_model(3, 1.0);
        let t = 1.0 / 0.44;
        let sched = Schedule::new(&[t], 16, 1024, Algorithm::Wolff, 77).unwrap();
        let series = run_ensemble(&model, &sched, 4).unwrap();
        let (m, chi, eps, c, u4) = exact_point(&model, t);
        for p in &series.points {
            assert!((p.eps - eps).abs() < 3.0 * p.eps_err, "eps {} vs {eps}", p.eps);
            assert!((p.m - m).abs() < 3.0 * p.m_err, "m {} vs {m}", p.m);
            assert!((p.chi - chi).abs() < 3.0 * p.chi_err, "chi {} vs {chi}", p.chi);
            assert!((p.c - c).abs() < 3.0 * p.c_err, "C {} vs {c}", p.c);
            assert!((p.u4 - u4).abs() < 3.0 * p.u4_err, "U4 {} vs {u4}", p.u4);
        }
    }

    #[test]
    fn engines_cross_agree() {
        let model = torus_model(2, 1.0);
        let sched_m = Schedule::new(&[3.0], 24, 512, Algorithm::Metropolis, 5).unwrap();
        let sched_w = Schedule::new(&[3.0], 24, 512, Algorithm::Wolff, 6).unwrap();
        let a = run_schedule(&model, &sched_m).unwrap();
        let b = run_schedule(&model, &sched_w).unwrap();
        for (pa, pb) in a.points.iter().zip(&b.points) {
            let tol = 3.0 * (pa.eps_err.hypot(pb.eps_err));
            assert!((pa.eps - pb.eps).abs() < tol, "{} vs {}", pa.eps, pb.eps);
            let tol = 3.0 * (pa.chi_err.hypot(pb.chi_err));
            assert!((pa.chi - pb.chi).abs() < tol);
        }
    }

    #[test]
    fn paramagnetic_and_frozen_limits() {
        let model = torus_model(2, 1.0);
        let sched = Schedule::new(&[1e6], 8, 256, Algorithm::Metropolis, 11).unwrap();
        let series = run_schedule(&model, &sched).unwrap();
        for p in &series.points {
            assert!(p.eps.abs() < 0.05, "hot energy {}", p.eps);
        }
        // Near the independent-spin value 2/(3r) for M = |sum S| with r = 4;
        // the reference point sits at K = 1e-6, not exactly 0.
        let (_, _, _, _, u4_free) = exact_point(&model, 1e6);
        assert!((u4_free - 2.0 / 12.0).abs() < 1e-5);
        // Moment checks run at a hot but finite temperature. When every
        // proposal is accepted, a sweep makes exactly r flips, so the parity
        // of the down-spin count is frozen at sweep boundaries and moments
        // of M sample only one parity sector.
        let sched = Schedule::new(&[50.0], 8, 256, Algorithm::Metropolis, 11).unwrap();
        let series = run_schedule(&model, &sched).unwrap();
        let (m, _, eps, _, u4_exact) = exact_point(&model, 50.0);
        for p in &series.points {
            assert!((p.eps - eps).abs() < 3.0 * p.eps_err + 1e-3);
            assert!((p.m - m).abs() < 3.0 * p.m_err + 1e-3);
            assert!((p.u4 - u4_exact).abs() < 3.0 * p.u4_err + 1e-3);
        }

        let sched = Schedule::new(&[0.05], 8, 256, Algorithm::Metropolis, 12).unwrap();
        let series = run_schedule(&model, &sched).unwrap();
        for p in &series.points {
            assert!((p.m - 1.0).abs() < 1e-12, "frozen magnetization {}", p.m);
            assert!((p.u4 - 2.0 / 3.0).abs() < 1e-12, "frozen U4 {}", p.u4);
        }
    }

    #[test]
    fn hysteresis_rows_and_order() {
        let model = torus_model(2, 1.0);
        let grid = [2.5, 3.5, 3.0];
        let sched = Schedule::new(&grid, 16, 64, Algorithm::Wolff, 3).unwrap();
        let series = run_schedule(&model, &sched).unwrap();
        assert_eq!(series.points.len(), 6);
        let cool: Vec<f64> = series
            .points
            .iter()
            .filter(|p| p.direction == Direction::Cool)
            .map(|p| p.t)
            .collect();
        assert_eq!(cool, vec![2.5, 3.0, 3.5]);
        let heat: Vec<f64> = series
            .points
            .iter()
            .filter(|p| p.direction == Direction::Heat)
            .map(|p| p.t)
            .collect();
        assert_eq!(heat, vec![2.5, 3.0, 3.5]);
    }

    #[test]
    fn determinism_and_seed_sensitivity() {
        let model = torus_model(2, 1.0);
        let sched = Schedule::new(&[2.2, 3.0], 8, 64, Algorithm::Wolff, 123).unwrap();
        let a = run_ensemble(&model, &sched, 4).unwrap().to_csv();
        let b = run_ensemble(&model, &sched, 4).unwrap().to_csv();
        assert_eq!(a, b, "same seed must reproduce byte-identical output");
        let mut other = sched.clone();
        other.seed = 124;
        let c = run_ensemble(&model, &other, 4).unwrap().to_csv();
        assert_ne!(a, c);
    }

    #[test]
    fn csv_round_trip() {
        let model = torus_model(2, 1.0);
        let sched = Schedule::new(&[2.0, 4.0], 8, 64, Algorithm::Metropolis, 8).unwrap();
        let series = run_schedule(&model, &sched).unwrap();
        let csv = series.to_csv();
        let points = McSeries::from_csv(&csv).unwrap();
        assert_eq!(points.len(), series.points.len());
        for (a, b) in points.iter().zip(&series.points) {
            assert_eq!(a.t, b.t);
            assert_eq!(a.m, b.m);
            assert_eq!(a.chi, b.chi);
            assert_eq!(a.u4_err, b.u4_err);
            assert_eq!(a.n_samples, b.n_samples);
            assert_eq!(a.direction, b.direction);
        }
        assert!(McSeries::from_csv("nope\n1,2\n").is_err());
    }

    #[test]
    fn susceptibilities_nonnegative() {
        let model = torus_model(2, 1.0);
        let sched = Schedule::new(&[2.0, 2.5, 3.0], 8, 128, Algorithm::Metropolis, 21).unwrap();
        let series = run_schedule(&model, &sched).unwrap();
        for p in &series.points {
            assert!(p.chi >= -1e-12);
            assert!(p.c >= -1e-12);
            assert!(p.m >= 0.0 && p.m <= 1.0);
            assert!(p.eps >= -1.0 - 1e-12 && p.eps <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn schedule_validation() {
        assert!(matches!(
            Schedule::new(&[], 4, 64, Algorithm::Wolff, 0),
            Err(McError::EmptyGrid)
        ));
        assert!(matches!(
            Schedule::new(&[-1.0], 4, 64, Algorithm::Wolff, 0),
            Err(McError::BadTemperature(_))
        ));
        assert!(matches!(
            Schedule::new(&[2.0], 0, 64, Algorithm::Wolff, 0),
            Err(McError::NoCycles)
        ));
        let tiny = Schedule::new(&[2.0], 1, 8, Algorithm::Wolff, 0).unwrap();
        let model = torus_model(2, 1.0);
        assert!(matches!(
            run_schedule(&model, &tiny),
            Err(McError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn blocking_iid_matches_naive() {
        let mut rng = SplitMix64::new(31);
        // Approximately normal samples: sum of 12 uniforms minus 6.
        let series: Vec<f64> = (0..4096)
            .map(|_| (0..12).map(|_| rng.next_f64()).sum::<f64>() - 6.0)
            .collect();
        let n = series.len() as f64;
        let mean = series.iter().sum::<f64>() / n;
        let sigma = (series.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let naive = sigma / n.sqrt();
        let blocked = blocking_stderr(&series).unwrap();
        assert!(
            (blocked / naive - 1.0).abs() < 0.2,
            "blocked {blocked} vs naive {naive}"
        );
    }

    #[test]
    fn blocking_ar1_exceeds_naive() {
        let mut rng = SplitMix64::new(32);
        let phi = 0.9f64;
        let mut x = 0.0f64;
        let series: Vec<f64> = (0..65536)
            .map(|_| {
                let noise = (0..12).map(|_| rng.next_f64()).sum::<f64>() - 6.0;
                x = phi * x + noise;
                x
            })
            .collect();
        let n = series.len() as f64;
        let mean = series.iter().sum::<f64>() / n;
        let sigma = (series.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let naive = sigma / n.sqrt();
        let blocked = blocking_stderr(&series).unwrap();
        // Correlated stream: true factor is sqrt((1+phi)/(1-phi)) ~ 4.36.
        let factor = blocked / naive;
        assert!(factor > 2.5, "plateau factor {factor}");
        assert!(factor < 7.0, "plateau factor {factor}");
    }

    #[test]
    fn blocking_edge_cases() {
        assert!(matches!(
            blocking_stderr(&[1.0; 8]),
            Err(McError::TooFewSamples { .. })
        ));
        let zero = blocking_stderr(&[3.25; 64]).unwrap();
        assert_eq!(zero, 0.0);
    }
}
