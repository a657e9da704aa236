//! Exit probabilities of the pair walk from the slit domain.
//!
//! For an unlabeled vertex `w`, `h(w)` is the probability that the walk
//! started at `w` is absorbed on a vertex labeled 1. It solves
//! `h(w) = Σ_dir P_dir(w) h(w + dir)` with `h` equal to the label on labeled
//! vertices. The matrix `I − Q` is a nonsingular M-matrix, so banded LU
//! without pivoting is stable; unknowns are ordered along the shorter side of
//! the rectangle to keep the band narrow.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{DomainConfig, DomainState, Vertex};
use crate::rng;
use crate::walk::{StepTable, WalkParams, WalkState, DEFAULT_STEP_BUDGET};

pub const RESIDUAL_TOL: f64 = 1e-10;
pub const DENSE_CAP: usize = 2000;
const MC_CHUNK: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Sparse,
    DenseOracle,
    MonteCarlo,
}

/// Field values on the unlabeled vertices of one domain state.
#[derive(Debug, Clone, PartialEq)]
pub struct HittingField {
    config: DomainConfig,
    /// Indexed like the domain; `None` on labeled vertices.
    values: Vec<Option<f64>>,
    step: u32,
    solver: SolverKind,
}

impl HittingField {
    pub fn config(&self) -> &DomainConfig {
        &self.config
    }

    pub fn step(&self) -> u32 {
        self.step
    }

    pub fn solver(&self) -> SolverKind {
        self.solver
    }

    /// Value at an unlabeled vertex.
    pub fn value(&self, v: Vertex) -> Option<f64> {
        if !self.config.contains(v) {
            return None;
        }
        self.values[self.config.index(v)]
    }

    /// `h` extended by the labels: the value at unlabeled vertices, the label
    /// elsewhere.
    pub fn extended(&self, state: &DomainState, v: Vertex) -> Result<f64> {
        if let Some(l) = state.label(v) {
            return Ok(l.value());
        }
        self.value(v)
            .ok_or_else(|| Error::Consistency(format!("{v} is unlabeled but has no field value")))
    }

    pub fn unknowns(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Vertex, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter_map(|(k, v)| v.map(|x| (self.config.vertex_at(k), x)))
    }

    /// Largest absolute difference over vertices where both fields are defined;
    /// an error when the unknown sets differ.
    pub fn max_abs_diff(&self, other: &HittingField) -> Result<f64> {
        if self.values.len() != other.values.len() {
            return Err(Error::Domain("fields live on different domains".into()));
        }
        let mut d: f64 = 0.0;
        for (a, b) in self.values.iter().zip(&other.values) {
            match (a, b) {
                (Some(a), Some(b)) => d = d.max((a - b).abs()),
                (None, None) => {}
                _ => return Err(Error::Domain("fields have different unknown sets".into())),
            }
        }
        Ok(d)
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "x_index,y_index,x_phys,y_phys,value")?;
        for (v, h) in self.iter() {
            let (x, y) = self.config.physical(v);
            writeln!(out, "{},{},{x},{y},{h}", v.i, v.j)?;
        }
        Ok(())
    }
}

/// Square band matrix with equal lower and upper bandwidth.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (2 * bw + 1)],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(i.abs_diff(j) <= self.bw);
        i * (2 * self.bw + 1) + (j + self.bw - i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i.abs_diff(j) > self.bw {
            return 0.0;
        }
        self.data[self.slot(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j);
        self.data[s] = v;
    }

    fn reset(&mut self) {
        self.data.iter_mut().for_each(|x| *x = 0.0);
    }

    fn cols(&self, i: usize) -> std::ops::Range<usize> {
        i.saturating_sub(self.bw)..(i + self.bw + 1).min(self.n)
    }

    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..self.n {
            out[i] = self.cols(i).map(|j| self.get(i, j) * x[j]).sum();
        }
    }

    fn inf_norm(&self) -> f64 {
        (0..self.n)
            .map(|i| self.cols(i).map(|j| self.get(i, j).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// In-place LU without pivoting. The band does not grow.
    fn factor(&mut self) -> Result<()> {
        let (n, bw) = (self.n, self.bw);
        for k in 0..n {
            let pivot = self.data[self.slot(k, k)];
            if !(pivot.abs() > 1e-300) || !pivot.is_finite() {
                return Err(Error::Solver(format!("zero or non-finite pivot {pivot} at row {k}")));
            }
            let end = (k + bw + 1).min(n);
            for i in k + 1..end {
                let sik = self.slot(i, k);
                let l = self.data[sik] / pivot;
                if l == 0.0 {
                    continue;
                }
                self.data[sik] = l;
                let base_i = i * (2 * bw + 1) + bw - i;
                let base_k = k * (2 * bw + 1) + bw - k;
                for j in k + 1..end {
                    self.data[base_i + j] -= l * self.data[base_k + j];
                }
            }
        }
        Ok(())
    }

    /// Solve with factors from [`factor`](Self::factor); `x` holds the rhs on
    /// entry.
    fn substitute(&self, x: &mut [f64]) {
        let (n, bw) = (self.n, self.bw);
        for i in 0..n {
            let base = i * (2 * bw + 1) + bw - i;
            let mut s = x[i];
            for j in i.saturating_sub(bw)..i {
                s -= self.data[base + j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let base = i * (2 * bw + 1) + bw - i;
            let mut s = x[i];
            for j in i + 1..(i + bw + 1).min(n) {
                s -= self.data[base + j] * x[j];
            }
            x[i] = s / self.data[base + i];
        }
    }
}

/// Solve `A x = b` for a diagonally dominant band matrix, with the normwise
/// relative residual checked against `tol` and one refinement step if needed.
pub fn solve_banded(a: &BandMatrix, b: &[f64], tol: f64) -> Result<Vec<f64>> {
    let mut lu = a.clone();
    let mut scratch = vec![0.0; a.n];
    let mut x = b.to_vec();
    lu.factor()?;
    lu.substitute(&mut x);
    refine(a, &lu, b, &mut x, &mut scratch, tol)?;
    Ok(x)
}

fn residual(a: &BandMatrix, b: &[f64], x: &[f64], r: &mut [f64]) -> f64 {
    a.mul_vec(x, r);
    let mut rmax: f64 = 0.0;
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
        rmax = rmax.max(ri.abs());
    }
    let xmax = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let bmax = b.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let scale = a.inf_norm() * xmax + bmax;
    if scale == 0.0 {
        0.0
    } else {
        rmax / scale
    }
}

fn refine(a: &BandMatrix, lu: &BandMatrix, b: &[f64], x: &mut [f64], r: &mut [f64], tol: f64) -> Result<()> {
    let mut rel = residual(a, b, x, r);
    if rel <= tol && rel.is_finite() {
        return Ok(());
    }
    lu.substitute(r);
    for (xi, di) in x.iter_mut().zip(r.iter()) {
        *xi += di;
    }
    rel = residual(a, b, x, r);
    if rel <= tol && rel.is_finite() {
        Ok(())
    } else {
        Err(Error::Solver(format!(
            "relative residual {rel:e} exceeds {tol:e} after refinement"
        )))
    }
}

/// Reusable sparse solver for one domain shape and walk law.
#[derive(Debug, Clone)]
pub struct HittingSolver {
    config: DomainConfig,
    table: StepTable,
    /// Interior columns and rows.
    nx: usize,
    ny: usize,
    column_major: bool,
    matrix: BandMatrix,
    lu: BandMatrix,
    rhs: Vec<f64>,
    x: Vec<f64>,
    scratch: Vec<f64>,
}

impl HittingSolver {
    pub fn new(config: DomainConfig, params: WalkParams) -> Result<Self> {
        config.validate()?;
        let table = StepTable::new(params, u64::from(config.height))?;
        let nx = config.width as usize - 2;
        let ny = config.height as usize - 2;
        let column_major = ny <= nx;
        let bw = if column_major { ny } else { nx };
        let n = nx * ny;
        Ok(Self {
            config,
            table,
            nx,
            ny,
            column_major,
            matrix: BandMatrix::zeros(n, bw),
            lu: BandMatrix::zeros(n, bw),
            rhs: vec![0.0; n],
            x: vec![0.0; n],
            scratch: vec![0.0; n],
        })
    }

    pub fn table(&self) -> &StepTable {
        &self.table
    }

    fn unknown(&self, v: Vertex) -> usize {
        let (a, b) = ((v.i - 1) as usize, (v.j - 1) as usize);
        if self.column_major {
            a * self.ny + b
        } else {
            b * self.nx + a
        }
    }

    fn vertex(&self, k: usize) -> Vertex {
        let (a, b) = if self.column_major {
            (k / self.ny, k % self.ny)
        } else {
            (k % self.nx, k / self.nx)
        };
        Vertex::new(a as i32 + 1, b as i32 + 1)
    }

    fn assemble(&mut self, state: &DomainState) {
        self.matrix.reset();
        for k in 0..self.matrix.n() {
            let v = self.vertex(k);
            if let Some(l) = state.label(v) {
                self.matrix.set(k, k, 1.0);
                self.rhs[k] = l.value();
                continue;
            }
            let h = v.j as usize;
            let (up, down) = (self.table.up(h), self.table.down(h));
            let mut b = 0.0;
            self.matrix.set(k, k, 1.0);
            for (n, p) in [
                (Vertex::new(v.i - 1, v.j), 0.25),
                (Vertex::new(v.i + 1, v.j), 0.25),
                (Vertex::new(v.i, v.j + 1), up),
                (Vertex::new(v.i, v.j - 1), down),
            ] {
                match state.label(n) {
                    Some(l) => b += p * l.value(),
                    None => {
                        let c = self.unknown(n);
                        self.matrix.set(k, c, -p);
                    }
                }
            }
            self.rhs[k] = b;
        }
    }

    pub fn solve(&mut self, state: &DomainState) -> Result<HittingField> {
        if state.config() != &self.config {
            return Err(Error::Domain("state and solver use different domains".into()));
        }
        if state.unlabeled_count() == 0 {
            return Err(Error::Domain("no unlabeled vertices to solve for".into()));
        }
        self.assemble(state);
        self.lu.data.copy_from_slice(&self.matrix.data);
        self.lu.factor()?;
        self.x.copy_from_slice(&self.rhs);
        self.lu.substitute(&mut self.x);
        refine(&self.matrix, &self.lu, &self.rhs, &mut self.x, &mut self.scratch, RESIDUAL_TOL)?;

        let mut values = vec![None; self.config.n_vertices()];
        for k in 0..self.matrix.n() {
            let v = self.vertex(k);
            if state.label(v).is_none() {
                values[self.config.index(v)] = Some(self.x[k]);
            }
        }
        Ok(HittingField {
            config: self.config,
            values,
            step: state.step_count(),
            solver: SolverKind::Sparse,
        })
    }
}

pub fn solve_field(state: &DomainState, params: &WalkParams) -> Result<HittingField> {
    HittingSolver::new(*state.config(), *params)?.solve(state)
}

/// Dense absorbing-chain solve of `(I − Q) h = b` by Gaussian elimination with
/// partial pivoting. Refuses more than [`DENSE_CAP`] unknowns.
pub fn brute_force_field(state: &DomainState, params: &WalkParams) -> Result<HittingField> {
    let cfg = *state.config();
    let unknowns: Vec<Vertex> = (0..cfg.n_vertices())
        .map(|k| cfg.vertex_at(k))
        .filter(|&v| state.label(v).is_none())
        .collect();
    let n = unknowns.len();
    if n == 0 {
        return Err(Error::Domain("no unlabeled vertices to solve for".into()));
    }
    if n > DENSE_CAP {
        return Err(Error::Refused(format!("{n} unknowns exceed the dense cap of {DENSE_CAP}")));
    }
    let mut pos = vec![usize::MAX; cfg.n_vertices()];
    for (k, v) in unknowns.iter().enumerate() {
        pos[cfg.index(*v)] = k;
    }
    let table = StepTable::new(*params, u64::from(cfg.height))?;
    let mut a = vec![0.0; n * n];
    let mut b = vec![0.0; n];
    for (k, v) in unknowns.iter().enumerate() {
        a[k * n + k] = 1.0;
        let h = v.j as usize;
        for (u, p) in [
            (Vertex::new(v.i - 1, v.j), 0.25),
            (Vertex::new(v.i + 1, v.j), 0.25),
            (Vertex::new(v.i, v.j + 1), table.up(h)),
            (Vertex::new(v.i, v.j - 1), table.down(h)),
        ] {
            match state.label(u) {
                Some(l) => b[k] += p * l.value(),
                None => a[k * n + pos[cfg.index(u)]] -= p,
            }
        }
    }
    let a0 = a.clone();
    let b0 = b.clone();
    let x = gauss_partial_pivot(&mut a, &mut b, n)?;

    // Residual check on the dense system.
    let mut rmax: f64 = 0.0;
    let mut anorm: f64 = 0.0;
    for i in 0..n {
        let row = &a0[i * n..(i + 1) * n];
        let ax: f64 = row.iter().zip(&x).map(|(r, x)| r * x).sum();
        rmax = rmax.max((b0[i] - ax).abs());
        anorm = anorm.max(row.iter().map(|r| r.abs()).sum());
    }
    let xmax = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let bmax = b0.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let scale = anorm * xmax + bmax;
    let rel = if scale > 0.0 { rmax / scale } else { 0.0 };
    if !(rel <= RESIDUAL_TOL) {
        return Err(Error::Solver(format!("dense residual {rel:e} exceeds {RESIDUAL_TOL:e}")));
    }

    let mut values = vec![None; cfg.n_vertices()];
    for (v, x) in unknowns.iter().zip(x) {
        values[cfg.index(*v)] = Some(x);
    }
    Ok(HittingField {
        config: cfg,
        values,
        step: state.step_count(),
        solver: SolverKind::DenseOracle,
    })
}

fn gauss_partial_pivot(a: &mut [f64], b: &mut [f64], n: usize) -> Result<Vec<f64>> {
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| a[i * n + k].abs().total_cmp(&a[j * n + k].abs()))
            .unwrap_or(k);
        if !(a[p * n + k].abs() > 1e-300) {
            return Err(Error::Solver(format!("singular dense system at column {k}")));
        }
        if p != k {
            for c in 0..n {
                a.swap(k * n + c, p * n + c);
            }
            b.swap(k, p);
        }
        let pivot = a[k * n + k];
        for i in k + 1..n {
            let l = a[i * n + k] / pivot;
            if l == 0.0 {
                continue;
            }
            for c in k..n {
                a[i * n + c] -= l * a[k * n + c];
            }
            b[i] -= l * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|c| a[i * n + c] * x[c]).sum();
        x[i] = (b[i] - s) / a[i * n + i];
    }
    Ok(x)
}

/// Monte Carlo estimate of `h(w)`: fraction of `n_walks` walks absorbed on a
/// 1-label, with its binomial standard error. Walks are split into chunks
/// with independent substreams of `seed`, so the result does not depend on
/// the thread count.
pub fn mc_estimate(
    w: Vertex,
    state: &DomainState,
    params: &WalkParams,
    n_walks: u64,
    seed: u64,
) -> Result<(f64, f64)> {
    if n_walks == 0 {
        return Err(Error::Domain("n_walks must be at least 1".into()));
    }
    if !state.config().contains(w) || state.label(w).is_some() {
        return Err(Error::Domain(format!("{w} is not an unlabeled vertex")));
    }
    let cfg = *state.config();
    let table = StepTable::new(*params, u64::from(cfg.height))?;
    let labels = state.labels();
    let label_at = |s: WalkState| -> Option<f64> {
        let v = Vertex::new(s.x as i32, s.r as i32);
        if !cfg.contains(v) {
            return None;
        }
        labels[cfg.index(v)].map(|l| l.value())
    };
    let n_chunks = n_walks.div_ceil(MC_CHUNK);
    let hits: Result<Vec<u64>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut stream = rng::substream(seed, c);
            let mut table = table.clone();
            let count = MC_CHUNK.min(n_walks - c * MC_CHUNK);
            let mut hits = 0;
            let start = WalkState {
                x: i64::from(w.i),
                r: i64::from(w.j),
            };
            for _ in 0..count {
                let end = table.sample_until_absorbed(
                    start,
                    |s| label_at(s).is_some(),
                    &mut stream,
                    DEFAULT_STEP_BUDGET,
                )?;
                if label_at(end) == Some(1.0) {
                    hits += 1;
                }
            }
            Ok(hits)
        })
        .collect();
    let hits: u64 = hits?.into_iter().sum();
    let n = n_walks as f64;
    let mean = hits as f64 / n;
    let se = (mean * (1.0 - mean) / n).sqrt();
    Ok((mean, se))
}

/// Field for `state`, given the field of the state one step earlier. An
/// unchanged state returns the field as is.
pub fn refresh_after_step(field: &HittingField, state: &DomainState, params: &WalkParams) -> Result<HittingField> {
    if field.config != *state.config() {
        return Err(Error::Domain("field and state use different domains".into()));
    }
    match state.step_count().checked_sub(field.step) {
        Some(0) => Ok(field.clone()),
        Some(1) => solve_field(state, params),
        _ => Err(Error::Consistency(format!(
            "field is from step {} but state is at step {}",
            field.step,
            state.step_count()
        ))),
    }
}

/// Largest violation of `h(w) = Σ P_dir h(w + dir)` over unlabeled vertices.
pub fn harmonicity_defect(field: &HittingField, state: &DomainState, params: &WalkParams) -> Result<f64> {
    let table = StepTable::new(*params, u64::from(state.config().height))?;
    let mut worst: f64 = 0.0;
    for (v, h) in field.iter() {
        let j = v.j as usize;
        let avg = 0.25 * field.extended(state, Vertex::new(v.i - 1, v.j))?
            + 0.25 * field.extended(state, Vertex::new(v.i + 1, v.j))?
            + table.up(j) * field.extended(state, Vertex::new(v.i, v.j + 1))?
            + table.down(j) * field.extended(state, Vertex::new(v.i, v.j - 1))?;
        worst = worst.max((h - avg).abs());
    }
    Ok(worst)
}
