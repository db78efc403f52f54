use serde::{Deserialize, Serialize};

use super::basis::BoundarySource;
use crate::error::{Error, Result};
use crate::geometry::MetricGrid;

pub const DEFAULT_CFL: f64 = 0.5;

/// Uniform time lattice: `dt = T / n` with `n` the number of steps to the
/// horizon `T`; fields and traces live on steps `0..=2n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub dt: f64,
    pub n: usize,
}

impl TimeGrid {
    /// Smallest step count whose step satisfies `dt <= cfl h / max c`.
    pub fn for_horizon(g: &MetricGrid, horizon: f64, cfl: f64) -> Result<Self> {
        if !(horizon > 0.0) || !(cfl > 0.0) {
            return Err(Error::ConfigInvalid("horizon and cfl must be positive".into()));
        }
        let bound = cfl * g.h / g.cmax();
        let n = (horizon / bound * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        Ok(TimeGrid { dt: horizon / n as f64, n })
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.n as f64
    }

    /// Number of stored samples on `[0, 2T]`.
    pub fn samples(&self) -> usize {
        2 * self.n + 1
    }

    /// Nearest step index of time `t`.
    pub fn step_of(&self, t: f64) -> usize {
        (t / self.dt).round().max(0.0) as usize
    }
}

/// Full space-time field, stored only in validation runs.
#[derive(Debug, Clone)]
pub struct WaveField {
    pub dt: f64,
    pub boundary: Vec<usize>,
    /// `u[m][x]`, step-major.
    pub u: Vec<Vec<f64>>,
}

impl WaveField {
    pub fn steps(&self) -> usize {
        self.u.len()
    }
}

/// Restriction of a field to the boundary, step-major (`trace[m * nb + b]`).
pub fn boundary_trace(u: &WaveField) -> Vec<f64> {
    let nb = u.boundary.len();
    let mut out = Vec::with_capacity(u.steps() * nb);
    for snap in &u.u {
        out.extend(u.boundary.iter().map(|&k| snap[k]));
    }
    out
}

/// Precomputed operators of the semi-discrete system for one grid.
#[derive(Debug, Clone)]
pub struct WaveSolver {
    n_nodes: usize,
    inv_mass: Vec<f64>,
    mass: Vec<f64>,
    edges: Vec<(usize, usize, f64)>,
    boundary: Vec<usize>,
    ds: Vec<f64>,
    dt: f64,
    grid_hash: String,
}

impl WaveSolver {
    pub fn new(g: &MetricGrid, dt: f64, cfl: f64) -> Result<Self> {
        let bound = cfl * g.h / g.cmax();
        if !(dt > 0.0) || dt > bound * (1.0 + 1e-12) {
            return Err(Error::CflViolation { dt, bound });
        }
        let mut edges = Vec::new();
        if g.dim == 1 {
            for i in 0..g.nx - 1 {
                let w = 0.5 * (g.c[i] + g.c[i + 1]) / g.h;
                edges.push((i, i + 1, w));
            }
        } else {
            for j in 0..g.ny {
                for i in 0..g.nx {
                    let k = g.node(i, j);
                    if i + 1 < g.nx {
                        let w = if j == 0 || j == g.ny - 1 { 0.5 } else { 1.0 };
                        edges.push((k, k + 1, w));
                    }
                    if j + 1 < g.ny {
                        let w = if i == 0 || i == g.nx - 1 { 0.5 } else { 1.0 };
                        edges.push((k, k + g.nx, w));
                    }
                }
            }
        }
        Ok(WaveSolver {
            n_nodes: g.len(),
            inv_mass: g.dv.iter().map(|m| 1.0 / m).collect(),
            mass: g.dv.clone(),
            edges,
            boundary: g.boundary.clone(),
            ds: g.ds.clone(),
            dt,
            grid_hash: g.hash(),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn boundary_len(&self) -> usize {
        self.boundary.len()
    }

    pub fn grid_hash(&self) -> &str {
        &self.grid_hash
    }

    pub fn apply_stiffness(&self, u: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for &(a, b, w) in &self.edges {
            let f = w * (u[a] - u[b]);
            out[a] += f;
            out[b] -= f;
        }
    }

    /// Staggered energy `1/2 |v|_M^2 + 1/2 u1' K u0` with `v = (u1 - u0)/dt`;
    /// exactly conserved by the scheme while the source is off.
    pub fn energy(&self, u0: &[f64], u1: &[f64]) -> f64 {
        let kin: f64 = u0
            .iter()
            .zip(u1)
            .zip(&self.mass)
            .map(|((a, b), m)| m * ((b - a) / self.dt).powi(2))
            .sum();
        let pot: f64 = self
            .edges
            .iter()
            .map(|&(a, b, w)| w * (u1[a] - u1[b]) * (u0[a] - u0[b]))
            .sum();
        0.5 * (kin + pot)
    }

    /// `u' M v`.
    pub fn mass_inner(&self, u: &[f64], v: &[f64]) -> f64 {
        u.iter().zip(v).zip(&self.mass).map(|((a, b), m)| a * b * m).sum()
    }

    /// Runs the scheme for `steps` steps. `source(m, f)` fills the boundary
    /// source at step `m`; `observe(m, u)` sees every state `u^m`, `m = 0..=steps`.
    pub fn run<S, O>(&self, steps: usize, mut source: S, mut observe: O)
    where
        S: FnMut(usize, &mut [f64]),
        O: FnMut(usize, &[f64]),
    {
        let n = self.n_nodes;
        let nb = self.boundary.len();
        let dt2 = self.dt * self.dt;
        let mut prev = vec![0.0; n];
        let mut cur = vec![0.0; n];
        let mut next = vec![0.0; n];
        let mut ku = vec![0.0; n];
        let mut f = vec![0.0; nb];
        observe(0, &prev);
        if steps == 0 {
            return;
        }
        // F(., 0) = 0 and u_t(., 0) = 0 give u^1 = 0.
        observe(1, &cur);
        for m in 1..steps {
            self.apply_stiffness(&cur, &mut ku);
            f.iter_mut().for_each(|v| *v = 0.0);
            source(m, &mut f);
            for (b, &k) in self.boundary.iter().enumerate() {
                ku[k] -= self.ds[b] * f[b];
            }
            for x in 0..n {
                next[x] = 2.0 * cur[x] - prev[x] - dt2 * self.inv_mass[x] * ku[x];
            }
            std::mem::swap(&mut prev, &mut cur);
            std::mem::swap(&mut cur, &mut next);
            observe(m + 1, &cur);
        }
    }

    /// Boundary traces of the response to `source` on steps `0..=steps`.
    pub fn traces<S>(&self, steps: usize, source: S) -> Vec<f64>
    where
        S: FnMut(usize, &mut [f64]),
    {
        let nb = self.boundary.len();
        let mut out = vec![0.0; (steps + 1) * nb];
        self.run(steps, source, |m, u| {
            for (b, &k) in self.boundary.iter().enumerate() {
                out[m * nb + b] = u[k];
            }
        });
        out
    }

    /// State at step `m` only.
    pub fn state_at<S>(&self, m: usize, source: S) -> Vec<f64>
    where
        S: FnMut(usize, &mut [f64]),
    {
        let mut out = Vec::new();
        self.run(m, source, |s, u| {
            if s == m {
                out = u.to_vec();
            }
        });
        out
    }
}

/// Full leapfrog solution for a dense boundary source.
pub fn solve_wave(g: &MetricGrid, f: &BoundarySource, cfl: f64) -> Result<WaveField> {
    if f.boundary_len() != g.boundary.len() {
        return Err(Error::GridMismatch(format!(
            "source has {} boundary nodes, grid has {}",
            f.boundary_len(),
            g.boundary.len()
        )));
    }
    let solver = WaveSolver::new(g, f.dt(), cfl)?;
    let steps = f.steps() - 1;
    let mut u = Vec::with_capacity(steps + 1);
    solver.run(steps, |m, out| out.copy_from_slice(f.at(m)), |_, s| u.push(s.to_vec()));
    Ok(WaveField { dt: f.dt(), boundary: g.boundary.clone(), u })
}
