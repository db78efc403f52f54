use nalgebra::DMatrix;
use rayon::prelude::*;

use super::data::BoundaryDataSet;

/// Gram matrix `G_ij = <u_i(T), u_j(T)>` over the response basis.
#[derive(Debug, Clone)]
pub struct Gram {
    pub step: usize,
    pub matrix: DMatrix<f64>,
    /// `max |G - G'| / max |G|` before symmetrization.
    pub asymmetry: f64,
}

impl Gram {
    pub fn max_diag(&self) -> f64 {
        self.matrix.diagonal().iter().cloned().fold(0.0, f64::max)
    }

    /// `f' G h`.
    pub fn inner(&self, f: &[f64], h: &[f64]) -> f64 {
        let n = self.matrix.nrows();
        let mut acc = 0.0;
        for j in 0..n {
            if h[j] == 0.0 {
                continue;
            }
            let col = &self.matrix.as_slice()[j * n..(j + 1) * n];
            acc += h[j] * col.iter().zip(f).map(|(a, b)| a * b).sum::<f64>();
        }
        acc
    }

    /// Submatrix `G[rows, cols]`.
    pub fn block(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |a, b| self.matrix[(rows[a], cols[b])])
    }
}

/// Closed-form solution of the lattice recursion used by
/// [`super::blago_inner_product`]: unrolling it, `W[n][n]` is `dt^2` times the
/// sum of `Q[a][b]` over the backward light cone `1 <= a <= n-1`,
/// `b = a+1, a+3, ..., 2n-a-1`. Since each basis source lives on one node,
/// both halves of `Q` reduce to parity prefix sums of the traces.
pub fn gram_matrix(d: &BoundaryDataSet, n: usize) -> Gram {
    let op = d.response();
    let nb = d.boundary().len();
    let ds = &d.boundary().ds;
    let dt = d.time_grid().dt;
    let elements = d.elements();
    let basis = &op.header.basis;
    let nbas = elements.len();
    let rows = op.matrix.nrows();
    let data = op.matrix.as_slice();

    let mut by_node: Vec<Vec<usize>> = vec![Vec::new(); nb];
    for (i, e) in elements.iter().enumerate() {
        by_node[e.node].push(i);
    }

    // For each node z: first-half rows T1[i, :] for i at z and second-half
    // rows E[j, :] for j at z.
    let parts: Vec<(Vec<usize>, Vec<Vec<f64>>, Vec<Vec<f64>>)> = (0..nb)
        .into_par_iter()
        .filter(|&z| !by_node[z].is_empty())
        .map(|z| {
            // p[k][j] = sum of trace_j(z, k'), k' <= k, k' = k mod 2, k' >= 1
            let len = 2 * n;
            let mut p = vec![0.0; len * nbas];
            for j in 0..nbas {
                let col = &data[j * rows..(j + 1) * rows];
                for k in 1..len {
                    let below = if k >= 2 { p[(k - 2) * nbas + j] } else { 0.0 };
                    p[k * nbas + j] = col[k * nb + z] + below;
                }
            }
            let pref = |k: isize, j: usize| if k < 1 { 0.0 } else { p[k as usize * nbas + j] };
            let mut t1 = Vec::new();
            let mut e2 = Vec::new();
            for &i in &by_node[z] {
                let e = &elements[i];
                let mut r1 = vec![0.0; nbas];
                let mut r2 = vec![0.0; nbas];
                for a in basis.support(e) {
                    let w = basis.hat(e, a) * ds[z] * dt * dt;
                    let ai = a as isize;
                    let ni = n as isize;
                    // row a of the cone: b = a+1 .. 2n-a-1
                    if a + 1 <= n {
                        for (j, r) in r1.iter_mut().enumerate() {
                            *r += w * (pref(2 * ni - ai - 1, j) - pref(ai - 1, j));
                        }
                    }
                    // column a of the cone: rows a-1, a-3, ... capped at 2n-1-a
                    let top = (ai - 1).min(2 * ni - 1 - ai);
                    for (j, r) in r2.iter_mut().enumerate() {
                        *r += w * pref(top, j);
                    }
                }
                t1.push(r1);
                e2.push(r2);
            }
            (by_node[z].clone(), t1, e2)
        })
        .collect();

    let mut g = DMatrix::<f64>::zeros(nbas, nbas);
    for (ids, t1, e2) in &parts {
        for (k, &i) in ids.iter().enumerate() {
            for j in 0..nbas {
                g[(i, j)] += t1[k][j];
                g[(j, i)] -= e2[k][j];
            }
        }
    }
    let scale = g.amax().max(f64::MIN_POSITIVE);
    let asym = (&g - g.transpose()).amax() / scale;
    let sym = (&g + g.transpose()) * 0.5;
    Gram { step: n, matrix: sym, asymmetry: asym }
}
