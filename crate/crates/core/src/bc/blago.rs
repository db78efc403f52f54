use super::data::BoundaryDataSet;
use crate::error::Result;

/// `int u^F(T) u^H(T) dV` from boundary data.
///
/// With `W[n][m] = <u_F^n, u_H^m>` (mass inner product), the leapfrog scheme
/// gives the exact lattice wave equation
///
/// ```text
/// W[n+1][m] - W[n][m+1] - W[n][m-1] + W[n-1][m] = dt^2 Q[n][m]
/// Q[n][m] = sum_z dS_z ( F(z,n) H^tr(z,m) - F^tr(z,n) H(z,m) )
/// ```
///
/// where `^tr` is the boundary trace given by the response operator. Rows 0
/// and 1 and column 0 vanish (zero initial data), so stepping in `n` up to
/// `n_T` and reading `W[n_T][n_T]` needs nothing but boundary values.
pub fn blago_inner_product(d: &BoundaryDataSet, f: &[f64], h: &[f64], t: f64) -> Result<f64> {
    d.check_source(f)?;
    d.check_source(h)?;
    let n = d.step(t)?;
    if n < 2 || f.iter().all(|&v| v == 0.0) || h.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let op = d.response();
    let nb = d.boundary().len();
    let ds = &d.boundary().ds;
    let dt = d.time_grid().dt;
    let width = 2 * n + 1;

    let trace_f = op.apply(f)?;
    let trace_h = op.apply(h)?;
    let basis = &op.header.basis;
    let mut src_f = vec![0.0; width * nb];
    let mut src_h = vec![0.0; width * nb];
    for (e, (&a, &b)) in d.elements().iter().zip(f.iter().zip(h)) {
        for m in basis.support(e).filter(|&m| m < width) {
            let v = basis.hat(e, m);
            src_f[m * nb + e.node] += a * v;
            src_h[m * nb + e.node] += b * v;
        }
    }
    let q = |a: usize, b: usize| -> f64 {
        let (fa, ta) = (&src_f[a * nb..(a + 1) * nb], &trace_f[a * nb..(a + 1) * nb]);
        let (hb, sb) = (&src_h[b * nb..(b + 1) * nb], &trace_h[b * nb..(b + 1) * nb]);
        (0..nb).map(|z| ds[z] * (fa[z] * sb[z] - ta[z] * hb[z])).sum()
    };

    let mut prev = vec![0.0; width + 1];
    let mut cur = vec![0.0; width + 1];
    let mut next = vec![0.0; width + 1];
    let dt2 = dt * dt;
    for row in 1..n {
        // row + 1 is needed on columns 1..=2n - row - 1
        let last = 2 * n - row - 1;
        next.iter_mut().for_each(|v| *v = 0.0);
        for m in 1..=last {
            next[m] = cur[m + 1] + cur[m - 1] - prev[m] + dt2 * q(row, m);
        }
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(cur[n])
}
