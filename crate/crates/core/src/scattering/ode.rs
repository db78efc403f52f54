//! Adaptive Dormand–Prince 5(4) integrator for real first-order systems.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-11, atol: 1e-13, max_steps: 2_000_000 }
    }
}

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrates `y' = f(t, y)` from `t0` to `t1` (either direction) in place.
pub fn integrate<F>(mut f: F, t0: f64, t1: f64, y: &mut [f64], opts: &OdeOptions) -> Result<()>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y.len();
    let span = t1 - t0;
    if span == 0.0 || n == 0 {
        return Ok(());
    }
    let dir = span.signum();
    let mut t = t0;
    let mut h = (span.abs() * 1e-3).max(1e-8) * dir;
    let mut k = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    let mut y5 = vec![0.0; n];
    f(t, y, &mut k[0]);
    for _ in 0..opts.max_steps {
        if (t1 - t) * dir <= 0.0 {
            return Ok(());
        }
        if (t + h - t1) * dir > 0.0 {
            h = t1 - t;
        }
        for s in 1..7 {
            for i in 0..n {
                let mut acc = y[i];
                for (j, kj) in k.iter().enumerate().take(s) {
                    acc += h * A[s][j] * kj[i];
                }
                tmp[i] = acc;
            }
            let mut ks = std::mem::take(&mut k[s]);
            f(t + C[s] * h, &tmp, &mut ks);
            k[s] = ks;
        }
        let mut err = 0.0f64;
        for i in 0..n {
            let mut hi = y[i];
            let mut lo = y[i];
            for s in 0..7 {
                hi += h * B5[s] * k[s][i];
                lo += h * B4[s] * k[s][i];
            }
            y5[i] = hi;
            let sc = opts.atol + opts.rtol * y[i].abs().max(hi.abs());
            err = err.max(((hi - lo) / sc).abs());
        }
        if !err.is_finite() {
            return Err(Error::OdeFailure(format!("non-finite state at t = {t}")));
        }
        if err <= 1.0 {
            t += h;
            y.copy_from_slice(&y5);
            // First-same-as-last: stage 7 was evaluated at the new point.
            k.swap(0, 6);
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
        if h.abs() < 1e-14 * (1.0 + t.abs()) {
            return Err(Error::OdeFailure(format!("step size underflow at t = {t}")));
        }
    }
    Err(Error::OdeFailure(format!("step budget of {} exhausted", opts.max_steps)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let mut y = [1.0];
        integrate(|_, y, d| d[0] = -y[0], 0.0, 3.0, &mut y, &OdeOptions::default()).unwrap();
        assert!((y[0] - (-3.0f64).exp()).abs() < 1e-11);
    }

    #[test]
    fn harmonic_oscillator_backwards() {
        let w = 4.0;
        let mut y = [1.0, 0.0];
        integrate(|_, y, d| {
            d[0] = y[1];
            d[1] = -w * w * y[0];
        }, 0.0, -2.5, &mut y, &OdeOptions::default())
        .unwrap();
        assert!((y[0] - (w * 2.5).cos()).abs() < 1e-9);
        assert!((y[1] - w * (w * 2.5).sin()).abs() < 1e-8);
    }

    #[test]
    fn time_dependent_rhs() {
        // y' = 2t y, y(0) = 1 gives exp(t^2).
        let mut y = [1.0];
        integrate(|t, y, d| d[0] = 2.0 * t * y[0], 0.0, 1.5, &mut y, &OdeOptions::default()).unwrap();
        assert!((y[0] / 2.25f64.exp() - 1.0).abs() < 1e-10);
    }
}
