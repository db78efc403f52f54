use std::io::{BufReader, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::basis::{BasisElement, BasisSpec};
use super::solver::{TimeGrid, WaveSolver};
use crate::error::{Error, Result};
use crate::geometry::{BoundaryGeometry, MetricGrid};
use crate::io::{fmt, write_atomic, write_csv};

const MAGIC: &[u8; 8] = b"WAVEBCRO";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseHeader {
    pub grid_hash: String,
    pub boundary_hash: String,
    pub dim: usize,
    pub nodes: Vec<usize>,
    pub dt: f64,
    /// Horizon `T`; traces cover `[0, 2T]`.
    pub horizon: f64,
    pub steps_to_horizon: usize,
    pub basis: BasisSpec,
    pub boundary: BoundaryGeometry,
}

/// Discrete response operator: column `j` is the boundary trace of the
/// response to basis element `j`, step-major over `[0, 2T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseOperator {
    pub header: ResponseHeader,
    pub matrix: DMatrix<f64>,
}

impl ResponseOperator {
    pub fn time_grid(&self) -> TimeGrid {
        TimeGrid { dt: self.header.dt, n: self.header.steps_to_horizon }
    }

    pub fn boundary_len(&self) -> usize {
        self.header.boundary.len()
    }

    pub fn elements(&self) -> Vec<BasisElement> {
        self.header.basis.elements(self.boundary_len(), self.header.steps_to_horizon)
    }

    pub fn n_basis(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn trace(&self, j: usize) -> &[f64] {
        let rows = self.matrix.nrows();
        &self.matrix.as_slice()[j * rows..(j + 1) * rows]
    }

    /// Trace of the response to `sum_j coeffs[j] * element_j`.
    pub fn apply(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        if coeffs.len() != self.n_basis() {
            return Err(Error::BasisMismatch(format!(
                "{} coefficients for {} basis elements",
                coeffs.len(),
                self.n_basis()
            )));
        }
        let mut out = vec![0.0; self.matrix.nrows()];
        for (j, &a) in coeffs.iter().enumerate() {
            if a != 0.0 {
                for (o, t) in out.iter_mut().zip(self.trace(j)) {
                    *o += a * t;
                }
            }
        }
        Ok(out)
    }
}

/// One forward solve per basis element, in parallel, collected in order.
pub fn assemble_response(
    g: &MetricGrid,
    basis: &BasisSpec,
    horizon: f64,
    cfl: f64,
) -> Result<ResponseOperator> {
    let tg = TimeGrid::for_horizon(g, horizon, cfl)?;
    let solver = WaveSolver::new(g, tg.dt, cfl)?;
    let nb = g.boundary.len();
    if let Some(nodes) = &basis.nodes {
        if let Some(&bad) = nodes.iter().find(|&&b| b >= nb) {
            return Err(Error::BasisMismatch(format!("basis node {bad} is not a boundary node")));
        }
        let mut sorted = nodes.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != nodes.len() {
            log::warn!("basis lists duplicate boundary nodes; columns will repeat");
        }
    }
    let elements = basis.elements(nb, tg.n);
    let steps = 2 * tg.n;
    let columns: Vec<Vec<f64>> = elements
        .par_iter()
        .map(|e| {
            let sup = basis.support(e);
            solver.traces(steps, |m, f| {
                if sup.contains(&m) {
                    f[e.node] = basis.hat(e, m);
                }
            })
        })
        .collect();
    let rows = (steps + 1) * nb;
    let mut data = Vec::with_capacity(rows * elements.len());
    for c in &columns {
        data.extend_from_slice(c);
    }
    drop(columns);
    let bg = g.boundary_geometry();
    let header = ResponseHeader {
        grid_hash: g.hash(),
        boundary_hash: bg.hash(),
        dim: g.dim,
        nodes: if g.dim == 1 { vec![g.nx] } else { vec![g.nx, g.ny] },
        dt: tg.dt,
        horizon: tg.horizon(),
        steps_to_horizon: tg.n,
        basis: basis.clone(),
        boundary: bg,
    };
    Ok(ResponseOperator { header, matrix: DMatrix::from_vec(rows, elements.len(), data) })
}

struct HashingWriter<'a, W: Write> {
    inner: &'a mut W,
    hasher: Sha256,
}

impl<W: Write> Write for HashingWriter<'_, W> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

/// Binary layout: magic, version, JSON header, shape, row-major `f64` LE
/// matrix, SHA-256 of everything before it.
pub fn write_response(path: &Path, op: &ResponseOperator) -> Result<()> {
    let header = serde_json::to_vec(&op.header)
        .map_err(|e| Error::CorruptFile(format!("header encoding: {e}")))?;
    write_atomic(path, |w| {
        let mut hw = HashingWriter { inner: w, hasher: Sha256::new() };
        hw.write_all(MAGIC)?;
        hw.write_all(&VERSION.to_le_bytes())?;
        hw.write_all(&(header.len() as u64).to_le_bytes())?;
        hw.write_all(&header)?;
        let (rows, cols) = op.matrix.shape();
        hw.write_all(&(rows as u64).to_le_bytes())?;
        hw.write_all(&(cols as u64).to_le_bytes())?;
        let mut row = Vec::with_capacity(cols * 8);
        for r in 0..rows {
            row.clear();
            for c in 0..cols {
                row.extend_from_slice(&op.matrix[(r, c)].to_le_bytes());
            }
            hw.write_all(&row)?;
        }
        let digest = hw.hasher.finalize();
        w.write_all(&digest)?;
        Ok(())
    })
}

fn read_exact_hashed<R: Read>(r: &mut R, h: &mut Sha256, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::CorruptFile("truncated".into()),
        _ => Error::Io(e),
    })?;
    h.update(&*buf);
    Ok(())
}

pub fn read_response(path: &Path) -> Result<ResponseOperator> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut h = Sha256::new();
    let mut magic = [0u8; 8];
    read_exact_hashed(&mut r, &mut h, &mut magic)?;
    if &magic != MAGIC {
        return Err(Error::CorruptFile("bad magic".into()));
    }
    let mut u32b = [0u8; 4];
    read_exact_hashed(&mut r, &mut h, &mut u32b)?;
    if u32::from_le_bytes(u32b) != VERSION {
        return Err(Error::CorruptFile("unsupported version".into()));
    }
    let mut u64b = [0u8; 8];
    read_exact_hashed(&mut r, &mut h, &mut u64b)?;
    let hlen = u64::from_le_bytes(u64b) as usize;
    if hlen > 1 << 30 {
        return Err(Error::CorruptFile("header length".into()));
    }
    let mut hbytes = vec![0u8; hlen];
    read_exact_hashed(&mut r, &mut h, &mut hbytes)?;
    let header: ResponseHeader = serde_json::from_slice(&hbytes)
        .map_err(|e| Error::CorruptFile(format!("header: {e}")))?;
    read_exact_hashed(&mut r, &mut h, &mut u64b)?;
    let rows = u64::from_le_bytes(u64b) as usize;
    read_exact_hashed(&mut r, &mut h, &mut u64b)?;
    let cols = u64::from_le_bytes(u64b) as usize;
    let expected_rows = (2 * header.steps_to_horizon + 1) * header.boundary.len();
    if rows != expected_rows {
        return Err(Error::CorruptFile(format!("{rows} rows, header implies {expected_rows}")));
    }
    let mut matrix = DMatrix::<f64>::zeros(rows, cols);
    let mut row = vec![0u8; cols * 8];
    for i in 0..rows {
        read_exact_hashed(&mut r, &mut h, &mut row)?;
        for (j, chunk) in row.chunks_exact(8).enumerate() {
            matrix[(i, j)] = f64::from_le_bytes(chunk.try_into().unwrap());
        }
    }
    let mut digest = [0u8; 32];
    r.read_exact(&mut digest).map_err(|_| Error::CorruptFile("missing checksum".into()))?;
    if digest[..] != h.finalize()[..] {
        return Err(Error::CorruptFile("checksum mismatch".into()));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::CorruptFile("trailing bytes".into()));
    }
    Ok(ResponseOperator { header, matrix })
}

/// Reads a response operator and checks it was assembled on `grid_hash`.
pub fn read_response_for(path: &Path, grid_hash: &str) -> Result<ResponseOperator> {
    let op = read_response(path)?;
    if op.header.grid_hash != grid_hash {
        return Err(Error::HashMismatch {
            expected: grid_hash.to_string(),
            found: op.header.grid_hash.clone(),
        });
    }
    Ok(op)
}

/// Long-format debug export: one row per nonzero trace sample.
pub fn write_response_csv(path: &Path, op: &ResponseOperator) -> Result<()> {
    let nb = op.boundary_len();
    let rows = (0..op.n_basis()).flat_map(|j| {
        op.trace(j).iter().enumerate().filter(|(_, v)| **v != 0.0).map(move |(i, v)| {
            vec![j.to_string(), (i / nb).to_string(), (i % nb).to_string(), fmt(*v)]
        })
    });
    write_csv(path, &["basis", "step", "boundary_node", "value"], rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, DomainSpec, SpeedField};

    fn small() -> (MetricGrid, ResponseOperator) {
        let g = build_grid(&DomainSpec::interval(1.0, 21, SpeedField::Constant { c: 1.0 })).unwrap();
        let op = assemble_response(&g, &BasisSpec::with_stride(4), 0.6, 0.5).unwrap();
        (g, op)
    }

    #[test]
    fn shape_and_causality() {
        let (_, op) = small();
        let tg = op.time_grid();
        assert_eq!(op.matrix.nrows(), (2 * tg.n + 1) * 2);
        assert_eq!(op.n_basis(), op.elements().len());
        // the far-end trace stays negligible until the pulse can arrive
        let e0 = op.elements()[0];
        assert_eq!(e0.node, 0);
        let far: Vec<f64> = op.trace(0).iter().skip(1).step_by(2).copied().collect();
        let peak = op.trace(0).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let start = e0.center - op.header.basis.stride;
        let arrival = start + ((1.0 - 3.0 * 0.05) / tg.dt) as usize;
        assert!(far[..arrival].iter().all(|v| v.abs() <= 1e-3 * peak));
        assert!(far[arrival + 12..].iter().any(|v| v.abs() > 1e-2 * peak));
    }

    #[test]
    fn csv_export_is_written() {
        let (_, op) = small();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        write_response_csv(&p, &op).unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        assert!(text.starts_with("basis,step,boundary_node,value\n"));
    }

    #[test]
    fn persistence_errors() {
        let (g, op) = small();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.bin");
        write_response(&p, &op).unwrap();
        let back = read_response_for(&p, &g.hash()).unwrap();
        assert_eq!(back, op);
        let other = build_grid(&DomainSpec::interval(1.0, 21, SpeedField::Constant { c: 1.1 })).unwrap();
        assert!(matches!(read_response_for(&p, &other.hash()), Err(Error::HashMismatch { .. })));
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 40]).unwrap();
        assert!(matches!(read_response(&p), Err(Error::CorruptFile(_))));
        let mut flipped = bytes.clone();
        let mid = flipped.len() / 2;
        flipped[mid] ^= 1;
        std::fs::write(&p, &flipped).unwrap();
        assert!(matches!(read_response(&p), Err(Error::CorruptFile(_))));
    }
}
