//! Scattering parameters `S_ij = ∫_Γᵢ conj(E_j)·Eᵢ⁰ / ∫_Γᵢ |Eᵢ⁰|²`
//! (`i` receiver, `j` transmitter).

use std::fmt::Write as _;
use std::path::Path;

use faer::MatRef;
use serde::{Deserialize, Serialize};

use crate::fem::{PortExcitation, PortSet};
use crate::mesh::Mesh;
use crate::quadrature::tri_degree4;
use crate::{CVec3, Vec3, C64};

#[derive(Debug, thiserror::Error)]
pub enum ScatteringError {
    #[error("no solved field for transmitter {0}")]
    MissingColumn(usize),
    #[error("opposite coefficient S[{rx}][{tx}] is zero or masked")]
    ZeroOpposite { rx: usize, tx: usize },
    #[error("{0} solution columns for {1} transmitters")]
    Dimension(usize, usize),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Simulated,
    SyntheticNoisy,
    EmptyReference,
    Imported,
}

/// `N × N` scattering matrix with a validity mask.
#[derive(Clone, Debug, PartialEq)]
pub struct ScatteringMatrix {
    n: usize,
    values: Vec<C64>,
    mask: Vec<bool>,
    pub provenance: Provenance,
    pub frequency: f64,
}

impl ScatteringMatrix {
    pub fn empty(n: usize, provenance: Provenance, frequency: f64) -> Self {
        Self { n, values: vec![C64::new(0.0, 0.0); n * n], mask: vec![false; n * n], provenance, frequency }
    }

    pub fn n_ports(&self) -> usize {
        self.n
    }

    /// `S[rx][tx]`, zero-based, `None` when masked.
    pub fn get(&self, rx: usize, tx: usize) -> Option<C64> {
        let k = rx * self.n + tx;
        self.mask[k].then_some(self.values[k])
    }

    pub fn set(&mut self, rx: usize, tx: usize, v: C64) {
        let k = rx * self.n + tx;
        self.values[k] = v;
        self.mask[k] = true;
    }

    pub fn unset(&mut self, rx: usize, tx: usize) {
        let k = rx * self.n + tx;
        self.values[k] = C64::new(0.0, 0.0);
        self.mask[k] = false;
    }

    /// Valid `(rx, tx, S)` entries, transmitter-major.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.n).flat_map(move |tx| (0..self.n).filter_map(move |rx| self.get(rx, tx).map(|v| (rx, tx, v))))
    }

    pub fn transmitters(&self) -> Vec<usize> {
        (0..self.n).filter(|&tx| (0..self.n).any(|rx| self.get(rx, tx).is_some())).collect()
    }

    /// CSV with header `tx,rx,re,im` and 1-based port tags.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("tx,rx,re,im\n");
        for (rx, tx, v) in self.entries() {
            writeln!(s, "{},{},{:.16e},{:.16e}", tx + 1, rx + 1, v.re, v.im).unwrap();
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), ScatteringError> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn from_csv(text: &str, n: usize, provenance: Provenance, frequency: f64) -> Result<Self, ScatteringError> {
        let mut s = Self::empty(n, provenance, frequency);
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == "tx,rx,re,im" => {}
            _ => return Err(ScatteringError::Parse { line: 1, msg: "expected header tx,rx,re,im".into() }),
        }
        for (i, line) in lines {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let err = |msg: String| ScatteringError::Parse { line: line_no, msg };
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 4 {
                return Err(err(format!("expected 4 fields, found {}", f.len())));
            }
            let port = |x: &str| -> Result<usize, ScatteringError> {
                let p: usize = x.parse().map_err(|_| err(format!("bad port '{x}'")))?;
                if p == 0 || p > n {
                    return Err(err(format!("port {p} outside 1..={n}")));
                }
                Ok(p - 1)
            };
            let num = |x: &str| x.parse::<f64>().map_err(|_| err(format!("bad number '{x}'")));
            let (tx, rx) = (port(f[0])?, port(f[1])?);
            s.set(rx, tx, C64::new(num(f[2])?, num(f[3])?));
        }
        Ok(s)
    }

    pub fn read_csv(path: impl AsRef<Path>, n: usize, provenance: Provenance, frequency: f64) -> Result<Self, ScatteringError> {
        Self::from_csv(&std::fs::read_to_string(path)?, n, provenance, frequency)
    }
}

/// `S` for solved fields; column `k` of `solutions` (unknowns in the free
/// numbering) belongs to zero-based port `transmitters[k]`.
pub fn compute_smatrix(
    ports: &PortSet,
    solutions: MatRef<'_, C64>,
    transmitters: &[usize],
    frequency: f64,
) -> Result<ScatteringMatrix, ScatteringError> {
    if solutions.ncols() != transmitters.len() {
        return Err(ScatteringError::Dimension(solutions.ncols(), transmitters.len()));
    }
    let n = ports.len();
    let mut s = ScatteringMatrix::empty(n, Provenance::Simulated, frequency);
    for (k, &tx) in transmitters.iter().enumerate() {
        if tx >= n {
            return Err(ScatteringError::MissingColumn(tx));
        }
        let u: Vec<C64> = (0..solutions.nrows()).map(|r| solutions[(r, k)]).collect();
        for (rx, p) in ports.ports.iter().enumerate() {
            s.set(rx, tx, p.project(&u).conj() / p.norm_sq);
        }
    }
    Ok(s)
}

/// `∫_Γᵢ conj(E)·Eᵢ⁰ / ∫_Γᵢ |Eᵢ⁰|²` for an arbitrary field, with the same
/// triangle rule as the discrete mode loads.
pub fn port_overlap(mesh: &Mesh, port: &PortExcitation, field: impl Fn(&Vec3) -> CVec3) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for tri in mesh.port_triangles(port.tag) {
        let p = tri.nodes.map(|n| mesh.nodes()[n]);
        let area = 0.5 * (p[1] - p[0]).cross(&(p[2] - p[0])).norm();
        for (b, w) in tri_degree4() {
            let x = p[0] * b[0] + p[1] * b[1] + p[2] * b[2];
            let e = field(&x);
            let m = port.mode.field(&x);
            acc += w * area * (e.x.conj() * m.x + e.y.conj() * m.y + e.z.conj() * m.z);
        }
    }
    acc / port.norm_sq
}

/// Transmitter `tx`'s coefficients divided by the one at receiver `opposite`.
pub fn normalize_row(s: &ScatteringMatrix, tx: usize, opposite: usize) -> Result<Vec<Option<C64>>, ScatteringError> {
    let d = match s.get(opposite, tx) {
        Some(v) if v.norm() > 0.0 => v,
        _ => return Err(ScatteringError::ZeroOpposite { rx: opposite, tx }),
    };
    Ok((0..s.n_ports())
        .map(|rx| if rx == opposite { s.get(rx, tx).map(|_| C64::new(1.0, 0.0)) } else { s.get(rx, tx).map(|v| v / d) })
        .collect())
}

/// `20 log₁₀ |S|`; zero maps to `-∞`.
pub fn magnitude_db(s: C64) -> f64 {
    let m = s.norm();
    if m == 0.0 {
        f64::NEG_INFINITY
    } else {
        20.0 * m.log10()
    }
}
