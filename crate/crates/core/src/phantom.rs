//! Synthetic permittivity maps, measurement noise, empty-chamber reference
//! data, nodal CSV import and legacy VTK export.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::Rotation3;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::fem::{MaterialField, TetElement};
use crate::inverse::{ForwardProblem, InverseError};
use crate::mesh::{Mesh, REGION_IMAGING};
use crate::scattering::{Provenance, ScatteringError, ScatteringMatrix};
use crate::{Vec3, C64};

/// Matching-liquid permittivity at 1 GHz.
pub const EPS_GEL: C64 = C64::new(44.0, -20.0);
/// Blood permittivity at 1 GHz.
pub const EPS_BLOOD: C64 = C64::new(68.0, -44.0);

#[derive(Debug, thiserror::Error)]
pub enum PhantomError {
    #[error("ellipsoid semi-axes must be positive, got {0:?}")]
    DegenerateEllipsoid([f64; 3]),
    #[error("ellipsoid point {0:?} lies outside the imaging region")]
    OutsideMesh([f64; 3]),
    #[error("permittivity {0} has positive imaginary part")]
    PositiveLoss(C64),
    #[error("{got} values for {expected} nodes")]
    Length { got: usize, expected: usize },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Scattering(#[from] ScatteringError),
    #[error(transparent)]
    Inverse(#[from] InverseError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ellipsoid {
    /// Centre (m).
    pub center: [f64; 3],
    /// Semi-axes (m) along the rotated frame.
    pub semi_axes: [f64; 3],
    /// Roll, pitch, yaw (rad) of the body frame.
    pub euler: [f64; 3],
}

impl Ellipsoid {
    pub fn validate(&self) -> Result<(), PhantomError> {
        if self.semi_axes.iter().any(|&a| !(a > 0.0)) {
            return Err(PhantomError::DegenerateEllipsoid(self.semi_axes));
        }
        Ok(())
    }

    fn rotation(&self) -> Rotation3<f64> {
        Rotation3::from_euler_angles(self.euler[0], self.euler[1], self.euler[2])
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        let q = self.rotation().inverse() * (p - Vec3::from(self.center));
        (0..3).map(|k| (q[k] / self.semi_axes[k]).powi(2)).sum::<f64>() <= 1.0
    }

    /// Points on the surface along the 26 lattice directions.
    pub fn surface_samples(&self) -> Vec<Vec3> {
        let r = self.rotation();
        let mut out = Vec::new();
        for i in -1..=1 {
            for j in -1..=1 {
                for k in -1..=1 {
                    if (i, j, k) == (0, 0, 0) {
                        continue;
                    }
                    let d = Vec3::new(i as f64, j as f64, k as f64).normalize();
                    let local = Vec3::new(d.x * self.semi_axes[0], d.y * self.semi_axes[1], d.z * self.semi_axes[2]);
                    out.push(Vec3::from(self.center) + r * local);
                }
            }
        }
        out
    }

    pub fn largest_semi_axis(&self) -> f64 {
        self.semi_axes.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum StrokeRule {
    Absolute(C64),
    /// Mean of the surrounding healthy value and blood.
    MeanWithBlood(C64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Inclusion {
    pub shape: Ellipsoid,
    pub eps: C64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stroke {
    pub shape: Ellipsoid,
    pub rule: StrokeRule,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub background: C64,
    pub head: Option<Inclusion>,
    pub stroke: Option<Stroke>,
}

impl PhantomSpec {
    pub fn gel() -> Self {
        Self { background: EPS_GEL, head: None, stroke: None }
    }
}

fn check_loss(e: C64) -> Result<(), PhantomError> {
    if e.im > 0.0 {
        return Err(PhantomError::PositiveLoss(e));
    }
    Ok(())
}

/// Whether `p` lies in an imaging-region tet (barycentric test with a
/// relative tolerance).
pub fn in_imaging_region(mesh: &Mesh, p: &Vec3) -> bool {
    mesh.tets().iter().enumerate().any(|(t, tet)| {
        if tet.region != REGION_IMAGING {
            return false;
        }
        let e = TetElement::new(mesh.tet_points(t), [1.0; 6]);
        let x0 = e.points[0];
        let lam: Vec<f64> = (1..4).map(|k| e.grads[k].dot(&(p - x0))).collect();
        let l0 = 1.0 - lam.iter().sum::<f64>();
        lam.iter().chain(std::iter::once(&l0)).all(|&l| l >= -1e-9)
    })
}

fn check_inside(mesh: &Mesh, shape: &Ellipsoid) -> Result<(), PhantomError> {
    shape.validate()?;
    for p in std::iter::once(Vec3::from(shape.center)).chain(shape.surface_samples()) {
        if !in_imaging_region(mesh, &p) {
            return Err(PhantomError::OutsideMesh([p.x, p.y, p.z]));
        }
    }
    Ok(())
}

/// Nodal `ε_r`: background, head inclusion, then stroke.
pub fn build_phantom(spec: &PhantomSpec, mesh: &Mesh) -> Result<MaterialField, PhantomError> {
    check_loss(spec.background)?;
    if let Some(h) = &spec.head {
        check_loss(h.eps)?;
        check_inside(mesh, &h.shape)?;
    }
    if let Some(s) = &spec.stroke {
        check_inside(mesh, &s.shape)?;
        let (StrokeRule::Absolute(e) | StrokeRule::MeanWithBlood(e)) = s.rule;
        check_loss(e)?;
    }
    let eps = mesh
        .nodes()
        .iter()
        .map(|p| {
            let mut e = spec.background;
            if let Some(h) = spec.head.as_ref().filter(|h| h.shape.contains(p)) {
                e = h.eps;
            }
            if let Some(s) = spec.stroke.as_ref().filter(|s| s.shape.contains(p)) {
                e = match s.rule {
                    StrokeRule::Absolute(v) => v,
                    StrokeRule::MeanWithBlood(blood) => 0.5 * (e + blood),
                };
            }
            e
        })
        .collect();
    Ok(MaterialField { eps })
}

/// Independent Gaussian perturbations of `Re S_ij` and `Im S_ij` with
/// standard deviation `level·|S_ij|`, drawn in transmitter-major order.
pub fn add_noise(s: &ScatteringMatrix, level: f64, seed: u64) -> ScatteringMatrix {
    let mut out = s.clone();
    out.provenance = Provenance::SyntheticNoisy;
    if level == 0.0 {
        return out;
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    for (rx, tx, v) in s.entries() {
        let sigma = level * v.norm();
        let dr: f64 = StandardNormal.sample(&mut rng);
        let di: f64 = StandardNormal.sample(&mut rng);
        out.set(rx, tx, v + C64::new(sigma * dr, sigma * di));
    }
    out
}

/// SHA-256 of the mesh geometry and tags.
pub fn mesh_hash(mesh: &Mesh) -> String {
    let mut h = Sha256::new();
    for p in mesh.nodes() {
        for c in p.iter() {
            h.update(c.to_le_bytes());
        }
    }
    for t in mesh.tets() {
        for n in t.nodes {
            h.update((n as u64).to_le_bytes());
        }
        h.update(t.region.to_le_bytes());
    }
    for b in mesh.boundary() {
        for n in b.nodes {
            h.update((n as u64).to_le_bytes());
        }
        h.update(b.tag.to_le_bytes());
    }
    hex(&h.finalize())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(2 * bytes.len()), |mut s, b| {
        write!(s, "{b:02x}").unwrap();
        s
    })
}

/// Cache key over everything the empty-chamber S-matrix depends on.
pub fn empty_reference_key(problem: &ForwardProblem, gel: C64) -> String {
    let mut h = Sha256::new();
    h.update(mesh_hash(&problem.mesh).as_bytes());
    let p = &problem.params;
    for v in [gel.re, gel.im, p.frequency, p.eps_ceramic.re, p.eps_ceramic.im, p.port_width, p.port_height, p.amplitude] {
        h.update(v.to_le_bytes());
    }
    hex(&h.finalize())
}

/// `S^empty` for the chamber filled with `gel`, served from
/// `cache_dir/empty-<key>.csv` when present.
pub fn empty_reference(problem: &ForwardProblem, gel: C64, cache_dir: Option<&Path>) -> Result<ScatteringMatrix, PhantomError> {
    let n = problem.n_ports();
    let f = problem.params.frequency;
    let path: Option<PathBuf> = cache_dir.map(|d| d.join(format!("empty-{}.csv", empty_reference_key(problem, gel))));
    if let Some(p) = path.as_ref().filter(|p| p.exists()) {
        return Ok(ScatteringMatrix::read_csv(p, n, Provenance::EmptyReference, f)?);
    }
    let material = MaterialField::uniform(&problem.mesh, gel);
    let mut s = problem.forward(&material, &(0..n).collect::<Vec<_>>())?.smatrix;
    s.provenance = Provenance::EmptyReference;
    if let Some(p) = path {
        if let Some(dir) = p.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let tmp = p.with_extension("csv.tmp");
        s.write_csv(&tmp)?;
        std::fs::rename(&tmp, &p)?;
    }
    Ok(s)
}

/// Nodal `ε_r` from CSV `node_id,re,im` with 1-based node ids; every node
/// must appear exactly once.
pub fn parse_nodal_csv(text: &str, n_nodes: usize) -> Result<MaterialField, PhantomError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "node_id,re,im" => {}
        _ => return Err(PhantomError::Parse { line: 1, msg: "expected header node_id,re,im".into() }),
    }
    let mut eps = vec![None; n_nodes];
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| PhantomError::Parse { line: i + 1, msg };
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 3 {
            return Err(err(format!("expected 3 fields, found {}", f.len())));
        }
        let id: usize = f[0].parse().map_err(|_| err(format!("bad node id '{}'", f[0])))?;
        if id == 0 || id > n_nodes {
            return Err(err(format!("node {id} outside 1..={n_nodes}")));
        }
        let num = |x: &str| x.parse::<f64>().map_err(|_| err(format!("bad number '{x}'")));
        if eps[id - 1].replace(C64::new(num(f[1])?, num(f[2])?)).is_some() {
            return Err(err(format!("node {id} listed twice")));
        }
    }
    let eps = eps
        .into_iter()
        .enumerate()
        .map(|(k, e)| e.ok_or(PhantomError::Parse { line: 0, msg: format!("node {} missing", k + 1) }))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MaterialField { eps })
}

pub fn read_nodal_csv(path: impl AsRef<Path>, n_nodes: usize) -> Result<MaterialField, PhantomError> {
    parse_nodal_csv(&std::fs::read_to_string(path)?, n_nodes)
}

pub fn nodal_csv(m: &MaterialField) -> String {
    let mut s = String::from("node_id,re,im\n");
    for (k, e) in m.eps.iter().enumerate() {
        writeln!(s, "{},{:e},{:e}", k + 1, e.re, e.im).unwrap();
    }
    s
}

/// Legacy ASCII VTK unstructured grid with one `SCALARS` block per array.
pub fn vtk_string(mesh: &Mesh, arrays: &[(&str, &[f64])]) -> Result<String, PhantomError> {
    let n = mesh.n_nodes();
    if let Some((_, a)) = arrays.iter().find(|(_, a)| a.len() != n) {
        return Err(PhantomError::Length { got: a.len(), expected: n });
    }
    let mut s = String::from("# vtk DataFile Version 3.0\nmaxtomo\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    writeln!(s, "POINTS {n} double").unwrap();
    for p in mesh.nodes() {
        writeln!(s, "{:e} {:e} {:e}", p.x, p.y, p.z).unwrap();
    }
    let nt = mesh.n_tets();
    writeln!(s, "CELLS {nt} {}", 5 * nt).unwrap();
    for t in mesh.tets() {
        writeln!(s, "4 {} {} {} {}", t.nodes[0], t.nodes[1], t.nodes[2], t.nodes[3]).unwrap();
    }
    writeln!(s, "CELL_TYPES {nt}").unwrap();
    for _ in 0..nt {
        s.push_str("10\n");
    }
    if !arrays.is_empty() {
        writeln!(s, "POINT_DATA {n}").unwrap();
        for (name, a) in arrays {
            writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default").unwrap();
            for v in *a {
                writeln!(s, "{v:e}").unwrap();
            }
        }
    }
    Ok(s)
}

pub fn write_vtk(mesh: &Mesh, arrays: &[(&str, &[f64])], path: impl AsRef<Path>) -> Result<(), PhantomError> {
    std::fs::write(path, vtk_string(mesh, arrays)?)?;
    Ok(())
}

/// `eps_re` and `eps_im` arrays of a material, ready for [`write_vtk`].
pub fn material_arrays(m: &MaterialField) -> (Vec<f64>, Vec<f64>) {
    (m.eps.iter().map(|e| e.re).collect(), m.eps.iter().map(|e| e.im).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::unit_cube_mesh;

    fn sphere(c: [f64; 3], r: f64) -> Ellipsoid {
        Ellipsoid { center: c, semi_axes: [r; 3], euler: [0.0; 3] }
    }

    #[test]
    fn gel_only() {
        let m = unit_cube_mesh(2, 0);
        let f = build_phantom(&PhantomSpec::gel(), &m).unwrap();
        assert!(f.eps.iter().all(|&e| e == C64::new(44.0, -20.0)));
    }

    #[test]
    fn mean_with_blood() {
        let m = unit_cube_mesh(4, 0);
        let spec = PhantomSpec {
            background: EPS_GEL,
            head: Some(Inclusion { shape: sphere([0.5; 3], 0.45), eps: C64::new(50.0, -30.0) }),
            stroke: Some(Stroke { shape: sphere([0.5; 3], 0.2), rule: StrokeRule::MeanWithBlood(EPS_BLOOD) }),
        };
        let f = build_phantom(&spec, &m).unwrap();
        let centre = m.nodes().iter().position(|p| (p - Vec3::new(0.5, 0.5, 0.5)).norm() < 1e-12).unwrap();
        assert_eq!(f.eps[centre], C64::new(59.0, -37.0));
        let corner = m.nodes().iter().position(|p| p.norm() < 1e-12).unwrap();
        assert_eq!(f.eps[corner], EPS_GEL);
        assert!(f.eps.iter().all(|e| e.im <= 0.0));
    }

    #[test]
    fn rejects_bad_ellipsoids() {
        let m = unit_cube_mesh(2, 0);
        let mut spec = PhantomSpec::gel();
        spec.stroke = Some(Stroke { shape: sphere([0.5; 3], 0.0), rule: StrokeRule::Absolute(EPS_BLOOD) });
        assert!(matches!(build_phantom(&spec, &m), Err(PhantomError::DegenerateEllipsoid(_))));
        spec.stroke = Some(Stroke { shape: sphere([0.9, 0.5, 0.5], 0.2), rule: StrokeRule::Absolute(EPS_BLOOD) });
        assert!(matches!(build_phantom(&spec, &m), Err(PhantomError::OutsideMesh(_))));
        spec.stroke = Some(Stroke { shape: sphere([0.5; 3], 0.2), rule: StrokeRule::Absolute(C64::new(1.0, 1.0)) });
        assert!(matches!(build_phantom(&spec, &m), Err(PhantomError::PositiveLoss(_))));
    }

    #[test]
    fn rotated_ellipsoid() {
        let e = Ellipsoid { center: [0.0; 3], semi_axes: [2.0, 0.5, 0.5], euler: [0.0, 0.0, std::f64::consts::FRAC_PI_2] };
        assert!(e.contains(&Vec3::new(0.0, 1.9, 0.0)));
        assert!(!e.contains(&Vec3::new(1.9, 0.0, 0.0)));
    }

    fn sample_matrix(n: usize) -> ScatteringMatrix {
        let mut s = ScatteringMatrix::empty(n, Provenance::Simulated, 1e9);
        for tx in 0..n {
            for rx in 0..n {
                let phase = 0.37 * (rx * n + tx) as f64;
                s.set(rx, tx, C64::from_polar(1.0, phase));
            }
        }
        s
    }

    #[test]
    fn noise_contract() {
        let s = sample_matrix(4);
        let z = add_noise(&s, 0.0, 7);
        assert_eq!(z.entries().collect::<Vec<_>>(), s.entries().collect::<Vec<_>>());
        assert_eq!(z.provenance, Provenance::SyntheticNoisy);
        let a = add_noise(&s, 0.1, 42);
        let b = add_noise(&s, 0.1, 42);
        assert_eq!(a, b);
        assert_ne!(a, add_noise(&s, 0.1, 43));
    }

    #[test]
    fn noise_standard_deviation() {
        let s = sample_matrix(100);
        let noisy = add_noise(&s, 0.1, 1);
        let d: Vec<f64> = s.entries().map(|(rx, tx, v)| noisy.get(rx, tx).unwrap().re - v.re).collect();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (d.len() - 1) as f64;
        let std = var.sqrt();
        assert!((0.097..=0.103).contains(&std), "{std}");
    }

    #[test]
    fn nodal_csv_round_trip() {
        let m = MaterialField { eps: vec![C64::new(44.0, -20.0), C64::new(1.0 / 3.0, -1e-300), C64::new(-0.0, 0.0)] };
        let back = parse_nodal_csv(&nodal_csv(&m), 3).unwrap();
        assert_eq!(back, m);
        assert!(parse_nodal_csv("node_id,re,im\n1,0,0\n", 2).is_err());
        assert!(parse_nodal_csv("node_id,re,im\n1,0,0\n1,0,0\n", 1).is_err());
    }

    type Vtk = (usize, Vec<Vec<usize>>, Vec<u32>, Vec<(String, Vec<f64>)>);

    fn read_vtk(text: &str) -> Vtk {
        let mut lines = text.lines();
        let mut n_points = 0;
        let mut cells = Vec::new();
        let mut types = Vec::new();
        let mut arrays = Vec::new();
        while let Some(l) = lines.next() {
            let w: Vec<&str> = l.split_whitespace().collect();
            match w.first().copied() {
                Some("POINTS") => {
                    n_points = w[1].parse().unwrap();
                    for _ in 0..n_points {
                        lines.next();
                    }
                }
                Some("CELLS") => {
                    for _ in 0..w[1].parse::<usize>().unwrap() {
                        let c: Vec<usize> = lines.next().unwrap().split_whitespace().map(|x| x.parse().unwrap()).collect();
                        cells.push(c[1..].to_vec());
                    }
                }
                Some("CELL_TYPES") => {
                    for _ in 0..w[1].parse::<usize>().unwrap() {
                        types.push(lines.next().unwrap().trim().parse().unwrap());
                    }
                }
                Some("SCALARS") => {
                    lines.next();
                    let v = (0..n_points).map(|_| lines.next().unwrap().trim().parse().unwrap()).collect();
                    arrays.push((w[1].to_string(), v));
                }
                _ => {}
            }
        }
        (n_points, cells, types, arrays)
    }

    #[test]
    fn vtk_single_tet() {
        use crate::mesh::{BoundaryTri, Tet, TET_FACES};
        let nodes = vec![Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z()];
        let boundary = TET_FACES.iter().map(|f| BoundaryTri { nodes: *f, tag: 0 }).collect();
        let m = Mesh::new(nodes, vec![Tet { nodes: [0, 1, 2, 3], region: 0 }], boundary).unwrap();
        let vals: Vec<f64> = (0..m.n_nodes()).map(|k| 1.0 / (k as f64 + 3.0) + 1e-17 * k as f64).collect();
        let text = vtk_string(&m, &[("eps_re", &vals)]).unwrap();
        let (np, cells, types, arrays) = read_vtk(&text);
        assert_eq!(np, 4);
        assert_eq!(cells, vec![vec![0, 1, 2, 3]]);
        assert!(types.iter().all(|&t| t == 10));
        assert_eq!(arrays[0].0, "eps_re");
        assert_eq!(arrays[0].1, vals);
        assert!(vtk_string(&m, &[("bad", &vals[1..])]).is_err());
    }
}
