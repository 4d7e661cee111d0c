//! Structured tetrahedral mesh of a cylindrical imaging chamber with
//! rectangular port patches on the lateral wall.
//!
//! The disk cross-section is triangulated ring by ring, with the outer ring
//! nodes placed so that port edges fall exactly on mesh lines. The disk is
//! extruded through horizontal layers whose breakpoints include every port's
//! bottom and top and the mid-planes between rings. Each prism is split into
//! three tets using the global 2D node order, which keeps neighbouring prisms
//! conforming.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use super::{BoundaryTri, Mesh, MeshError, Tet, REGION_IMAGING, TAG_ABSORBING, TAG_METAL};
use crate::fem::PortFrame;
use crate::Vec3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChamberSpec {
    /// Cylinder radius (m).
    pub radius: f64,
    /// Cylinder height (m).
    pub height: f64,
    pub n_rings: usize,
    pub antennas_per_ring: usize,
    /// Port extent along the azimuth (m), the TE10 broad side.
    pub port_width: f64,
    /// Port extent along the cylinder axis (m).
    pub port_height: f64,
    /// Target edge length (m).
    pub mesh_size: f64,
}

impl ChamberSpec {
    pub fn n_ports(&self) -> usize {
        self.n_rings * self.antennas_per_ring
    }

    pub fn validate(&self) -> Result<(), MeshError> {
        let bad = |m: String| Err(MeshError::Infeasible(m));
        if !(self.radius > 0.0 && self.height > 0.0) {
            return bad(format!("radius {} and height {} must be positive", self.radius, self.height));
        }
        if self.n_rings == 0 || self.antennas_per_ring == 0 {
            return bad("at least one ring with one antenna is required".into());
        }
        if !(self.port_width > 0.0 && self.port_height > 0.0 && self.mesh_size > 0.0) {
            return bad("port dimensions and mesh size must be positive".into());
        }
        let arc = TAU * self.radius / self.antennas_per_ring as f64;
        if self.port_width >= arc {
            return bad(format!(
                "port width {} overlaps neighbours (azimuthal spacing {arc})",
                self.port_width
            ));
        }
        let pitch = self.height / self.n_rings as f64;
        if self.port_height >= pitch {
            return bad(format!("port height {} overlaps neighbouring rings (ring spacing {pitch})", self.port_height));
        }
        if self.mesh_size > self.port_width.min(self.port_height) || self.mesh_size >= self.radius {
            return bad(format!("mesh size {} too coarse to resolve the ports", self.mesh_size));
        }
        Ok(())
    }
}

/// Ring and port geometry of a generated chamber, derived from its spec.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChamberLayout {
    pub spec: ChamberSpec,
    /// Height of each ring's port centres.
    pub ring_z: Vec<f64>,
}

impl ChamberLayout {
    pub fn new(spec: &ChamberSpec) -> Self {
        let pitch = spec.height / spec.n_rings as f64;
        let ring_z = (0..spec.n_rings).map(|r| pitch * (r as f64 + 0.5)).collect();
        Self { spec: spec.clone(), ring_z }
    }

    pub fn n_ports(&self) -> usize {
        self.spec.n_ports()
    }

    /// Port tag (1-based) of antenna `k` on ring `r`.
    pub fn tag(&self, ring: usize, k: usize) -> usize {
        ring * self.spec.antennas_per_ring + k + 1
    }

    pub fn ring_of(&self, tag: usize) -> usize {
        (tag - 1) / self.spec.antennas_per_ring
    }

    pub fn azimuth_index(&self, tag: usize) -> usize {
        (tag - 1) % self.spec.antennas_per_ring
    }

    pub fn port_azimuth(&self, tag: usize) -> f64 {
        TAU * self.azimuth_index(tag) as f64 / self.spec.antennas_per_ring as f64
    }

    /// The receiver on the same ring directly across the chamber.
    pub fn opposite(&self, tag: usize) -> usize {
        let n = self.spec.antennas_per_ring;
        self.tag(self.ring_of(tag), (self.azimuth_index(tag) + n / 2) % n)
    }

    /// Plane between ring `r` and ring `r + 1`.
    pub fn gap_plane(&self, r: usize) -> f64 {
        0.5 * (self.ring_z[r] + self.ring_z[r + 1])
    }

    pub fn port_frame(&self, tag: usize) -> PortFrame {
        PortFrame::Cylindrical {
            radius: self.spec.radius,
            phi: self.port_azimuth(tag),
            z: self.ring_z[self.ring_of(tag)],
            a: self.spec.port_width,
            b: self.spec.port_height,
        }
    }

    pub fn port_frames(&self) -> Vec<PortFrame> {
        (1..=self.n_ports()).map(|t| self.port_frame(t)).collect()
    }
}

/// Wrap an angle into `[-π, π)`.
fn wrap(a: f64) -> f64 {
    (a + PI).rem_euclid(TAU) - PI
}

fn subdivide(from: f64, to: f64, n: usize, out: &mut Vec<f64>) {
    for i in 0..n {
        out.push(from + (to - from) * i as f64 / n as f64);
    }
}

fn outer_angles(spec: &ChamberSpec) -> Vec<f64> {
    let n = spec.antennas_per_ring;
    let pitch = TAU / n as f64;
    let theta = spec.port_width / spec.radius;
    let h = spec.mesh_size;
    let n_port = ((spec.port_width / h).ceil() as usize).max(2);
    let gap_len = spec.radius * (pitch - theta);
    let n_gap = ((gap_len / h).ceil() as usize).max(1);
    let mut angles = Vec::with_capacity(n * (n_port + n_gap));
    for k in 0..n {
        let c = pitch * k as f64;
        subdivide(c - 0.5 * theta, c + 0.5 * theta, n_port, &mut angles);
        subdivide(c + 0.5 * theta, c + pitch - 0.5 * theta, n_gap, &mut angles);
    }
    let mut angles: Vec<f64> = angles.into_iter().map(|a| a.rem_euclid(TAU)).collect();
    angles.sort_by(f64::total_cmp);
    angles
}

/// Triangulate the strip between two closed rings of nodes by an angular merge.
fn zip_rings(inner: &[(usize, f64)], outer: &[(usize, f64)], tris: &mut Vec<[usize; 3]>) {
    let (p, q) = (inner.len(), outer.len());
    let a0 = inner[0].1;
    let j0 = (0..q)
        .min_by(|&x, &y| wrap(outer[x].1 - a0).abs().total_cmp(&wrap(outer[y].1 - a0).abs()))
        .unwrap();
    let a = |s: usize| if s == p { TAU } else { (inner[s].1 - a0).rem_euclid(TAU) };
    let b0 = wrap(outer[j0].1 - a0);
    let b = |t: usize| {
        if t == q {
            b0 + TAU
        } else {
            b0 + (outer[(j0 + t) % q].1 - outer[j0].1).rem_euclid(TAU)
        }
    };
    let (mut s, mut t) = (0, 0);
    while s < p || t < q {
        let vi = inner[s % p].0;
        let vo = outer[(j0 + t) % q].0;
        let advance_inner = if s == p {
            false
        } else if t == q {
            true
        } else {
            a(s + 1) < b(t + 1)
        };
        if advance_inner {
            tris.push([vi, inner[(s + 1) % p].0, vo]);
            s += 1;
        } else {
            tris.push([vi, outer[(j0 + t + 1) % q].0, vo]);
            t += 1;
        }
    }
}

struct Disk {
    points: Vec<(f64, f64)>,
    tris: Vec<[usize; 3]>,
    /// Outer ring node ids in increasing angle.
    outer: Vec<(usize, f64)>,
}

fn triangulate_disk(spec: &ChamberSpec) -> Disk {
    let r = spec.radius;
    let h = spec.mesh_size;
    let n_rings = ((r / h).ceil() as usize).max(2);
    let mut points = vec![(0.0, 0.0)];
    let mut rings: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n_rings);
    for m in 1..=n_rings {
        let rm = r * m as f64 / n_rings as f64;
        let angles: Vec<f64> = if m == n_rings {
            outer_angles(spec)
        } else {
            let n = ((TAU * rm / h).round() as usize).max(6);
            // stagger successive rings
            let offset = if m % 2 == 0 { PI / n as f64 } else { 0.0 };
            (0..n).map(|i| (offset + TAU * i as f64 / n as f64).rem_euclid(TAU)).collect()
        };
        let mut ring = Vec::with_capacity(angles.len());
        for a in angles {
            ring.push((points.len(), a));
            points.push((rm * a.cos(), rm * a.sin()));
        }
        rings.push(ring);
    }
    let mut tris = Vec::new();
    let first = &rings[0];
    for i in 0..first.len() {
        tris.push([0, first[i].0, first[(i + 1) % first.len()].0]);
    }
    for m in 1..rings.len() {
        zip_rings(&rings[m - 1], &rings[m], &mut tris);
    }
    let outer = rings.pop().unwrap();
    Disk { points, tris, outer }
}

fn z_layers(spec: &ChamberSpec, layout: &ChamberLayout) -> Vec<f64> {
    let mut breaks = vec![0.0, spec.height];
    for (r, &z) in layout.ring_z.iter().enumerate() {
        breaks.push(z - 0.5 * spec.port_height);
        breaks.push(z + 0.5 * spec.port_height);
        if r + 1 < layout.ring_z.len() {
            breaks.push(layout.gap_plane(r));
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-12 * spec.height);
    let mut z = Vec::new();
    for w in breaks.windows(2) {
        let n = (((w[1] - w[0]) / spec.mesh_size).ceil() as usize).max(1);
        subdivide(w[0], w[1], n, &mut z);
    }
    z.push(spec.height);
    z
}

/// Generate the chamber mesh: lateral and bottom walls metallic (tag 0), top
/// absorbing (tag -1), ports tagged `1..=N` ring-major, azimuth-minor.
pub fn generate_chamber_mesh(spec: &ChamberSpec) -> Result<Mesh, MeshError> {
    spec.validate()?;
    let layout = ChamberLayout::new(spec);
    let disk = triangulate_disk(spec);
    let z = z_layers(spec, &layout);
    let n2 = disk.points.len();
    let id = |l: usize, j: usize| l * n2 + j;

    let mut nodes = Vec::with_capacity(n2 * z.len());
    for &zl in &z {
        for &(x, y) in &disk.points {
            nodes.push(Vec3::new(x, y, zl));
        }
    }

    let n_layers = z.len() - 1;
    let mut tets = Vec::with_capacity(3 * disk.tris.len() * n_layers);
    for l in 0..n_layers {
        for t in &disk.tris {
            let mut s = *t;
            s.sort_unstable();
            let [a, b, c] = s;
            for v in [
                [id(l, a), id(l, b), id(l, c), id(l + 1, c)],
                [id(l, a), id(l, b), id(l + 1, b), id(l + 1, c)],
                [id(l, a), id(l + 1, a), id(l + 1, b), id(l + 1, c)],
            ] {
                tets.push(Tet { nodes: v, region: REGION_IMAGING });
            }
        }
    }

    let mut boundary = Vec::new();
    for t in &disk.tris {
        boundary.push(BoundaryTri { nodes: t.map(|j| id(0, j)), tag: TAG_METAL });
    }
    for t in &disk.tris {
        boundary.push(BoundaryTri { nodes: t.map(|j| id(n_layers, j)), tag: TAG_ABSORBING });
    }
    let theta = spec.port_width / spec.radius;
    let q = disk.outer.len();
    for i in 0..q {
        let (p0, a0) = disk.outer[i];
        let (p1, a1) = disk.outer[(i + 1) % q];
        let mid = a0 + 0.5 * (a1 - a0).rem_euclid(TAU);
        let (lo, hi) = (p0.min(p1), p0.max(p1));
        for l in 0..n_layers {
            let zm = 0.5 * (z[l] + z[l + 1]);
            let mut tag = TAG_METAL;
            for tag_candidate in 1..=layout.n_ports() {
                let dphi = wrap(mid - layout.port_azimuth(tag_candidate));
                let dz = zm - layout.ring_z[layout.ring_of(tag_candidate)];
                if dphi.abs() < 0.5 * theta && dz.abs() < 0.5 * spec.port_height {
                    tag = tag_candidate as i32;
                    break;
                }
            }
            boundary.push(BoundaryTri { nodes: [id(l, lo), id(l, hi), id(l + 1, hi)], tag });
            boundary.push(BoundaryTri { nodes: [id(l, lo), id(l + 1, lo), id(l + 1, hi)], tag });
        }
    }

    Mesh::new(nodes, tets, boundary)
}
