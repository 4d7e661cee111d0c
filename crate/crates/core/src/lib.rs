//! Time-harmonic Maxwell solver and microwave tomography toolkit.
//!
//! The crate is organised bottom-up:
//!
//! * [`mesh`]: tetrahedral meshes, the MSH-lite format, the cylindrical chamber
//!   generator, partitioning and overlapping decompositions.
//! * [`fem`]: lowest-order Nédélec edge elements, assembly of the complex
//!   curl-curl system, TE10 port modes and field post-processing.
//! * [`ddm`]: the (optimized) restricted additive Schwarz preconditioner.
//! * [`krylov`]: right-preconditioned pseudo-block GMRES.
//! * [`scattering`]: S-parameter extraction.
//! * [`inverse`]: misfit functional, adjoint gradient and L-BFGS.
//! * [`phantom`]: synthetic permittivity maps, noise, reference data and VTK output.

pub mod ddm;
pub mod fem;
pub mod inverse;
pub mod krylov;
pub mod mesh;
pub mod phantom;
pub mod quadrature;
pub mod scattering;
pub mod sparse;

pub use num_complex::Complex64 as C64;

/// Real 3-vector used for coordinates and directions.
pub type Vec3 = nalgebra::Vector3<f64>;
/// Complex 3-vector used for field values.
pub type CVec3 = nalgebra::Vector3<C64>;

/// Promote a real vector to a complex one.
#[inline]
pub fn complexify(v: &Vec3) -> CVec3 {
    CVec3::new(v.x.into(), v.y.into(), v.z.into())
}

/// Unconjugated bilinear dot product `a · b` between a complex and a real vector.
#[inline]
pub fn cdot_real(a: &CVec3, b: &Vec3) -> C64 {
    a.x * b.x + a.y * b.y + a.z * b.z
}
