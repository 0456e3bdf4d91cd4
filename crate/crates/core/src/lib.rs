//! Locally enriched polytopal non-conforming (LEPNC) finite elements on
//! two-dimensional polygonal meshes.
//!
//! The crate is organised bottom-up:
//!
//! * [`mesh`]: star-shaped polygonal meshes, generators and quality measures;
//! * [`quadrature`]: triangle/segment rules and cell/face integration;
//! * [`space`]: the LEPNC basis, degrees of freedom, interpolators and mass lumping;
//! * [`schemes`]: linear diffusion and mass-lumped Stefan/porous-medium solvers;
//! * [`gdm`]: gradient-discretisation diagnostics (Poincaré, consistency, conformity);
//! * [`harness`]: manufactured test cases, error norms and convergence studies.

pub mod gdm;
pub mod harness;
pub mod mesh;
pub mod quadrature;
pub mod schemes;
pub mod space;
