//! Phase-field shape and topology optimization of fluid domains.
//!
//! The crate implements a diffuse-interface description of a fluid region
//! inside a rectangular holdall, governed by the stationary incompressible
//! Navier-Stokes equations with a porous-medium penalization of the non-fluid
//! phase. The design evolves by an H⁻¹ gradient flow of the regularized
//! objective, discretized as a Cahn-Hilliard type system with Moreau-Yosida
//! penalties, Taylor-Hood flow/adjoint solves, residual-based adaptive mesh
//! refinement and quantitative shape diagnostics.
//!
//! Module map:
//! - [`mesh`]: conforming triangulations, bisection refinement/coarsening,
//!   isolines and sublevel areas
//! - [`fem`]: P2/P1 spaces, quadrature, boundary data, operator assembly
//! - [`la`]: sparse operators, direct LU, restarted GMRES
//! - [`flow`]: penalized Navier-Stokes state and adjoint Oseen solves
//! - [`chstep`]: one implicit step of the gradient flow (semismooth Newton)
//! - [`adapt`]: error indicators, Dörfler marking, time-step control
//! - [`diagnostics`]: objective terms, drag, circularity, interface width
//! - [`driver`]: configuration, presets, the optimization loop, output
//! - [`vtk`]: legacy VTK output of meshes and fields

pub mod adapt;
pub mod chstep;
pub mod diagnostics;
pub mod driver;
pub mod exec;
pub mod fem;
pub mod flow;
pub mod la;
pub mod mesh;
pub mod selftest;
pub mod vtk;
