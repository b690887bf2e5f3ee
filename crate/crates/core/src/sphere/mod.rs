//! Discrete exterior calculus on triangulated spheres.

pub mod cochain;
pub mod harmonics;
pub mod locate;
pub mod mesh;
pub mod poisson;
pub mod vertex_map;

pub use cochain::{direction_factor, edge_weights, OneFormCochain, TwoCochain};
pub use locate::FaceLocator;
pub use mesh::{SphereMesh, Vec3};
pub use poisson::{solve_poisson, PoissonSolution};
pub use vertex_map::VertexMap;
