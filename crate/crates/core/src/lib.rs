//! Green fields of killed reversible walks on weighted graphs, their
//! linearized level-set profiles, and the exit-time and occupation-time
//! bounds that follow from an anchored isoperimetric inequality.
//!
//! Graphs, Green fields and profiles are generic over [`Scalar`]: `f64`,
//! `f32` or the exact [`Rational`]. Comparison curves, isoperimetric ratios,
//! environments and the walker work in `f64`.

pub mod env;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod green;
pub mod isoperimetry;
pub mod lattice;
pub mod levelset;
pub mod ode;
pub mod scalar;
pub mod solver;
pub mod walker;

pub use error::{Error, Result};
pub use graph::{EdgeList, Region, Vertex, WeightedGraph};
pub use green::{green_killed, GreenField};
pub use lattice::LatticeBox;
pub use levelset::LevelProfile;
pub use ode::{BoundCurve, ProfileFunction};
pub use scalar::{Rational, Scalar};

pub type Graph = WeightedGraph<f64>;
pub type ExactGraph = WeightedGraph<Rational>;
pub type Field = GreenField<f64>;
pub type ExactField = GreenField<Rational>;
pub type Profile = LevelProfile<f64>;
pub type ExactProfile = LevelProfile<Rational>;
