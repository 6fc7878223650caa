//! Finite-resolution dyadic measures on the unit square and line: energies,
//! entropies, projections, pinned distances and direction sets.

pub mod cube;
pub mod directions;
pub mod energy;
pub mod entropy;
pub mod error;
pub mod experiment;
pub mod format;
pub mod generators;
pub mod pinned;
pub mod projection;
pub mod raycast;
pub mod scalar;
pub mod schedule;
pub mod sobolev;
pub mod squares;
pub mod surd;
pub mod tree;
pub mod verify;

pub use cube::CubeIndex;
pub use error::{Error, Result};
pub use projection::{Direction, Grid1D};
pub use scalar::{Mode, Rational, Scalar, Surd2};
pub use schedule::ScaleSchedule;
pub use tree::{GridMeasure, MeasureTree};

pub type FloatTree = MeasureTree<f64>;
pub type ExactTree = MeasureTree<Rational>;
pub type SurdTree = MeasureTree<Surd2>;
pub type FloatGrid = GridMeasure<f64>;
pub type ExactGrid = GridMeasure<Rational>;
