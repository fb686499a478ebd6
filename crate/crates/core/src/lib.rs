//! ClustCube engine.
//!
//! OLAP cubes whose cells hold clustered complex objects, each cell also
//! carrying a least-squares fit whose sufficient statistics roll up without
//! touching raw rows.
//!
//! The pipeline runs bottom-up through the modules:
//!
//! * [`star`]: star-schema manifest, CSV ingestion and validation.
//! * [`codq`]: object definition queries, their composition and execution.
//! * [`lattice`]: cuboid lattice enumeration, navigation and selection.
//! * [`mdclust`]: feature encoding, seeded k-means and silhouette.
//! * [`mdregress`]: mergeable regression statistics and ridge-guarded fits.
//! * [`cube`]: cube assembly, OLAP operators and the processing planner.
//! * [`tourism`]: deterministic tourism star-schema generator and presets.

pub mod codq;
pub mod cube;
pub mod lattice;
pub mod mdclust;
pub mod mdregress;
pub mod star;
pub mod tourism;
pub mod value;

pub use value::{ColumnType, Value};
