use std::path::PathBuf;

use clustcube_core::codq::CodqError;
use clustcube_core::cube::CubeError;
use clustcube_core::lattice::LatticeError;
use clustcube_core::mdclust::ClusterError;
use clustcube_core::mdregress::RegressError;
use clustcube_core::star::StarError;
use clustcube_core::tourism::GenError;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("{0}")]
    BadRequest(String),
    #[error("unknown cuboid `{0}`")]
    UnknownCuboid(String),
    #[error("cuboid `{0}` has not been built")]
    NotBuilt(String),
    #[error("a build of `{0}` is already in progress")]
    Busy(String),
    #[error("invalid or missing token")]
    Unauthorized,
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Document { path: PathBuf, message: String },
    #[error(transparent)]
    Star(#[from] StarError),
    #[error(transparent)]
    Codq(#[from] CodqError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Cube(#[from] CubeError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Regress(#[from] RegressError),
    #[error(transparent)]
    Gen(#[from] GenError),
}

impl AppError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> AppError {
        AppError::Io {
            path: path.into(),
            source,
        }
    }

    /// Unknown cuboid, dimension or level.
    pub fn is_not_found(&self) -> bool {
        matches!(
            self,
            AppError::UnknownCuboid(_)
                | AppError::NotBuilt(_)
                | AppError::Cube(CubeError::UnknownDimension(_))
                | AppError::Cube(CubeError::Lattice(LatticeError::UnknownDimension(_)))
                | AppError::Cube(CubeError::Lattice(LatticeError::UnknownLevel { .. }))
                | AppError::Cube(CubeError::Lattice(LatticeError::UnknownCuboid(_)))
                | AppError::Lattice(LatticeError::UnknownCuboid(_))
                | AppError::Lattice(LatticeError::UnknownDimension(_))
                | AppError::Lattice(LatticeError::UnknownLevel { .. })
        )
    }
}
