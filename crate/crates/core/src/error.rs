use thiserror::Error;

use crate::coeffjet::ExprError;
use crate::dgsolver::DgError;
use crate::mesh2d::MeshError;
use crate::multiindex::MultiIndexError;
use crate::qtrefftz::QtError;
use crate::quadrature::QuadError;
use crate::sparsela::LinAlgError;

/// Umbrella error for callers that mix several modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    MultiIndex(#[from] MultiIndexError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Qt(#[from] QtError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
    #[error(transparent)]
    LinAlg(#[from] LinAlgError),
    #[error(transparent)]
    Dg(#[from] DgError),
}
