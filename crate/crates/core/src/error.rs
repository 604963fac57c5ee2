use thiserror::Error;

use crate::expr::ExprError;

/// Errors raised by the numerical engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("integration failed: {0}")]
    Integration(String),
    #[error("time {t} is outside the integrated span [{lo}, {hi}]")]
    OutOfSpan { t: f64, lo: f64, hi: f64 },
    #[error("no boundary point found for region {region} inside the bounding box")]
    BoundaryNotFound { region: usize },
    #[error("degenerate crossing at stage {stage}, t = {t}: transversality margin {margin:e}")]
    DegenerateCrossing { stage: usize, t: f64, margin: f64 },
    #[error("start point lies on the switching surface (|f - lambda| = {0:e})")]
    StartOnBoundary(f64),
    #[error("crossing near t = {t} could not be resolved to the level tolerance (|g| = {residual:e})")]
    UnresolvedCrossing { t: f64, residual: f64 },
    #[error("no crossing of the mode-{mode} switching surface within the horizon {horizon}")]
    NoCrossingWithinHorizon { mode: usize, horizon: f64 },
    #[error("projection onto the boundary diverged: {0}")]
    ProjectionDiverged(String),
    #[error("Newton did not converge: {0}")]
    NoConvergence(String),
    #[error("degenerate Jacobian (condition number {0:e})")]
    DegenerateJacobian(f64),
    #[error("converged solution lies on the boundary of the time window (stage {stage})")]
    NotInWindow { stage: usize },
    #[error("continuation stalled at s = {s} (minimum step reached)")]
    ContinuationStalled { s: f64 },
    #[error("replay mismatch: {0}")]
    ReplayMismatch(String),
    #[error("map vanishes at angle {angle}")]
    VanishingImage { angle: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
