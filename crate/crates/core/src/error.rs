use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttitudeError {
    #[error("quaternion is not unit norm (|q| = {0})")]
    NotUnit(f64),
    #[error("cannot normalize quaternion with norm {0}")]
    Degenerate(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("inertia matrix is not symmetric (max asymmetry {0:e})")]
    InertiaNotSymmetric(f64),
    #[error("inertia matrix is not positive definite (min eigenvalue {0:e})")]
    InertiaNotPositiveDefinite(f64),
    #[error("principal moments {0:?} violate the triangular inequalities")]
    TriangularInequality([f64; 3]),
    #[error(transparent)]
    Attitude(#[from] AttitudeError),
}

impl ModelError {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        ModelError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("simulation diverged at t = {t} s: {reason}")]
    Diverged { t: f64, reason: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("averaging horizon {horizon} s is shorter than the required {required} s")]
    HorizonTooShort { horizon: f64, required: f64 },
    #[error("running average has not converged: det changed by {relative_change:.3e} between the last two checkpoints")]
    NotConverged {
        relative_change: f64,
        average: Box<crate::analysis::GammaAverage>,
    },
    #[error("average controllability matrix is singular (det = {det:e}); average controllability does not hold")]
    SingularGamma { det: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}
