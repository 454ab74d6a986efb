//! EPR evaluation: minimum inferred variances from projected correlation
//! tables by direct evaluation, Gaussian fits and peak widths, and the
//! resulting Reid products.

pub mod fit;
mod methods;
mod report;
mod table;

use thiserror::Error;

pub use fit::{fit_gaussian_1d, fit_gaussian_2d, gaussian_1d, gaussian_2d, FitError, GaussianFit, LmOptions};
pub use methods::{
    gauss1d, gauss2d, numerical, peak_method, peak_profile, Gauss2dEstimate, PeakCoordinate, PeakEstimate, PeakProfile,
    VarianceEstimate,
};
pub use report::{compile_report, AxisEstimates, EprReport, Method, MethodResult};
pub use table::{
    conditionals_and_marginal, min_inferred_variance, schneeloch_conditional, v_min, AxisKind, Conditionals,
    JointTable, DEFAULT_COLUMN_THRESHOLD,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EprError {
    #[error("invalid joint table: {0}")]
    InvalidTable(String),
    #[error("every column is empty")]
    AllColumnsEmpty,
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error("no usable fit: {0}")]
    NoUsableFit(String),
}
