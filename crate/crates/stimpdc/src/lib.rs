//! Simulation and analysis toolkit for polarization-entangled multiphoton
//! states produced by stimulated parametric down-conversion.
//!
//! The photon source emits `n` indistinguishable photon pairs per pulse into
//! two spatial modes, each pair polarization-entangled, with the collectively
//! entangled pair-number distribution of two-mode squeezing. The crate models
//! that state exactly in a block-Fock representation, applies lossy threshold
//! detection, and provides the downstream analyses an experiment would run:
//!
//! - [`state`]: build, truncate, and rotate the pair state between
//!   polarization analysis bases.
//! - [`detection`]: exact click-pattern statistics for four threshold
//!   detectors, both by direct block summation and by a closed
//!   generating-function form, plus the distinguishable-pairs comparison
//!   model.
//! - [`criteria`]: visibilities, two-qubit tomography on the one-click-per-side
//!   subspace, the partial-transpose test, and two entanglement criteria.
//! - [`montecarlo`]: pulse-by-pulse sampling that synthesizes realistic count
//!   datasets, including beam-splitter fan-out events revealing three- and
//!   four-pair emission.
//! - [`fitting`]: recovery of the gain and collection efficiencies from count
//!   data by weighted nonlinear least squares.
//! - [`cli`]: the command-line pipeline with CSV/JSON I/O.
//!
//! Start with the `examples/` directory; each example exercises one of these
//! capabilities end to end.

pub mod cli;
pub mod criteria;
pub mod detection;
pub mod fitting;
pub mod montecarlo;
pub mod state;

use thiserror::Error;

pub use criteria::{
    c1, c2, evaluate_criteria, partial_transpose_min_eigenvalue, tomography,
    total_spin_correlation, visibility, visibility_as_spin_correlation, BasisGrid,
    CriteriaResult, DensityMatrix, TomographyResult, VisibilitySet,
};
pub use detection::{
    ansatz_visibility, click_distribution, click_distribution_closed, click_probability_single,
    single_detector_prob_closed, subspace_probs, subspace_probs_closed, subspace_ratio,
    ClickDistribution, Efficiencies, SubspaceProbs,
};
pub use fitting::{fit, predict_rate, FitParams, FitResult};
pub use montecarlo::{
    multi_pair_rates_closed, multi_pair_rates_mc, sample_pair_number, simulate_pulses,
    synthesize_dataset, synthesize_dataset_in_bases, ClickCounts, CountDataset, CountRecord,
    MultiPairRates, PatternKey, PulseConfig,
};
pub use state::{
    build_pdc_state, default_tail_tol, mean_pairs, rotate, select_n_max, sym_power,
    tail_mass_beyond, Basis, Block, InteractionParams, PairBlockState, PolarizationRotation,
};

/// Unified error type for the whole pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// The requested tail tolerance needs more pair-number blocks than the cap allows.
    #[error(
        "truncation infeasible: tau = {tau} needs more than {cap} blocks for tail tolerance {tail_tol:.1e}"
    )]
    InfeasibleTruncation { tau: f64, tail_tol: f64, cap: usize },

    /// No probability mass in the one-click-per-side subspace (e.g. zero gain
    /// or zero efficiency); normalized subspace quantities are undefined.
    #[error("empty (1,1) subspace: two-sided detection probability is zero")]
    EmptySubspace,

    /// The spin-correlation visibility form is only defined when both sides
    /// are analyzed in the same basis.
    #[error("spin-correlation form requires matching analysis bases, got {a}/{b}")]
    MixedBases { a: Basis, b: Basis },

    /// A criterion's denominator vanished, so the test is inapplicable.
    #[error("criterion inapplicable: its visibility denominator vanished")]
    DegenerateCriterion,

    /// An operation requiring a Hermitian matrix was handed something else.
    #[error("matrix is not Hermitian: max deviation {deviation:.3e}")]
    NonHermitian { deviation: f64 },

    /// Tomography needs all nine analysis-basis pairs.
    #[error("missing analysis-basis pair {a}/{b} in input data")]
    MissingBasisPair { a: Basis, b: Basis },

    /// The dataset cannot pin down the fit parameters.
    #[error("dataset cannot identify the parameters: {reason}")]
    Unidentifiable { reason: String },

    /// Invalid user-supplied configuration (flags or config file).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A cross-route consistency check failed beyond its tolerance.
    #[error("numeric cross-check failed: {0}")]
    NumericCheck(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for this error class: 2 for configuration and input
    /// problems, 3 for numeric infeasibility, 4 is reserved for fit
    /// non-convergence (reported via [`FitResult::converged`], not an error).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::MissingBasisPair { .. }
            | Error::Unidentifiable { .. }
            | Error::MixedBases { .. }
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_) => 2,
            Error::InfeasibleTruncation { .. }
            | Error::EmptySubspace
            | Error::DegenerateCriterion
            | Error::NonHermitian { .. }
            | Error::NumericCheck(_) => 3,
        }
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
