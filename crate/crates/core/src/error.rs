use alloc::string::String;

use crate::cohort::Sequence;
use crate::volume::Dims;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: Dims,
        found: Dims,
    },
    #[error("data length {found} does not match dims {dims} ({expected} voxels)")]
    DataLength {
        dims: Dims,
        expected: usize,
        found: usize,
    },
    #[error("duplicate subject id `{0}`")]
    DuplicateSubject(String),
    #[error("visit days of subject `{subject}` are not strictly increasing ({previous} then {next})")]
    NonMonotoneDays {
        subject: String,
        previous: i64,
        next: i64,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("subject `{subject}` has no incidence mask at day {day}")]
    MissingIncidenceMask { subject: String, day: i64 },
    #[error("reference tissue mask is empty")]
    EmptyReferenceMask,
    #[error("reference tissue has zero variance on {0}")]
    ZeroReferenceVariance(Sequence),
    #[error("series does not reach the inclusion horizon (last observation at {last_day} days, need {horizon})")]
    InclusionNotMet { last_day: i64, horizon: i64 },
    #[error("series has no observation at incidence (t = 0)")]
    MissingIncidenceObservation,
    #[error("profile for {0} is missing")]
    MissingSequence(Sequence),
    #[error("need at least {needed} rows, found {found}")]
    TooFewRows { needed: usize, found: usize },
    #[error("need at least {needed} subjects, found {found}")]
    TooFewSubjects { needed: usize, found: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("component {k} out of range (model retains {available})")]
    ComponentOutOfRange { k: usize, available: usize },
    #[error("design matrix is rank deficient: {0}")]
    RankDeficient(String),
    #[error("optimizer did not converge after {iterations} iterations")]
    NotConverged { iterations: usize },
    #[error("resampling failed: {0}")]
    ImpossibleResampling(String),
    #[error("rating vectors differ in length ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("kappa is undefined: chance agreement equals 1")]
    UndefinedKappa,
    #[error("no ratings to compare")]
    EmptyRatings,
    #[error("rating {0} is outside the 1..=4 scale")]
    RatingOutOfRange(u8),
    #[error("rater {rater} rated {case} more than once")]
    DuplicateRating { rater: String, case: String },
    #[error("unmatched repeat ratings: {0}")]
    UnmatchedRepeats(String),
    #[error("lesion has no scored voxels")]
    NoScoredVoxels,
}
