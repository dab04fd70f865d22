use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("non-numeric cell at row {row}, column `{column}`: {value:?}")]
    NonNumericCell { row: usize, column: String, value: String },
    #[error("duplicate geoid `{0}`")]
    DuplicateGeoid(String),
    #[error("row {row}: `{column}` = {value} violates {bound}")]
    OutOfRange {
        row: usize,
        column: String,
        value: f64,
        bound: String,
    },
    #[error("row {row}: city `{found}` does not match `{expected}`")]
    CityMismatch {
        row: usize,
        expected: String,
        found: String,
    },
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("need at least 2 minority rows, got {0}")]
    TooFewMinority(usize),
    #[error("only one class present")]
    SingleClass,
    #[error("training labels contain a single class and no base score override was given")]
    SingleClassTraining,
    #[error("NaN feature value at row {row}, feature {feature}")]
    NaNFeature { row: usize, feature: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("class {class} has {count} rows, fewer than the {folds} folds")]
    TooFewPerClass { class: u8, count: usize, folds: usize },
    #[error("invalid fold count {0}: cross validation needs at least 2")]
    InvalidFolds(usize),
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error("node {0} has no positive cover")]
    MissingCover(usize),
    #[error("brute-force Shapley supports at most {max} features, got {got}")]
    TooManyFeatures { max: usize, got: usize },
    #[error("no correctly classified instances in the test set")]
    NoCorrectInstances,
    #[error("empty attribution matrix")]
    EmptyMatrix,
    #[error("unknown feature index {0}")]
    UnknownFeature(usize),
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("invalid smoothing fraction {0}")]
    InvalidFraction(f64),
    #[error("non-finite input value {0}")]
    NonFiniteInput(f64),
    #[error("no threshold for feature {0}")]
    MissingThreshold(usize),
    #[error("no weight for feature {0}")]
    MissingWeight(usize),
    #[error("mean {0} outside the open interval (0, 1)")]
    MeanOutOfRange(f64),
    #[error("need at least {needed} values, got {got}")]
    TooFewValues { needed: usize, got: usize },
    #[error("empty group: {0}")]
    EmptyGroup(&'static str),
    #[error("worse-provisioned group has zero median income")]
    ZeroWorseMedian,
}
