use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate variable name `{0}`")]
    DuplicateVariable(String),
    #[error("variable `{name}` has {found} level(s); at least 2 are required")]
    TooFewLevels { name: String, found: usize },
    #[error("variable `{var}` lists level `{level}` more than once")]
    DuplicateLevel { var: String, level: String },
    #[error("level index {level} out of range for `{var}` ({cardinality} levels)")]
    LevelOutOfRange {
        var: String,
        level: usize,
        cardinality: usize,
    },
    #[error("assignment has {found} entries, expected {expected}")]
    AssignmentLength { expected: usize, found: usize },
    #[error("tree has {leaves} leaves, above the cap of {cap}")]
    TreeTooLarge { leaves: u128, cap: u128 },
    #[error("invalid staging: {0}")]
    InvalidStaging(String),
    #[error("stage groups vertices from depths {first} and {second}; stages may not span depths")]
    CrossDepthStage { first: usize, second: usize },
    #[error("invalid floret at depth {depth}, stage {stage}: {reason}")]
    InvalidFloret {
        depth: usize,
        stage: usize,
        reason: String,
    },
    #[error("observed stage {stage} at depth {depth} has no counts and no smoothing")]
    EmptyObservedStage { depth: usize, stage: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("empty cell at row {row}, column `{column}`")]
    EmptyCell { row: usize, column: String },
    #[error("column `{0}` has a single level")]
    SingleLevel(String),
    #[error("dataset has no records")]
    NoRecords,
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("unknown level `{level}` for variable `{var}`")]
    UnknownLevel { var: String, level: String },
    #[error("invalid levels file: {0}")]
    LevelsFile(String),
    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("`{0}` appears both as target and in the conditioning set")]
    TargetInConditioningSet(String),
    #[error("conditioning table needs {cells} cells, above the cap of {cap}")]
    ConditioningTooLarge { cells: u128, cap: u128 },

    #[error("vectors have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),

    #[error("invalid learner configuration: {0}")]
    InvalidConfig(String),

    #[error("dag variable order does not match the tree order")]
    OrderMismatch,
    #[error("invalid dag: {0}")]
    InvalidDag(String),
    #[error("cpt row {row} of `{var}` sums to {sum}")]
    UnnormalizedCpt { var: String, row: usize, sum: f64 },

    #[error("AUC needs a binary class, found {0} levels")]
    NonBinaryAuc(usize),
    #[error("test set is empty")]
    EmptyTestSet,

    #[error("unsupported model file version {found} (expected {expected})")]
    Version { found: u64, expected: u64 },
    #[error("unknown field `{0}` in model file; it was written by a newer format version")]
    UnknownField(String),
    #[error("model file is truncated: missing section `{0}`")]
    MissingSection(String),
    #[error("malformed model file: {0}")]
    ModelFile(String),
}
