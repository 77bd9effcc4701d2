from .custom_exception import (
    ConfigError,
    DanglingEdge,
    DataError,
    DuplicateNodeId,
    EmptyBudget,
    EmptyGroup,
    EmptySeedSet,
    EpochOutOfRange,
    HGTEngineException,
    IngestError,
    LabelOutOfRange,
    MissingFeatures,
    MissingGradient,
    MissingTimestamp,
    NoNeighbors,
    NoPositive,
    NonFiniteLoss,
    NumericError,
    SchemaMismatch,
    ShapeMismatch,
    TypeMismatch,
    UnknownRelation,
    UnknownType,
)
