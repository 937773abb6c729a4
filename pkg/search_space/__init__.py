from search_space.errors import (
    TuningError,
    InvalidInputError,
    SearchSpaceError,
    SchemaMismatchError,
    MissingArtifactError,
    NumericalError,
    ArtifactIOError,
)
from search_space.search_space import (
    INTEGER,
    CONTINUOUS,
    KnobSpec,
    SearchSpace,
    TuningVector,
    validate,
    ensure_valid,
    normalize,
    denormalize,
    sample_uniform,
    enumerate_grid,
    parse_vector,
    load_space,
    save_space,
    round_half_away,
)
