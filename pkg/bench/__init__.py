from bench.bench_runner import (
    METHODS,
    BenchmarkConfig,
    BenchmarkReport,
    MethodSummary,
    BoxStats,
    box_stats,
    budget_match,
    initial_points,
    load_objective,
    run_benchmark,
    emit_report,
    raw_from_csv,
    summary_table,
)
from bench.fixtures import (
    FIXTURE_SEED,
    fixture_space,
    fixture_profiles,
    fixture_objective,
    fixture_surrogate,
    bump_objective,
    tiny_space,
    continuous_space,
)
