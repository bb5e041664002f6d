"""Bloom-filtered cascade join engine with a fitted cost model."""

from ._bloomjoin import (
    BloomFilter,
    BloomParams,
    CapacityError,
    DeserializeError,
    DomainError,
    IncompatibleFilter,
    InvalidArgument,
    SchemaError,
    Table,
    Underdetermined,
    fit_bloom_model,
    fit_join_model,
    generate,
    join,
    load_csv,
    merge,
    model_total,
    nested_loop_oracle,
    partition,
    plan_parameters,
    solve_optimal_epsilon,
    table_from_rows,
    total_derivative,
    write_csv,
)

__all__ = [name for name in dir() if not name.startswith("_")]
