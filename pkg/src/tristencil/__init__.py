"""Stencil computations on structured triangular grids.

Doubly periodic triangular patches with location-typed storages
(vertices, cells, edges), color-based structured indexing, multi-stage
stencil composition with cache-driven loop fusion, and an upwind
transport dwarf used as the flagship workload.
"""

from .topology import (
    LocationType,
    MeshOracle,
    PatchSpec,
    build_mesh,
    element_count,
    element_coord,
    element_id,
)
from .layouts import (
    AXES,
    DEFAULT_DIM_ORDER,
    AccessMethod,
    LayoutSpec,
    LinearLayout,
    Numbering,
    Permutation,
    check_access_combo,
    coalescing_fraction,
    direct_sweep_groups,
    hilbert_rank,
    hilbert_xy,
    make_permutation,
)
from .connectivity import (
    OFFSET_TABLES,
    NeighborTable,
    StructuredOffsets,
    assign_edge_signs,
    build_neighbor_table,
    dump_tables,
    edge_signs_table,
    neighbor_len,
    structured_offsets,
)
from .storage import (
    CSV_HEADER,
    DivergenceError,
    Field,
    FieldMeta,
    Selector,
    StalenessError,
    StorageError,
    TrafficReport,
    TrafficRow,
    make_storage,
    plane_access_total,
    reset_counters,
    sync,
)
from .stencil import (
    Accessor,
    BoundMultiStage,
    BoundStage,
    CompositionError,
    Computation,
    Extent,
    Intent,
    MultiStageSpec,
    StageSpec,
    StageUse,
    accessor,
    compose,
    interval_for,
    multistage,
)
from .executors import (
    RunStats,
    TileSpec,
    TimingResult,
    halo_update,
    run_fused,
    run_naive,
    time_computation,
)
from .mpdata import (
    GeometryFields,
    MpdataParams,
    StateFields,
    build_divergence,
    build_geometry,
    build_mpdata,
    build_state,
    init_preset,
    load_field_csv,
    total_mass,
)
from .kernels import (
    build_kernel,
    field_to_flat,
    flat_to_field,
    gather_groups,
    make_kernel_fields,
    run_neighbor_sum,
    run_neighbor_sum_scaled,
)
from .bench import BenchConfig, BenchRecord, ConfigError, InvariantFailure

__version__ = "0.1.0"

__all__ = [
    "AXES",
    "AccessMethod",
    "Accessor",
    "BenchConfig",
    "BenchRecord",
    "BoundMultiStage",
    "BoundStage",
    "CSV_HEADER",
    "CompositionError",
    "Computation",
    "ConfigError",
    "DEFAULT_DIM_ORDER",
    "DivergenceError",
    "Extent",
    "Field",
    "FieldMeta",
    "GeometryFields",
    "Intent",
    "InvariantFailure",
    "LayoutSpec",
    "LinearLayout",
    "LocationType",
    "MeshOracle",
    "MpdataParams",
    "MultiStageSpec",
    "NeighborTable",
    "Numbering",
    "OFFSET_TABLES",
    "PatchSpec",
    "Permutation",
    "RunStats",
    "Selector",
    "StageSpec",
    "StageUse",
    "StalenessError",
    "StateFields",
    "StorageError",
    "StructuredOffsets",
    "TileSpec",
    "TimingResult",
    "TrafficReport",
    "TrafficRow",
    "accessor",
    "assign_edge_signs",
    "build_divergence",
    "build_geometry",
    "build_kernel",
    "build_mesh",
    "build_mpdata",
    "build_neighbor_table",
    "build_state",
    "check_access_combo",
    "coalescing_fraction",
    "compose",
    "direct_sweep_groups",
    "dump_tables",
    "edge_signs_table",
    "element_count",
    "element_coord",
    "element_id",
    "field_to_flat",
    "flat_to_field",
    "gather_groups",
    "halo_update",
    "hilbert_rank",
    "hilbert_xy",
    "init_preset",
    "interval_for",
    "load_field_csv",
    "make_kernel_fields",
    "make_permutation",
    "make_storage",
    "multistage",
    "neighbor_len",
    "plane_access_total",
    "reset_counters",
    "run_fused",
    "run_naive",
    "run_neighbor_sum",
    "run_neighbor_sum_scaled",
    "structured_offsets",
    "sync",
    "time_computation",
    "total_mass",
]
