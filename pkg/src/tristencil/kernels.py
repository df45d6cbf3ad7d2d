"""Cell-neighborhood benchmark kernels and indirect-access runners.

Two elementary kernels drive the indexing experiments:

* ``neighbor_sum``        ``b = sum of the three edge-adjacent cells of a``
* ``neighbor_sum_scaled`` the same sum times a per-column factor

Each exists twice: as a structured stage (direct, offset-arithmetic access)
and as a flat loop over a neighbor table (indirect access, any numbering).
Both fold neighbors in canonical slot order, so results agree bitwise after
undoing the numbering permutation.
"""

from __future__ import annotations

import numpy as np

from .connectivity import NeighborTable
from .layouts import Permutation
from .stencil import Computation, Intent, StageSpec, StageUse, accessor, compose, multistage
from .storage import Field, Selector, make_storage
from .topology import LocationType, PatchSpec

_C = LocationType.CELLS


def _sum_body(ev):
    acc = ev.reduce(_C, lambda nv, acc: nv + acc, 0.0, "a")
    ev.store(acc)


def _sum_scaled_body(ev):
    acc = ev.reduce(_C, lambda nv, acc: nv + acc, 0.0, "a")
    ev.store(acc * ev.read("fac"))


def neighbor_sum_stage() -> StageSpec:
    return StageSpec(
        name="neighbor_sum",
        location=_C,
        accessors=(
            accessor("a", Intent.IN, _C, extent=(-1, 1, -1, 1)),
            accessor("b", Intent.OUT, _C),
        ),
        body=_sum_body,
    )


def neighbor_sum_scaled_stage() -> StageSpec:
    return StageSpec(
        name="neighbor_sum_scaled",
        location=_C,
        accessors=(
            accessor("a", Intent.IN, _C, extent=(-1, 1, -1, 1)),
            accessor("fac", Intent.IN, _C),
            accessor("b", Intent.OUT, _C),
        ),
        body=_sum_scaled_body,
    )


def make_kernel_fields(spec: PatchSpec, layout=None) -> dict[str, Field]:
    return {
        "a": make_storage(spec, _C, "a", layout=layout),
        "b": make_storage(spec, _C, "b", layout=layout),
        "fac": make_storage(spec, _C, "fac", Selector(level=False), layout=layout),
    }


def build_kernel(spec: PatchSpec, fields: dict[str, Field],
                 scaled: bool) -> Computation:
    if scaled:
        use = StageUse(neighbor_sum_scaled_stage(), ("a", "fac", "b"))
    else:
        use = StageUse(neighbor_sum_stage(), ("a", "b"))
    return compose(spec, [multistage("parallel", use)], fields)


# ---------------------------------------------------------------------------
# indirect (table-driven) runners over flat arrays


def run_neighbor_sum(table: NeighborTable, a: np.ndarray) -> np.ndarray:
    """Flat indirect sweep; ``a`` is (n_elements, levels) in table rank order."""
    ids = table.ids
    out = np.empty_like(a)
    for r in range(ids.shape[0]):
        acc = 0.0
        for slot in range(ids.shape[1]):
            acc = a[ids[r, slot]] + acc
        out[r] = acc
    return out


def run_neighbor_sum_scaled(table: NeighborTable, a: np.ndarray,
                            fac: np.ndarray) -> np.ndarray:
    ids = table.ids
    out = np.empty_like(a)
    for r in range(ids.shape[0]):
        acc = 0.0
        for slot in range(ids.shape[1]):
            acc = a[ids[r, slot]] + acc
        out[r] = acc * fac[r]
    return out


def field_to_flat(field: Field, perm: Permutation | None = None) -> np.ndarray:
    """Interior of a field as (n_elements, levels), canonical or rank order."""
    core = field.core()  # (rows, colors, cols, levels, extra)
    if core.shape[4] != 1:
        raise ValueError(f"field {field.name!r} has an extra axis")
    flat = core[:, :, :, :, 0].reshape(-1, core.shape[3])
    if perm is None:
        return flat
    return flat[perm.inverse]


def flat_to_field(values: np.ndarray, field: Field,
                  perm: Permutation | None = None) -> None:
    """Scatter (n_elements, levels) values back into a field's interior."""
    spec = field.spec
    h = spec.halo
    canonical = values if perm is None else values[perm.forward]
    shaped = canonical.reshape(
        spec.rows, field.shape[1], spec.cols, field.shape[3]
    )
    field.array("primary", "rw")[h : h + spec.rows, :, h : h + spec.cols, :, 0] = shaped


def unpermute(values: np.ndarray, perm: Permutation | None) -> np.ndarray:
    """Rank-ordered rows back to canonical element order."""
    if perm is None:
        return values
    return values[perm.forward]


def gather_groups(table: NeighborTable, width: int,
                  own_reads: int = 0) -> list[np.ndarray]:
    """Warp address groups of one indirect sweep over a neighbor table.

    Per warp of ``width`` consecutive ranks: one gather group per neighbor
    slot, ``own_reads`` own-rank read groups, and the own-rank write group.
    """
    if width < 1:
        raise ValueError(f"width must be >= 1, got {width}")
    ids = table.ids
    groups: list[np.ndarray] = []
    for r0 in range(0, ids.shape[0], width):
        chunk = np.arange(r0, min(r0 + width, ids.shape[0]))
        for slot in range(ids.shape[1]):
            groups.append(ids[chunk, slot])
        for _ in range(own_reads):
            groups.append(chunk)
        groups.append(chunk)  # the write of the result
    return groups
