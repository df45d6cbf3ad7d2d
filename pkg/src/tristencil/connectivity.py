"""Structured neighbor relations and derived neighbor tables.

On a colored triangular patch every neighborhood is expressible as a fixed
list of offsets ``(drow, color, dcol)`` per source color: the neighbor of
element ``(i, c, j)`` at entry ``(di, tc, dj)`` is ``(i + di, tc, j + dj)``
with periodic wrap.  Note that the middle entry is the *absolute* target
color, not a difference -- source and target locations generally have
different color counts.

The tables below define the canonical neighbor ordering for all nine
relations between vertices, cells and edges.  Edge endpoints are ordered
origin-first, which downstream code relies on for upwind selection.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .layouts import Permutation
from .topology import (
    LocationType,
    MeshOracle,
    PatchSpec,
    element_count,
    element_coord,
    element_id,
)

_V = LocationType.VERTICES
_C = LocationType.CELLS
_E = LocationType.EDGES

#: (from_loc, to_loc) -> per-source-color tuple of (drow, target_color, dcol)
OFFSET_TABLES: dict[tuple[LocationType, LocationType], tuple[tuple[tuple[int, int, int], ...], ...]] = {
    (_E, _V): (
        ((0, 0, 0), (0, 0, 1)),  # horizontal: origin, column neighbor
        ((0, 0, 0), (1, 0, 1)),  # diagonal: origin, opposite corner
        ((0, 0, 0), (1, 0, 0)),  # vertical: origin, row neighbor
    ),
    (_E, _C): (
        ((0, 0, 0), (-1, 1, 0)),
        ((0, 0, 0), (0, 1, 0)),
        ((0, 1, 0), (0, 0, -1)),
    ),
    (_E, _E): (
        ((0, 1, 0), (0, 2, 1), (-1, 2, 0), (-1, 1, 0)),
        ((0, 0, 0), (0, 2, 1), (0, 2, 0), (1, 0, 0)),
        ((0, 1, 0), (1, 0, 0), (0, 0, -1), (0, 1, -1)),
    ),
    (_C, _V): (
        ((0, 0, 0), (0, 0, 1), (1, 0, 1)),
        ((0, 0, 0), (1, 0, 0), (1, 0, 1)),
    ),
    (_C, _E): (
        ((0, 0, 0), (0, 1, 0), (0, 2, 1)),
        ((0, 2, 0), (0, 1, 0), (1, 0, 0)),
    ),
    (_C, _C): (
        ((0, 1, 0), (-1, 1, 0), (0, 1, 1)),
        ((0, 0, 0), (0, 0, -1), (1, 0, 0)),
    ),
    (_V, _V): (((0, 0, 1), (1, 0, 1), (1, 0, 0), (0, 0, -1), (-1, 0, -1), (-1, 0, 0)),),
    (_V, _E): (((0, 0, 0), (0, 1, 0), (0, 2, 0), (0, 0, -1), (-1, 1, -1), (-1, 2, 0)),),
    (_V, _C): (((0, 0, 0), (0, 1, 0), (0, 0, -1), (-1, 1, -1), (-1, 0, -1), (-1, 1, 0)),),
}


@dataclass(frozen=True)
class StructuredOffsets:
    """Canonical neighbor offsets for one relation and source color."""

    from_loc: LocationType
    to_loc: LocationType
    color: int
    entries: tuple[tuple[int, int, int], ...]

    def __len__(self) -> int:
        return len(self.entries)


def neighbor_len(from_loc: LocationType, to_loc: LocationType) -> int:
    """Neighborhood size of a relation (same for every source color)."""
    return len(_table(from_loc, to_loc)[0])


def structured_offsets(
    from_loc: LocationType, to_loc: LocationType, color: int
) -> StructuredOffsets:
    table = _table(from_loc, to_loc)
    if not 0 <= color < from_loc.colors:
        raise ValueError(
            f"color {color} out of range for {from_loc.value} "
            f"(0..{from_loc.colors - 1})"
        )
    return StructuredOffsets(from_loc, to_loc, color, table[color])


def _table(from_loc: LocationType, to_loc: LocationType):
    try:
        return OFFSET_TABLES[(from_loc, to_loc)]
    except KeyError:
        raise ValueError(
            f"no structured relation {from_loc.value} -> {to_loc.value}"
        ) from None


@dataclass(frozen=True)
class NeighborTable:
    """Flat neighbor-id table for one relation under chosen element orders.

    Row ``r`` lists, for the from-element of rank ``r``, the ranks of its
    neighbors in canonical (offset-table) order.  With identity permutations
    the ranks are just canonical element ids.
    """

    from_loc: LocationType
    to_loc: LocationType
    ids: np.ndarray  # (n_from, neighbor_len)

    def __post_init__(self):
        if self.ids.ndim != 2 or self.ids.shape[1] != neighbor_len(
            self.from_loc, self.to_loc
        ):
            raise ValueError(f"bad neighbor table shape {self.ids.shape}")


def build_neighbor_table(
    spec: PatchSpec,
    from_loc: LocationType,
    to_loc: LocationType,
    perm_from: Permutation | None = None,
    perm_to: Permutation | None = None,
) -> NeighborTable:
    """Materialize one relation as a flat table, honoring element orders.

    ``perm_from`` selects which from-element each row describes (row ``r``
    is the element of rank ``r``); ``perm_to`` translates neighbor ids into
    ranks of the target ordering.
    """
    n_from = element_count(spec, from_loc)
    n_to = element_count(spec, to_loc)
    if perm_from is not None and len(perm_from) != n_from:
        raise ValueError(
            f"perm_from sized {len(perm_from)}, expected {n_from} {from_loc.value}"
        )
    if perm_to is not None and len(perm_to) != n_to:
        raise ValueError(
            f"perm_to sized {len(perm_to)}, expected {n_to} {to_loc.value}"
        )
    width = neighbor_len(from_loc, to_loc)
    ids = np.empty((n_from, width), dtype=np.int64)
    for rank in range(n_from):
        eid = rank if perm_from is None else int(perm_from.inverse[rank])
        i, c, j = element_coord(spec, from_loc, eid)
        for slot, (di, tc, dj) in enumerate(_table(from_loc, to_loc)[c]):
            nid = element_id(spec, to_loc, i + di, tc, j + dj)
            ids[rank, slot] = nid if perm_to is None else perm_to.forward[nid]
    return NeighborTable(from_loc=from_loc, to_loc=to_loc, ids=ids)


def assign_edge_signs(mesh: MeshOracle) -> np.ndarray:
    """Per-vertex orientation signs for its six incident edges.

    Every edge is directed from its lower-id endpoint to its higher-id one;
    a vertex sees +1 on edges it emits and -1 on edges it receives.  The
    (n_vertices, 6) result is aligned with the canonical vertex->edge
    neighbor ordering, and the two rows touching any edge carry opposite
    signs, which is what makes discrete divergences telescope.
    """
    spec = mesh.spec
    table = build_neighbor_table(spec, _V, _E)
    signs = np.empty(table.ids.shape, dtype=np.float64)
    for v in range(signs.shape[0]):
        for slot, e in enumerate(table.ids[v]):
            a, b = mesh.edge_vertices[e]
            lower = min(int(a), int(b))
            signs[v, slot] = 1.0 if v == lower else -1.0
    return signs


def edge_signs_table(spec: PatchSpec) -> np.ndarray:
    """Orientation signs built from the structured tables alone.

    Same convention as :func:`assign_edge_signs`, but derived without a mesh
    oracle so it stays cheap on large patches.
    """
    v2e = build_neighbor_table(spec, _V, _E).ids
    e2v = build_neighbor_table(spec, _E, _V).ids
    lower = e2v.min(axis=1)
    signs = np.where(lower[v2e] == np.arange(v2e.shape[0])[:, None], 1.0, -1.0)
    return signs.astype(np.float64)


def dump_tables(spec: PatchSpec, stream) -> None:
    """Write all nine neighbor tables as CSV rows to a text stream."""
    writer = csv.writer(stream)
    writer.writerow(["from_loc", "to_loc", "element", "slot", "neighbor"])
    for (from_loc, to_loc) in sorted(OFFSET_TABLES, key=lambda p: (p[0].value, p[1].value)):
        table = build_neighbor_table(spec, from_loc, to_loc)
        for eid, row in enumerate(table.ids.tolist()):
            for slot, nid in enumerate(row):
                writer.writerow([from_loc.value, to_loc.value, eid, slot, nid])
