"""Structured triangular grid patches.

A patch is a parallelogram of ``rows x cols`` diamonds, each diamond split
into a downward and an upward triangle.  The patch is doubly periodic, so
every element has a full neighborhood and all element counts are exact
multiples of the diamond count.

Elements live on three location types.  Each location has a fixed number of
*colors*, the per-diamond sub-index that makes the grid structured:

* vertices: one per diamond (color 0), the lower-left corner,
* cells: two per diamond (color 0 = downward, color 1 = upward triangle),
* edges: three per diamond (color 0 = horizontal, 1 = diagonal, 2 = vertical).

The canonical element id enumerates ``(row, color, col)`` lexicographically:
``id = (row * colors + color) * cols + col``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


class LocationType(enum.Enum):
    VERTICES = "vertices"
    CELLS = "cells"
    EDGES = "edges"

    @property
    def colors(self) -> int:
        return _COLORS[self]


_COLORS = {
    LocationType.VERTICES: 1,
    LocationType.CELLS: 2,
    LocationType.EDGES: 3,
}


@dataclass(frozen=True)
class PatchSpec:
    """Dimensions of one periodic parallelogram patch.

    ``rows``/``cols`` count diamonds, ``levels`` counts vertical layers and
    ``halo`` is the width of the periodic ghost band kept around the compute
    domain in structured storages.
    """

    rows: int
    cols: int
    levels: int
    halo: int = 1

    def __post_init__(self):
        for name in ("rows", "cols", "levels", "halo"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)):
                raise ValueError(f"{name} must be an integer, got {value!r}")
        if self.rows < 2 or self.cols < 2:
            raise ValueError(
                f"rows and cols must each be >= 2, got {self.rows}x{self.cols}"
            )
        if self.levels < 1:
            raise ValueError(f"levels must be >= 1, got {self.levels}")
        if self.halo < 1:
            raise ValueError(f"halo must be >= 1, got {self.halo}")
        if self.halo > min(self.rows, self.cols):
            raise ValueError(
                f"halo {self.halo} exceeds patch extent "
                f"{self.rows}x{self.cols}; periodic wrap would alias"
            )

    @property
    def diamonds(self) -> int:
        return self.rows * self.cols

    def wrap(self, i: int, j: int) -> tuple[int, int]:
        """Map any (row, col) pair onto the periodic compute domain."""
        return i % self.rows, j % self.cols


def element_count(spec: PatchSpec, loc: LocationType) -> int:
    """Number of elements of one location type: diamonds times colors."""
    return spec.diamonds * loc.colors


def element_id(spec: PatchSpec, loc: LocationType, i: int, c: int, j: int) -> int:
    """Canonical id of the element at structured coordinate (i, c, j)."""
    colors = loc.colors
    if not 0 <= c < colors:
        raise ValueError(f"color {c} out of range for {loc.value} (0..{colors - 1})")
    i, j = spec.wrap(i, j)
    return (i * colors + c) * spec.cols + j


def element_coord(spec: PatchSpec, loc: LocationType, eid: int) -> tuple[int, int, int]:
    """Inverse of :func:`element_id`: canonical id back to (i, c, j)."""
    n = element_count(spec, loc)
    if not 0 <= eid < n:
        raise ValueError(f"element id {eid} out of range for {loc.value} (0..{n - 1})")
    j = eid % spec.cols
    rest = eid // spec.cols
    c = rest % loc.colors
    i = rest // loc.colors
    return i, c, j


@dataclass
class MeshOracle:
    """Explicit element lists and adjacency built by combinatorial search.

    Primitive incidences (cell corners, edge endpoints) are written down from
    the diamond construction; every other relation is recovered by scanning
    for shared elements.  Neighbor lists are sorted by element id, so the
    oracle fixes neighbor *sets* while the structured offset tables own the
    canonical neighbor *order*.
    """

    spec: PatchSpec
    # primitive incidence
    cell_vertices: np.ndarray = field(repr=False)  # (n_cells, 3)
    edge_vertices: np.ndarray = field(repr=False)  # (n_edges, 2), origin first
    # derived, rows sorted ascending
    cell_edges: np.ndarray = field(repr=False)  # (n_cells, 3)
    cell_cells: np.ndarray = field(repr=False)  # (n_cells, 3)
    edge_cells: np.ndarray = field(repr=False)  # (n_edges, 2)
    edge_edges: np.ndarray = field(repr=False)  # (n_edges, 4)
    vertex_vertices: np.ndarray = field(repr=False)  # (n_vertices, 6)
    vertex_edges: np.ndarray = field(repr=False)  # (n_vertices, 6)
    vertex_cells: np.ndarray = field(repr=False)  # (n_vertices, 6)

    def counts(self) -> dict[LocationType, int]:
        return {loc: element_count(self.spec, loc) for loc in LocationType}

    def neighbors(self, from_loc: LocationType, to_loc: LocationType) -> np.ndarray:
        """Sorted neighbor-id table for one of the nine relations."""
        if from_loc == to_loc is LocationType.VERTICES:
            return self.vertex_vertices
        table = {
            (LocationType.CELLS, LocationType.VERTICES): self.cell_vertices_sorted,
            (LocationType.CELLS, LocationType.EDGES): self.cell_edges,
            (LocationType.CELLS, LocationType.CELLS): self.cell_cells,
            (LocationType.EDGES, LocationType.VERTICES): self.edge_vertices_sorted,
            (LocationType.EDGES, LocationType.CELLS): self.edge_cells,
            (LocationType.EDGES, LocationType.EDGES): self.edge_edges,
            (LocationType.VERTICES, LocationType.EDGES): self.vertex_edges,
            (LocationType.VERTICES, LocationType.CELLS): self.vertex_cells,
        }
        try:
            return table[(from_loc, to_loc)]
        except KeyError:
            raise ValueError(f"no relation {from_loc.value} -> {to_loc.value}") from None

    @property
    def cell_vertices_sorted(self) -> np.ndarray:
        return np.sort(self.cell_vertices, axis=1)

    @property
    def edge_vertices_sorted(self) -> np.ndarray:
        return np.sort(self.edge_vertices, axis=1)


def build_mesh(spec: PatchSpec) -> MeshOracle:
    """Construct the oracle for one patch.

    The primitive incidences (cell corners, edge endpoints, cell boundary
    edges) are written down from the diamond construction.  Matching cells to
    edges through endpoint pairs would be wrong here: a periodic patch with
    two columns is a multigraph where distinct edges share both endpoints, so
    boundary edges are identified by structured identity instead.  All other
    relations are recovered by incidence scans.
    """
    vid = lambda i, j: element_id(spec, LocationType.VERTICES, i, 0, j)
    eid = lambda i, c, j: element_id(spec, LocationType.EDGES, i, c, j)

    n_cells = element_count(spec, LocationType.CELLS)
    n_edges = element_count(spec, LocationType.EDGES)
    n_vertices = element_count(spec, LocationType.VERTICES)

    c2v = np.empty((n_cells, 3), dtype=np.int64)
    e2v = np.empty((n_edges, 2), dtype=np.int64)
    c2e = np.empty((n_cells, 3), dtype=np.int64)
    for i in range(spec.rows):
        for j in range(spec.cols):
            down = element_id(spec, LocationType.CELLS, i, 0, j)
            up = element_id(spec, LocationType.CELLS, i, 1, j)
            # downward triangle spans the diamond's upper-left half
            c2v[down] = (vid(i, j), vid(i, j + 1), vid(i + 1, j + 1))
            c2v[up] = (vid(i, j), vid(i + 1, j), vid(i + 1, j + 1))
            e2v[eid(i, 0, j)] = (vid(i, j), vid(i, j + 1))  # horizontal
            e2v[eid(i, 1, j)] = (vid(i, j), vid(i + 1, j + 1))  # diagonal
            e2v[eid(i, 2, j)] = (vid(i, j), vid(i + 1, j))  # vertical
            c2e[down] = sorted((eid(i, 0, j), eid(i, 1, j), eid(i, 2, j + 1)))
            c2e[up] = sorted((eid(i, 2, j), eid(i, 1, j), eid(i + 1, 0, j)))

    v2c = _invert(c2v, n_vertices, 6)
    v2e = _invert(e2v, n_vertices, 6)
    e2c = _invert(c2e, n_edges, 2)

    c2c = np.empty((n_cells, 3), dtype=np.int64)
    for c in range(n_cells):
        others = sorted(
            int(cc) for e in c2e[c] for cc in e2c[e] if cc != c
        )
        c2c[c] = others

    e2e = np.empty((n_edges, 4), dtype=np.int64)
    for e in range(n_edges):
        others = sorted(
            int(ee) for c in e2c[e] for ee in c2e[c] if ee != e
        )
        e2e[e] = others

    v2v = np.empty((n_vertices, 6), dtype=np.int64)
    for v in range(n_vertices):
        others = sorted(
            int(a) if a != v else int(b) for a, b in e2v[v2e[v]].tolist()
        )
        v2v[v] = others

    return MeshOracle(
        spec=spec,
        cell_vertices=c2v,
        edge_vertices=e2v,
        cell_edges=c2e,
        cell_cells=c2c,
        edge_cells=e2c,
        edge_edges=e2e,
        vertex_vertices=v2v,
        vertex_edges=v2e,
        vertex_cells=v2c,
    )


def _invert(incidence: np.ndarray, n_targets: int, expected: int) -> np.ndarray:
    """Transpose an incidence table; every target must appear ``expected`` times."""
    buckets: list[list[int]] = [[] for _ in range(n_targets)]
    for source, row in enumerate(incidence.tolist()):
        for target in row:
            buckets[target].append(source)
    out = np.empty((n_targets, expected), dtype=np.int64)
    for target, bucket in enumerate(buckets):
        if len(bucket) != expected:
            raise AssertionError(
                f"element {target} has {len(bucket)} incidences, expected {expected}"
            )
        out[target] = sorted(bucket)
    return out
