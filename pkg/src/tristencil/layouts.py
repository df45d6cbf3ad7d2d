"""Memory layouts, element numberings and access-pattern metrics.

Structured storages are indexed by five logical axes: ``row``, ``color``,
``column``, ``level`` and ``extra`` (a free trailing dimension for things
like per-neighbor weights).  A :class:`LayoutSpec` chooses the memory
nesting order and an alignment unit; :class:`LinearLayout` resolves that
into strides, row padding and a single front pad so that the first interior
column of every row starts on an aligned address.

Flat (unstructured-style) element orders are expressed as permutations of
the canonical id space.  Three numbering schemes are supported:

* ``sn`` -- structured numbering, the identity,
* ``un`` -- colors interleaved per diamond, ``rank = (i*cols + j)*colors + c``,
* ``hn`` -- ranks along a Hilbert space-filling curve over the patch.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .topology import LocationType, PatchSpec, element_count, element_id

AXES = ("row", "color", "column", "level", "extra")
DEFAULT_DIM_ORDER = ("extra", "level", "row", "color", "column")


@dataclass(frozen=True)
class LayoutSpec:
    """Memory nesting order (outermost first) and alignment in elements."""

    dim_order: tuple[str, ...] = DEFAULT_DIM_ORDER
    alignment: int = 8

    def __post_init__(self):
        if sorted(self.dim_order) != sorted(AXES):
            raise ValueError(
                f"dim_order must be a permutation of {AXES}, got {self.dim_order}"
            )
        if self.alignment < 1:
            raise ValueError(f"alignment must be >= 1, got {self.alignment}")

    @property
    def innermost(self) -> str:
        return self.dim_order[-1]


def _ceil_to(n: int, unit: int) -> int:
    return -(-n // unit) * unit


class LinearLayout:
    """Strides and padding for one structured buffer.

    ``sizes`` gives the logical extent per axis (halo included for row and
    column).  Only the innermost axis is padded, up to a multiple of the
    alignment; that keeps every outer stride aligned as well.  ``front_pad``
    shifts the whole buffer so that, for column-innermost orders, the first
    interior column lands on an aligned offset.
    """

    def __init__(self, spec: LayoutSpec, sizes: dict[str, int], halo: int):
        if set(sizes) != set(AXES):
            raise ValueError(f"sizes must cover axes {AXES}, got {sorted(sizes)}")
        self.spec = spec
        self.sizes = dict(sizes)
        self.halo = halo
        padded = dict(sizes)
        padded[spec.innermost] = _ceil_to(sizes[spec.innermost], spec.alignment)
        self.padded = padded
        strides: dict[str, int] = {}
        acc = 1
        for axis in reversed(spec.dim_order):
            strides[axis] = acc
            acc *= padded[axis]
        self.strides = strides
        self.front_pad = (-halo * strides["column"]) % spec.alignment
        self.total = self.front_pad + acc

    def offset(self, i: int, c: int, j: int, k: int = 0, x: int = 0) -> int:
        """Linear element offset for logical indices (halo rows/cols negative)."""
        storage = {
            "row": i + self.halo,
            "color": c,
            "column": j + self.halo,
            "level": k,
            "extra": x,
        }
        for axis, idx in storage.items():
            if not 0 <= idx < self.sizes[axis]:
                raise IndexError(
                    f"{axis} index out of range: storage index {idx} not in "
                    f"[0, {self.sizes[axis]})"
                )
        return self.front_pad + sum(storage[a] * self.strides[a] for a in AXES)

    def view_shape_strides(self) -> tuple[tuple[int, ...], tuple[int, ...]]:
        """Logical (row, color, column, level, extra) shape and element strides."""
        shape = tuple(self.sizes[a] for a in AXES)
        strides = tuple(self.strides[a] for a in AXES)
        return shape, strides


def sn_offset(
    layout: LayoutSpec,
    spec: PatchSpec,
    loc: LocationType,
    i: int,
    c: int,
    j: int,
    k: int = 0,
    x: int = 0,
    levels: int | None = None,
    extra: int = 1,
) -> int:
    """Linear offset of one element in a default-shaped structured buffer."""
    linear = LinearLayout(
        layout,
        {
            "row": spec.rows + 2 * spec.halo,
            "color": loc.colors,
            "column": spec.cols + 2 * spec.halo,
            "level": spec.levels if levels is None else levels,
            "extra": extra,
        },
        spec.halo,
    )
    return linear.offset(i, c, j, k, x)


class Numbering(enum.Enum):
    SN = "sn"
    UN = "un"
    HN = "hn"


class AccessMethod(enum.Enum):
    DIRECT = "direct"
    INDIRECT = "indirect"


def check_access_combo(numbering: Numbering, access: AccessMethod) -> None:
    """Direct (offset-arithmetic) access only exists for the structured order."""
    if access is AccessMethod.DIRECT and numbering is not Numbering.SN:
        raise ValueError(
            f"direct access requires sn numbering, got {numbering.value}"
        )


@dataclass(frozen=True)
class Permutation:
    """Bijection between canonical element ids and storage ranks."""

    forward: np.ndarray  # element id -> rank
    inverse: np.ndarray  # rank -> element id

    def __post_init__(self):
        n = len(self.forward)
        if len(self.inverse) != n:
            raise ValueError("forward/inverse length mismatch")
        if not np.array_equal(self.inverse[self.forward], np.arange(n)):
            raise ValueError("permutation is not a bijection")

    def __len__(self) -> int:
        return len(self.forward)

    @classmethod
    def from_forward(cls, forward: np.ndarray) -> "Permutation":
        forward = np.asarray(forward, dtype=np.int64)
        inverse = np.empty_like(forward)
        inverse[forward] = np.arange(len(forward))
        return cls(forward=forward, inverse=inverse)

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        ids = np.arange(n, dtype=np.int64)
        return cls(forward=ids, inverse=ids.copy())


def hilbert_rank(n: int, x: int, y: int) -> int:
    """Rank of cell (x, y) on the n x n Hilbert curve.

    Canonical orientation: for n = 2 the curve visits (0,0), (0,1), (1,1),
    (1,0) in rank order.
    """
    _check_hilbert_args(n, x, y)
    rank = 0
    s = n // 2
    while s > 0:
        rx = 1 if x & s else 0
        ry = 1 if y & s else 0
        rank += s * s * ((3 * rx) ^ ry)
        x, y = _hilbert_rotate(s, x, y, rx, ry)
        s //= 2
    return rank


def hilbert_xy(n: int, rank: int) -> tuple[int, int]:
    """Inverse of :func:`hilbert_rank`."""
    if not (n >= 2 and n & (n - 1) == 0):
        raise ValueError(f"n must be a power of two >= 2, got {n}")
    if not 0 <= rank < n * n:
        raise ValueError(f"rank {rank} out of range [0, {n * n})")
    x = y = 0
    t = rank
    s = 1
    while s < n:
        rx = 1 & (t // 2)
        ry = 1 & (t ^ rx)
        x, y = _hilbert_rotate(s, x, y, rx, ry)
        x += s * rx
        y += s * ry
        t //= 4
        s *= 2
    return x, y


def _hilbert_rotate(s: int, x: int, y: int, rx: int, ry: int) -> tuple[int, int]:
    if ry == 0:
        if rx == 1:
            x = s - 1 - x
            y = s - 1 - y
        x, y = y, x
    return x, y


def _check_hilbert_args(n: int, x: int, y: int) -> None:
    if not (n >= 2 and n & (n - 1) == 0):
        raise ValueError(f"n must be a power of two >= 2, got {n}")
    if not (0 <= x < n and 0 <= y < n):
        raise ValueError(f"cell ({x}, {y}) outside the {n} x {n} grid")


def _hilbert_embedding(spec: PatchSpec, loc: LocationType):
    """Quad-grid embedding used for the Hilbert numbering.

    Vertices map to (i, j); cells pair up per diamond as (i, 2j + c).  Edges
    have three colors and no natural quad embedding, so they are rejected.
    """
    if loc is LocationType.VERTICES:
        return spec.rows, spec.cols, lambda x, y: (x, 0, y)
    if loc is LocationType.CELLS:
        return spec.rows, 2 * spec.cols, lambda x, y: (x, y % 2, y // 2)
    raise ValueError("hn numbering is not defined for edges")


def make_permutation(numbering: Numbering, patch, loc: LocationType) -> Permutation:
    """Permutation for a numbering scheme; ``patch`` may be a spec or a mesh."""
    spec: PatchSpec = getattr(patch, "spec", patch)
    n = element_count(spec, loc)
    if numbering is Numbering.SN:
        return Permutation.identity(n)
    if numbering is Numbering.UN:
        forward = np.empty(n, dtype=np.int64)
        for i in range(spec.rows):
            for c in range(loc.colors):
                for j in range(spec.cols):
                    eid = element_id(spec, loc, i, c, j)
                    forward[eid] = (i * spec.cols + j) * loc.colors + c
        return Permutation.from_forward(forward)
    # Hilbert: walk the curve over the embedding grid, skipping cells that
    # fall outside the (possibly non-square) patch extents.
    gx, gy, to_coord = _hilbert_embedding(spec, loc)
    side = 2
    while side < max(gx, gy):
        side *= 2
    forward = np.empty(n, dtype=np.int64)
    rank = 0
    for d in range(side * side):
        x, y = hilbert_xy(side, d)
        if x < gx and y < gy:
            i, c, j = to_coord(x, y)
            forward[element_id(spec, loc, i, c, j)] = rank
            rank += 1
    assert rank == n
    return Permutation.from_forward(forward)


def coalescing_fraction(groups) -> float:
    """Fraction of access groups whose addresses form one contiguous range.

    Each group models the addresses touched by one warp/vector of consecutive
    iterations for a single accessor.  A group counts as coalesced when its
    addresses are distinct and cover ``[min, min + len)``; order inside the
    group does not matter.  Width-1 groups are trivially coalesced.
    """
    groups = list(groups)
    if not groups:
        raise ValueError("no access groups given")
    hits = sum(1 for g in groups if _is_contiguous(g))
    return hits / len(groups)


def _is_contiguous(group) -> bool:
    addrs = sorted(int(a) for a in group)
    if not addrs:
        raise ValueError("empty access group")
    return all(b - a == 1 for a, b in zip(addrs, addrs[1:]))


def direct_sweep_groups(
    layout: LayoutSpec, spec: PatchSpec, loc: LocationType, width: int
) -> list[list[int]]:
    """Warp address groups for a direct column sweep of one structured field.

    Iterations advance along interior columns of one (row, color, level) line
    at a time; each line is chopped into groups of ``width`` (the last group
    of a line may be shorter).
    """
    if width < 1:
        raise ValueError(f"width must be >= 1, got {width}")
    groups = []
    for i in range(spec.rows):
        for c in range(loc.colors):
            for k in range(spec.levels):
                line = [
                    sn_offset(layout, spec, loc, i, c, j, k)
                    for j in range(spec.cols)
                ]
                groups.extend(
                    line[start : start + width] for start in range(0, len(line), width)
                )
    return groups
