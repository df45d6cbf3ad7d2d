"""Location-typed storages with mirrored spaces and traffic accounting.

A :class:`Field` owns two buffers ("primary" and "mirror") that model a
host/device pair.  Reads from one space are refused while the other holds
newer data; :func:`sync` reconciles them.  Every counted access updates two
kinds of bookkeeping per phase label:

* raw tallies -- one increment per element touched,
* distinct masks -- a boolean per logical address, so the number of distinct
  elements touched can be reported separately from raw traffic.

Distinct counts identify halo copies with their interior originals (the halo
is a periodic image, not extra data), which makes them a model of compulsory
main-memory traffic.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field as dc_field

import numpy as np

from .layouts import AXES, LayoutSpec, LinearLayout
from .topology import LocationType, PatchSpec

SPACES = ("primary", "mirror")


class StorageError(RuntimeError):
    pass


class StalenessError(StorageError):
    """A space was read while the opposite space held newer data."""


class DivergenceError(StorageError):
    """Both spaces were written since the last sync; neither may win."""


@dataclass(frozen=True)
class Selector:
    """Axis presence flags for a storage."""

    row: bool = True
    color: bool = True
    column: bool = True
    level: bool = True
    extra: bool = False


@dataclass(frozen=True)
class FieldMeta:
    name: str
    location: LocationType
    selector: Selector
    levels: int
    extra_len: int
    layout: LayoutSpec


@dataclass
class _PhaseCounts:
    raw_reads: int = 0
    raw_writes: int = 0
    read_mask: np.ndarray | None = None
    write_mask: np.ndarray | None = None


class Field:
    """One storage plus its mirror, counters and logical views.

    Buffers are zero-initialized.  The five logical axes are always present
    in views; axes switched off by the selector have extent one.
    """

    def __init__(self, spec: PatchSpec, meta: FieldMeta):
        self.spec = spec
        self.meta = meta
        sizes = {
            "row": spec.rows + 2 * spec.halo,
            "color": meta.location.colors,
            "column": spec.cols + 2 * spec.halo,
            "level": meta.levels if meta.selector.level else 1,
            "extra": meta.extra_len if meta.selector.extra else 1,
        }
        self.linear = LinearLayout(meta.layout, sizes, spec.halo)
        self.shape = tuple(sizes[a] for a in AXES)
        self._buffers: dict[str, np.ndarray | None] = {
            "primary": np.zeros(self.linear.total, dtype=np.float64),
            "mirror": None,  # allocated on first use
        }
        self.dirty = {"primary": False, "mirror": False}
        self.sync_count = 0
        self.counters: dict[str, _PhaseCounts] = {}

    # -- buffers and views ------------------------------------------------

    @property
    def name(self) -> str:
        return self.meta.name

    @property
    def has_levels(self) -> bool:
        return self.meta.selector.level

    @property
    def has_extra(self) -> bool:
        return self.meta.selector.extra

    def buffer(self, space: str) -> np.ndarray:
        self._check_space(space)
        buf = self._buffers[space]
        if buf is None:
            buf = np.zeros(self.linear.total, dtype=np.float64)
            self._buffers[space] = buf
        return buf

    def _logical(self, space: str) -> np.ndarray:
        """Five-axis (row, color, column, level, extra) view of one buffer."""
        buf = self.buffer(space)
        shape, strides = self.linear.view_shape_strides()
        return np.lib.stride_tricks.as_strided(
            buf[self.linear.front_pad :],
            shape=shape,
            strides=tuple(s * buf.itemsize for s in strides),
        )

    def array(self, space: str = "primary", mode: str = "r") -> np.ndarray:
        """Uncounted bulk view for infrastructure (halo exchange, setup, tests).

        Still enforces the staleness contract; ``mode='rw'`` marks the space
        dirty up front, ``mode='r'`` hands back a read-only view.
        """
        self._check_stale(space)
        view = self._logical(space)
        if mode == "rw":
            self.dirty[space] = True
        elif mode == "r":
            view = view.view()
            view.flags.writeable = False
        else:
            raise ValueError(f"mode must be 'r' or 'rw', got {mode!r}")
        return view

    def core(self, space: str = "primary") -> np.ndarray:
        """Copy of the interior compute region (halo stripped), uncounted."""
        h = self.spec.halo
        full = self.array(space)
        return full[h : h + self.spec.rows, :, h : h + self.spec.cols].copy()

    def view(self, space: str = "primary") -> "FieldView":
        """Element-wise counted accessor.

        Views check staleness on every access, so a view taken before a
        :func:`sync` must not be reused afterwards without rechecking.
        """
        return FieldView(self, space)

    # -- counted slab access (executor fast path) -------------------------

    def read_slab(
        self,
        space: str,
        counts: "_PhaseCounts",
        c: int,
        k: int,
        x: int,
        i0: int,
        i1: int,
        j0: int,
        j1: int,
    ) -> np.ndarray:
        """Counted 2-D (rows, cols) read view; logical i/j, halo negative.

        ``counts`` is the tally to charge -- either a phase entry of this
        field (see :meth:`phase_counts`) or a detached tally later folded in
        with :meth:`merge_counts`.
        """
        self._check_stale(space)
        sl = self._slab_index(c, k, x, i0, i1, j0, j1)
        counts.raw_reads += (i1 - i0) * (j1 - j0)
        self._mask(counts, "read_mask")[sl] = True
        out = self._logical(space)[sl]
        out = out.view()
        out.flags.writeable = False
        return out

    def write_slab(
        self,
        space: str,
        counts: "_PhaseCounts",
        c: int,
        k: int,
        x: int,
        i0: int,
        i1: int,
        j0: int,
        j1: int,
        values: np.ndarray,
    ) -> None:
        """Counted 2-D write of logical region [i0, i1) x [j0, j1)."""
        self._check_space(space)
        sl = self._slab_index(c, k, x, i0, i1, j0, j1)
        target = self._logical(space)[sl]
        if np.shape(values) != target.shape:
            raise ValueError(
                f"write of shape {np.shape(values)} into region {target.shape}"
            )
        counts.raw_writes += (i1 - i0) * (j1 - j0)
        self._mask(counts, "write_mask")[sl] = True
        self.dirty[space] = True
        target[...] = values

    def _slab_index(self, c, k, x, i0, i1, j0, j1):
        h = self.spec.halo
        si0, si1 = i0 + h, i1 + h
        sj0, sj1 = j0 + h, j1 + h
        if not (0 <= si0 < si1 <= self.shape[0]):
            raise IndexError(f"row range [{i0}, {i1}) outside storage")
        if not (0 <= sj0 < sj1 <= self.shape[2]):
            raise IndexError(f"column range [{j0}, {j1}) outside storage")
        if not 0 <= c < self.shape[1]:
            raise IndexError(f"color {c} out of range [0, {self.shape[1]})")
        if not 0 <= k < self.shape[3]:
            raise IndexError(f"level {k} out of range [0, {self.shape[3]})")
        if not 0 <= x < self.shape[4]:
            raise IndexError(f"extra index {x} out of range [0, {self.shape[4]})")
        return (slice(si0, si1), c, slice(sj0, sj1), k, x)

    # -- counters ---------------------------------------------------------

    def _phase(self, phase: str) -> _PhaseCounts:
        counts = self.counters.get(phase)
        if counts is None:
            counts = self.counters[phase] = _PhaseCounts()
        return counts

    def phase_counts(self, phase: str) -> _PhaseCounts:
        """Tally attached to a phase label (created on first use)."""
        return self._phase(phase)

    def detached_counts(self) -> _PhaseCounts:
        """Fresh tally not yet attached to any phase (per-worker accumulation)."""
        return _PhaseCounts()

    def _mask(self, counts: _PhaseCounts, which: str) -> np.ndarray:
        mask = getattr(counts, which)
        if mask is None:
            mask = np.zeros(self.shape, dtype=bool)
            setattr(counts, which, mask)
        return mask

    def merge_counts(self, phase: str, other: _PhaseCounts) -> None:
        """Fold an externally accumulated tally into this field's counters."""
        counts = self._phase(phase)
        counts.raw_reads += other.raw_reads
        counts.raw_writes += other.raw_writes
        for which in ("read_mask", "write_mask"):
            src = getattr(other, which)
            if src is not None:
                self._mask(counts, which)[...] |= src

    def distinct(self, phase: str, which: str) -> int:
        counts = self.counters.get(phase)
        mask = counts and getattr(counts, which)
        if mask is None:
            return 0
        return _wrapped_distinct(mask, self.spec)

    # -- space bookkeeping ------------------------------------------------

    def _check_space(self, space: str) -> None:
        if space not in SPACES:
            raise ValueError(f"unknown space {space!r}, expected one of {SPACES}")

    def _check_stale(self, space: str) -> None:
        self._check_space(space)
        other = "mirror" if space == "primary" else "primary"
        if self.dirty[other]:
            raise StalenessError(
                f"field {self.name!r}: {space} is stale, {other} holds newer "
                f"data; sync() first"
            )


class FieldView:
    """Scalar get/set access to one space of a field, fully counted."""

    def __init__(self, field: Field, space: str):
        field._check_space(space)
        self.field = field
        self.space = space
        self.phase = "adhoc"

    def get(self, i: int, c: int, j: int, k: int = 0, x: int = 0) -> float:
        f = self.field
        f._check_stale(self.space)
        sl = f._slab_index(c, k, x, i, i + 1, j, j + 1)
        counts = f._phase(self.phase)
        counts.raw_reads += 1
        f._mask(counts, "read_mask")[sl] = True
        return float(f._logical(self.space)[sl][0, 0])

    def set(self, value: float, i: int, c: int, j: int, k: int = 0, x: int = 0) -> None:
        f = self.field
        sl = f._slab_index(c, k, x, i, i + 1, j, j + 1)
        counts = f._phase(self.phase)
        counts.raw_writes += 1
        f._mask(counts, "write_mask")[sl] = True
        f.dirty[self.space] = True
        f._logical(self.space)[sl] = value


def make_storage(
    spec: PatchSpec,
    loc: LocationType,
    name: str,
    selector: Selector | None = None,
    extra_len: int = 0,
    levels: int | None = None,
    layout: LayoutSpec | None = None,
) -> Field:
    """Allocate a field on one location type.

    ``levels`` overrides the patch level count for vertically staggered
    storages (for example a flux defined on level interfaces).
    """
    if selector is None:
        selector = Selector(extra=extra_len > 0)
    if loc.colors > 1 and not selector.color:
        raise ValueError(
            f"storage {name!r}: selector flag 'color' is required on "
            f"{loc.value} (multiple colors per diamond)"
        )
    if not (selector.row and selector.column):
        flag = "row" if not selector.row else "column"
        raise ValueError(f"storage {name!r}: selector flag {flag!r} must be set")
    if selector.extra != (extra_len > 0):
        raise ValueError(
            f"storage {name!r}: selector flag 'extra' inconsistent with "
            f"extra_len={extra_len}"
        )
    if extra_len < 0:
        raise ValueError(f"storage {name!r}: extra_len must be >= 0")
    meta = FieldMeta(
        name=name,
        location=loc,
        selector=selector,
        levels=spec.levels if levels is None else int(levels),
        extra_len=extra_len,
        layout=layout if layout is not None else LayoutSpec(),
    )
    if meta.selector.level and meta.levels < 1:
        raise ValueError(f"storage {name!r}: levels must be >= 1")
    return Field(spec, meta)


def sync(field: Field, to_space: str) -> None:
    """Reconcile the two spaces by copying into ``to_space``.

    A no-op when both spaces are clean.  Raises :class:`DivergenceError`
    when both are dirty.  Sync transfers are tracked by ``sync_count`` only;
    they never appear in element traffic.
    """
    field._check_space(to_space)
    src = "mirror" if to_space == "primary" else "primary"
    if field.dirty["primary"] and field.dirty["mirror"]:
        raise DivergenceError(
            f"field {field.name!r}: both spaces modified since last sync"
        )
    if field.dirty[src]:
        np.copyto(field.buffer(to_space), field.buffer(src))
    field.dirty = {"primary": False, "mirror": False}
    field.sync_count += 1


def reset_counters(fields) -> None:
    for f in fields:
        f.counters.clear()


def _wrapped_distinct(mask: np.ndarray, spec: PatchSpec) -> int:
    """Count distinct logical elements, folding halo images onto the interior."""
    h, rows, cols = spec.halo, spec.rows, spec.cols
    folded = mask[h : h + rows].copy()
    folded[rows - h : rows] |= mask[:h]
    folded[:h] |= mask[h + rows :]
    out = folded[:, :, h : h + cols].copy()
    out[:, :, cols - h : cols] |= folded[:, :, :h]
    out[:, :, :h] |= folded[:, :, h + cols :]
    return int(out.sum())


@dataclass
class TrafficRow:
    field: str
    stage: str
    distinct_reads: int
    distinct_writes: int
    raw_reads: int
    raw_writes: int


CSV_HEADER = "field,stage,distinct_reads,distinct_writes,raw_reads,raw_writes"


@dataclass
class TrafficReport:
    """Per-(field, phase) traffic table with location-aware totals."""

    rows: list[TrafficRow] = dc_field(default_factory=list)
    locations: dict[str, LocationType] = dc_field(default_factory=dict)
    flat: dict[str, bool] = dc_field(default_factory=dict)  # field -> is 2-D

    @classmethod
    def gather(cls, fields, prefix: str = "") -> "TrafficReport":
        """Collect counters from fields; ``prefix`` filters phase labels."""
        report = cls()
        for f in sorted(fields, key=lambda f: f.name):
            report.locations[f.name] = f.meta.location
            report.flat[f.name] = not f.has_levels
            for phase in sorted(f.counters):
                if not phase.startswith(prefix):
                    continue
                counts = f.counters[phase]
                report.rows.append(
                    TrafficRow(
                        field=f.name,
                        stage=phase,
                        distinct_reads=f.distinct(phase, "read_mask"),
                        distinct_writes=f.distinct(phase, "write_mask"),
                        raw_reads=counts.raw_reads,
                        raw_writes=counts.raw_writes,
                    )
                )
        return report

    def total_distinct(self, ignore_2d: bool = False, locations=None) -> int:
        """Distinct reads + writes summed over all rows, with filters."""
        total = 0
        for row in self.rows:
            if ignore_2d and self.flat.get(row.field, False):
                continue
            if locations is not None and self.locations[row.field] not in locations:
                continue
            total += row.distinct_reads + row.distinct_writes
        return total

    def total_raw(self, ignore_2d: bool = False) -> int:
        total = 0
        for row in self.rows:
            if ignore_2d and self.flat.get(row.field, False):
                continue
            total += row.raw_reads + row.raw_writes
        return total

    def to_csv(self, stream=None) -> str:
        out = stream or io.StringIO()
        out.write(CSV_HEADER + "\n")
        for row in self.rows:
            out.write(
                f"{row.field},{row.stage},{row.distinct_reads},"
                f"{row.distinct_writes},{row.raw_reads},{row.raw_writes}\n"
            )
        return out.getvalue() if stream is None else ""


def plane_access_total(counts: dict[str, int], coefficients: dict[str, tuple[int, int]]) -> int:
    """Total per-plane accesses from element counts and (reads, writes) weights.

    Closed-form model of one horizontal plane of a sweep: each element group
    contributes ``count * (reads + writes)``.
    """
    missing = set(coefficients) - set(counts)
    if missing:
        raise ValueError(f"no element counts for groups {sorted(missing)}")
    return sum(counts[g] * (r + w) for g, (r, w) in coefficients.items())
