"""Stencil composition: stages, multistages and validated computations.

A *stage* is an elemental update on one location type: a body function that
reads its inputs through accessors and stores exactly one output value per
element.  Bodies are written against an evaluation context and evaluated one
horizontal plane at a time; every context read returns a 2-D array over the
current (rows, cols) region, so plain arithmetic inside a body applies
elementwise.

Stages are grouped into *multistages* with a vertical iteration policy
(``parallel``, ``forward`` or ``backward``) and a set of cached fields.
Cached intermediates never reach main storage: the fused executor keeps them
in per-tile scratch rings sized by the planning pass here.

:func:`compose` binds stage parameters to concrete storages, dry-runs every
body once per (color, vertical interval) against a tracing context, and
validates the whole program: extents against the halo, vertical accesses
against field level counts, cache lifetimes, and policy restrictions.  The
same trace drives the fusion plan (per-stage lags, redundant-computation
aprons, scratch window depths).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field as dc_field

import numpy as np

from .connectivity import structured_offsets
from .storage import Field
from .topology import LocationType, PatchSpec


class CompositionError(ValueError):
    """A stage program violates the composition rules."""


class Intent(enum.Enum):
    IN = "in"
    OUT = "out"


@dataclass(frozen=True)
class Extent:
    """Horizontal access hull relative to the iteration point."""

    imin: int = 0
    imax: int = 0
    jmin: int = 0
    jmax: int = 0

    def __post_init__(self):
        if not (self.imin <= 0 <= self.imax and self.jmin <= 0 <= self.jmax):
            raise ValueError(f"extent must straddle the origin, got {self}")

    def contains(self, di: int, dj: int) -> bool:
        return self.imin <= di <= self.imax and self.jmin <= dj <= self.jmax


@dataclass(frozen=True)
class Accessor:
    """One stage parameter: a named slot with intent, location and reach."""

    slot: str
    intent: Intent
    location: LocationType
    extent: Extent = Extent()
    k_extent: tuple[int, int] = (0, 0)

    def __post_init__(self):
        klo, khi = self.k_extent
        if not klo <= 0 <= khi:
            raise ValueError(f"k_extent must straddle 0, got {self.k_extent}")


def accessor(slot, intent, location, extent=(0, 0, 0, 0), k=(0, 0)) -> Accessor:
    """Shorthand accessor constructor with tuple extents."""
    return Accessor(slot, intent, location, Extent(*extent), tuple(k))


@dataclass(frozen=True)
class StageSpec:
    """Elemental update on one location type.

    ``body`` (and the optional ``kminimum``/``kmaximum`` boundary variants)
    is either a single callable or a per-color dict.  Boundary variants
    replace the body on the first/last level of the stage's vertical range;
    with a single level, ``kminimum`` wins.
    """

    name: str
    location: LocationType
    accessors: tuple[Accessor, ...]
    body: object
    kminimum: object = None
    kmaximum: object = None

    def __post_init__(self):
        slots = [a.slot for a in self.accessors]
        if len(set(slots)) != len(slots):
            raise ValueError(f"stage {self.name!r}: duplicate accessor slots")
        outs = [a for a in self.accessors if a.intent is Intent.OUT]
        if len(outs) != 1:
            raise ValueError(
                f"stage {self.name!r}: exactly one out accessor required, "
                f"got {len(outs)}"
            )
        if outs[0].location is not self.location:
            raise ValueError(
                f"stage {self.name!r}: out accessor lives on "
                f"{outs[0].location.value}, stage iterates {self.location.value}"
            )

    @property
    def out(self) -> Accessor:
        return next(a for a in self.accessors if a.intent is Intent.OUT)

    def slot(self, name: str) -> Accessor:
        for a in self.accessors:
            if a.slot == name:
                return a
        raise KeyError(f"stage {self.name!r} has no slot {name!r}")

    def body_for(self, color: int, interval: str):
        source = {
            "kbody": self.body,
            "kminimum": self.kminimum if self.kminimum is not None else self.body,
            "kmaximum": self.kmaximum if self.kmaximum is not None else self.body,
        }[interval]
        if isinstance(source, dict):
            try:
                return source[color]
            except KeyError:
                raise CompositionError(
                    f"stage {self.name!r}: no {interval} body for color {color}"
                ) from None
        return source


def interval_for(stage: StageSpec, k: int, nk: int) -> str:
    """Vertical interval dispatch; with one level the lower boundary wins."""
    if k == 0 and stage.kminimum is not None:
        return "kminimum"
    if k == nk - 1 and stage.kmaximum is not None:
        return "kmaximum"
    return "kbody"


@dataclass(frozen=True)
class StageUse:
    """A stage plus the computation-level field names feeding its slots."""

    stage: StageSpec
    params: tuple[str, ...]

    def __post_init__(self):
        if len(self.params) != len(self.stage.accessors):
            raise ValueError(
                f"stage {self.stage.name!r} takes {len(self.stage.accessors)} "
                f"parameters, got {len(self.params)}"
            )

    def param_of(self, slot: str) -> str:
        for acc, param in zip(self.stage.accessors, self.params):
            if acc.slot == slot:
                return param
        raise KeyError(slot)


POLICIES = ("parallel", "forward", "backward")


@dataclass(frozen=True)
class MultiStageSpec:
    policy: str
    stages: tuple[StageUse, ...]
    caches: frozenset[str] = frozenset()

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ValueError(
                f"policy must be one of {POLICIES}, got {self.policy!r}"
            )
        if not self.stages:
            raise ValueError("multistage needs at least one stage")


def multistage(policy: str, *uses, caches=()) -> MultiStageSpec:
    return MultiStageSpec(policy, tuple(uses), frozenset(caches))


# ---------------------------------------------------------------------------
# trace records


@dataclass
class SlotTrace:
    """Accesses observed for one slot during the dry run."""

    offsets: set = dc_field(default_factory=set)  # (di, tc, dj) or None
    dks: set = dc_field(default_factory=set)
    xs: set = dc_field(default_factory=set)
    written: bool = False

    def hull(self) -> Extent:
        pts = [(di, dj) for off in self.offsets if off is not None for di, _, dj in [off]]
        pts.append((0, 0))  # the stage computes at the origin regardless
        return Extent(
            imin=min(p[0] for p in pts),
            imax=max(p[0] for p in pts),
            jmin=min(p[1] for p in pts),
            jmax=max(p[1] for p in pts),
        )

    def dk_range(self) -> tuple[int, int]:
        if not self.dks:
            return (0, 0)
        return (min(self.dks), max(self.dks))


@dataclass
class Apron:
    """Extra ring of elements a stage computes redundantly around a tile."""

    im: int = 0
    ip: int = 0
    jm: int = 0
    jp: int = 0

    def widen(self, consumer: "Apron", hull: Extent) -> None:
        self.im = max(self.im, consumer.im - hull.imin)
        self.ip = max(self.ip, consumer.ip + hull.imax)
        self.jm = max(self.jm, consumer.jm - hull.jmin)
        self.jp = max(self.jp, consumer.jp + hull.jmax)

    def is_zero(self) -> bool:
        return (self.im, self.ip, self.jm, self.jp) == (0, 0, 0, 0)


class BoundStage:
    """A stage use resolved against concrete storages, plus its trace."""

    def __init__(self, use: StageUse, fields: dict[str, Field]):
        self.use = use
        self.stage = use.stage
        self.fields = fields  # slot -> Field
        out_field = fields[self.stage.out.slot]
        self.nk = out_field.meta.levels if out_field.has_levels else 1
        self.traces: dict[str, dict[str, SlotTrace]] = {}  # interval -> slot -> trace

    @property
    def name(self) -> str:
        return self.stage.name

    def intervals(self) -> list[str]:
        seen = []
        for k in range(self.nk):
            label = interval_for(self.stage, k, self.nk)
            if label not in seen:
                seen.append(label)
        return seen

    def interval_k_range(self, label: str) -> tuple[int, int] | None:
        ks = [k for k in range(self.nk) if interval_for(self.stage, k, self.nk) == label]
        if not ks:
            return None
        return min(ks), max(ks)

    def slot_trace(self, slot: str) -> SlotTrace:
        """Union of the per-interval traces for one slot."""
        merged = SlotTrace()
        for traces in self.traces.values():
            t = traces.get(slot)
            if t is None:
                continue
            merged.offsets |= t.offsets
            merged.dks |= t.dks
            merged.xs |= t.xs
            merged.written |= t.written
        return merged


class BoundMultiStage:
    def __init__(self, spec: MultiStageSpec, stages: list[BoundStage]):
        self.spec = spec
        self.stages = stages
        self.producers: dict[str, int] = {}  # field name -> producing stage index
        for idx, bs in enumerate(stages):
            self.producers[bs.use.param_of(bs.stage.out.slot)] = idx
        # filled by the planning pass
        self.aprons: list[Apron] = []
        self.lags: list[int] = []
        self.windows: dict[str, int] = {}
        self.cache_regions: dict[str, Apron] = {}

    @property
    def policy(self) -> str:
        return self.spec.policy

    @property
    def caches(self) -> frozenset[str]:
        return self.spec.caches

    def input_names(self) -> set[str]:
        names = set()
        for bs in self.stages:
            names.update(bs.use.params)
        return names - set(self.producers)


class Computation:
    """A validated stage program bound to storages on one patch."""

    def __init__(self, patch: PatchSpec, bindings: dict[str, Field],
                 multistages: list[BoundMultiStage]):
        self.patch = patch
        self.bindings = bindings
        self.multistages = multistages

    def fields(self) -> list[Field]:
        return list(self.bindings.values())

    def total_updates(self) -> int:
        total = 0
        area = self.patch.rows * self.patch.cols
        for ms in self.multistages:
            for bs in ms.stages:
                total += area * bs.stage.location.colors * bs.nk
        return total


# ---------------------------------------------------------------------------
# evaluation contexts


class EvalContext:
    """What a stage body sees: plane reads, neighbor offsets, one store.

    ``read`` returns the requested field over the current region as a 2-D
    (rows, cols) array; ``offset`` picks a structured neighbor, ``dk`` a
    vertical displacement and ``x`` an extra-axis index.  ``reduce`` folds a
    neighborhood in canonical offset order: ``fold(neighbor_value, acc)``
    applied left to right, which pins the floating-point summation order.
    """

    def __init__(self, bound: BoundStage, ports: dict[str, object],
                 color: int, k: int, nk: int):
        self._bound = bound
        self._ports = ports
        self.color = color
        self.level = k
        self.levels = nk
        self._stored = False

    def read(self, slot: str, offset=None, dk: int = 0, x: int | None = None):
        acc = self._bound.stage.slot(slot)
        if acc.intent is Intent.OUT:
            raise CompositionError(
                f"stage {self._bound.name!r}: slot {slot!r} is write-only"
            )
        field = self._bound.fields[slot]
        if offset is None:
            if field.meta.location is not self._bound.stage.location:
                raise CompositionError(
                    f"stage {self._bound.name!r}: pointwise read of {slot!r} "
                    f"crosses locations ({field.meta.location.value}); use a "
                    f"neighbor offset"
                )
            di, tc, dj = 0, self.color, 0
        else:
            di, tc, dj = offset
            if not acc.extent.contains(di, dj):
                raise CompositionError(
                    f"stage {self._bound.name!r}: read of {slot!r} at "
                    f"({di}, {dj}) outside declared extent {acc.extent}"
                )
        klo, khi = acc.k_extent
        if not klo <= dk <= khi:
            raise CompositionError(
                f"stage {self._bound.name!r}: read of {slot!r} at dk={dk} "
                f"outside declared k_extent {acc.k_extent}"
            )
        if x is None:
            if field.has_extra:
                raise CompositionError(
                    f"stage {self._bound.name!r}: slot {slot!r} has an extra "
                    f"axis; an x index is required"
                )
            x = 0
        elif not field.has_extra:
            raise CompositionError(
                f"stage {self._bound.name!r}: slot {slot!r} has no extra axis"
            )
        if dk and not field.has_levels:
            raise CompositionError(
                f"stage {self._bound.name!r}: vertical offset on 2-D slot {slot!r}"
            )
        return self._ports[slot].read(di, tc, dj, dk, x)

    def offsets(self, to_loc: LocationType):
        return structured_offsets(self._bound.stage.location, to_loc, self.color).entries

    def reduce(self, to_loc: LocationType, fold, init, slot: str, dk: int = 0):
        acc = init
        for off in self.offsets(to_loc):
            acc = fold(self.read(slot, off, dk=dk), acc)
        return acc

    def store(self, values) -> None:
        if self._stored:
            raise CompositionError(
                f"stage {self._bound.name!r}: body stored more than once"
            )
        self._ports[self._bound.stage.out.slot].write(values)
        self._stored = True

    def finish(self) -> None:
        if not self._stored:
            raise CompositionError(
                f"stage {self._bound.name!r}: body returned without storing"
            )


class _TracePort:
    def __init__(self, trace: SlotTrace):
        self.trace = trace

    def read(self, di, tc, dj, dk, x):
        return np.ones((1, 1))

    def write(self, values):
        self.trace.written = True


class _TraceContext(EvalContext):
    """Dry-run context: reads return ones, every access is recorded."""

    def __init__(self, bound: BoundStage, traces: dict[str, SlotTrace], color: int):
        ports = {slot: _TracePort(traces[slot]) for slot in traces}
        super().__init__(bound, ports, color, k=0, nk=max(bound.nk, 3))
        self._traces = traces

    def read(self, slot, offset=None, dk=0, x=None):
        out = super().read(slot, offset=offset, dk=dk, x=x)
        t = self._traces[slot]
        t.offsets.add(None if offset is None else tuple(offset))
        t.dks.add(dk)
        if x is not None:
            t.xs.add(x)
        return out


# ---------------------------------------------------------------------------
# composition


def compose(patch: PatchSpec, multistages, bindings: dict[str, Field]) -> Computation:
    """Bind, trace and validate a stage program.

    Raises :class:`CompositionError` for any rule violation; on success the
    returned computation carries the complete fusion plan.
    """
    ms_specs = list(multistages)
    seen_stages: set[str] = set()
    bound_ms: list[BoundMultiStage] = []
    for ms in ms_specs:
        bound_stages = []
        for use in ms.stages:
            if use.stage.name in seen_stages:
                raise CompositionError(
                    f"duplicate stage name {use.stage.name!r} in computation"
                )
            seen_stages.add(use.stage.name)
            fields = _bind_stage(patch, use, bindings)
            bound_stages.append(BoundStage(use, fields))
        bound_ms.append(BoundMultiStage(ms, bound_stages))

    for bms in bound_ms:
        for bs in bms.stages:
            _trace_stage(bs)
        _check_caches(bms)
        _check_vertical(bms)
        _plan_fusion(bms, patch)
    _check_escapes(bound_ms)
    return Computation(patch, dict(bindings), bound_ms)


def _bind_stage(patch: PatchSpec, use: StageUse, bindings: dict[str, Field]):
    fields: dict[str, Field] = {}
    for acc, param in zip(use.stage.accessors, use.params):
        if param not in bindings:
            raise CompositionError(
                f"stage {use.stage.name!r}: parameter {param!r} is not bound"
            )
        f = bindings[param]
        if f.meta.location is not acc.location:
            raise CompositionError(
                f"stage {use.stage.name!r}: slot {acc.slot!r} expects "
                f"{acc.location.value}, field {param!r} lives on "
                f"{f.meta.location.value}"
            )
        if f.spec != patch:
            raise CompositionError(
                f"stage {use.stage.name!r}: field {param!r} was allocated on a "
                f"different patch"
            )
        reach = max(acc.extent.imax, -acc.extent.imin,
                    acc.extent.jmax, -acc.extent.jmin)
        if reach > patch.halo:
            raise CompositionError(
                f"stage {use.stage.name!r}: slot {acc.slot!r} extent {acc.extent} "
                f"exceeds halo width {patch.halo}"
            )
        if acc.k_extent != (0, 0) and not f.has_levels:
            raise CompositionError(
                f"stage {use.stage.name!r}: slot {acc.slot!r} declares a "
                f"vertical extent but field {param!r} has no level axis"
            )
        fields[acc.slot] = f
    return fields


def _trace_stage(bs: BoundStage) -> None:
    for label in bs.intervals():
        traces = {a.slot: SlotTrace() for a in bs.stage.accessors}
        for color in range(bs.stage.location.colors):
            body = bs.stage.body_for(color, label)
            ctx = _TraceContext(bs, traces, color)
            body(ctx)
            ctx.finish()
        if not traces[bs.stage.out.slot].written:
            raise CompositionError(f"stage {bs.name!r}: out slot never stored")
        bs.traces[label] = traces


def _check_caches(bms: BoundMultiStage) -> None:
    param_names = set()
    readers: dict[str, list[int]] = {}
    for idx, bs in enumerate(bms.stages):
        out_slot = bs.stage.out.slot
        for acc, param in zip(bs.stage.accessors, bs.use.params):
            param_names.add(param)
            if acc.slot == out_slot:
                continue
            readers.setdefault(param, []).append(idx)
        out_param = bs.use.param_of(out_slot)
        if out_param in {p for a, p in zip(bs.stage.accessors, bs.use.params)
                         if a.intent is Intent.IN}:
            raise CompositionError(
                f"stage {bs.name!r}: reads and writes {out_param!r} in the same "
                f"stage; in-place updates are not supported"
            )
    unknown = bms.caches - param_names
    if unknown:
        raise CompositionError(
            f"cached fields {sorted(unknown)} are not parameters of this multistage"
        )
    for name, producer in bms.producers.items():
        reads = readers.get(name, [])
        if name in bms.caches:
            if not reads:
                raise CompositionError(
                    f"cached field {name!r} is produced but never consumed; "
                    f"a cache is never written back to main storage"
                )
            early = [r for r in reads if r <= producer]
            if early:
                raise CompositionError(
                    f"cached field {name!r} is read by stage "
                    f"{bms.stages[early[0]].name!r} before it is produced"
                )
        elif reads:
            raise CompositionError(
                f"field {name!r} is written and read within one multistage but "
                f"is not cached; double-buffer it or add it to the caches"
            )
    if len(set(bms.producers.values())) != len(bms.stages):
        raise CompositionError("two stages in one multistage write the same field")


def _check_vertical(bms: BoundMultiStage) -> None:
    for bs in bms.stages:
        for label, traces in bs.traces.items():
            krange = bs.interval_k_range(label)
            if krange is None:
                continue
            klo, khi = krange
            for acc, param in zip(bs.stage.accessors, bs.use.params):
                t = traces.get(acc.slot)
                if t is None or acc.intent is Intent.OUT or not t.dks:
                    continue
                f = bs.fields[acc.slot]
                if not f.has_levels:
                    if t.dks != {0}:
                        raise CompositionError(
                            f"stage {bs.name!r}: vertical offsets on 2-D field "
                            f"{param!r}"
                        )
                    continue
                dkmin, dkmax = min(t.dks), max(t.dks)
                if klo + dkmin < 0 or khi + dkmax > f.meta.levels - 1:
                    raise CompositionError(
                        f"stage {bs.name!r} ({label}): reads {param!r} at levels "
                        f"[{klo + dkmin}, {khi + dkmax}] outside "
                        f"[0, {f.meta.levels - 1}]"
                    )
        if bms.policy == "parallel":
            for acc, param in zip(bs.stage.accessors, bs.use.params):
                if acc.intent is Intent.OUT or param not in bms.producers:
                    continue
                dks = bs.slot_trace(acc.slot).dks
                if dks - {0}:
                    raise CompositionError(
                        f"parallel multistage: stage {bs.name!r} reads "
                        f"{param!r} at vertical offsets {sorted(dks - {0})}, "
                        f"but {param!r} is produced in the same multistage"
                    )


def _check_escapes(bound_ms: list[BoundMultiStage]) -> None:
    for idx, bms in enumerate(bound_ms):
        for name in bms.caches & set(bms.producers):
            for later in bound_ms[idx + 1 :]:
                if name in later.input_names():
                    raise CompositionError(
                        f"cached field {name!r} escapes its multistage: it is "
                        f"read later but was never written to main storage"
                    )


def _plan_fusion(bms: BoundMultiStage, patch: PatchSpec) -> None:
    n = len(bms.stages)
    aprons = [Apron() for _ in range(n)]
    sign = -1 if bms.policy == "backward" else 1
    # consumer-to-producer pass: widen producer aprons so every cached read
    # falls inside the producer's computed region
    deps: list[list[tuple[int, int, Extent, list[int]]]] = [[] for _ in range(n)]
    for t in reversed(range(n)):
        bs = bms.stages[t]
        for acc, param in zip(bs.stage.accessors, bs.use.params):
            if acc.intent is Intent.OUT or param not in bms.producers:
                continue
            s = bms.producers[param]
            if s == t:
                continue
            trace = bs.slot_trace(acc.slot)
            hull = trace.hull()
            if param in bms.caches:
                aprons[s].widen(aprons[t], hull)
            deps[t].append((s, sign, hull, sorted(trace.dks or {0})))
    lags = [0] * n
    for t in range(n):
        for s, sg, _hull, dks in deps[t]:
            dk_eff = max(sg * dk for dk in dks)
            lags[t] = max(lags[t], lags[s] + max(0, dk_eff))
    windows: dict[str, int] = {}
    for t in range(n):
        bs = bms.stages[t]
        for acc, param in zip(bs.stage.accessors, bs.use.params):
            if acc.intent is Intent.OUT or param not in bms.caches:
                continue
            if param not in bms.producers:
                # pure-input cache: window covers the read span
                dks = bs.slot_trace(acc.slot).dks or {0}
                span = max(dks) - min(dks) + 1
                windows[param] = max(windows.get(param, 1), span)
                continue
            s = bms.producers[param]
            if s == t:
                continue
            for dk in bs.slot_trace(acc.slot).dks or {0}:
                need = lags[t] - lags[s] - sign * dk + 1
                windows[param] = max(windows.get(param, 1), need)
    for name, s in bms.producers.items():
        if name not in bms.caches and not aprons[s].is_zero():
            raise AssertionError(
                f"stage {bms.stages[s].name!r} writes uncached {name!r} but "
                f"carries an apron"
            )
    # halo sufficiency: sweeping tile+apron and reading main-storage inputs
    # at traced offsets must stay inside the allocated halo band
    for t in range(n):
        bs = bms.stages[t]
        for acc, param in zip(bs.stage.accessors, bs.use.params):
            if acc.intent is Intent.OUT or param in bms.caches:
                continue
            hull = bs.slot_trace(acc.slot).hull()
            a = aprons[t]
            need = max(a.im - hull.imin, a.ip + hull.imax,
                       a.jm - hull.jmin, a.jp + hull.jmax)
            if need > patch.halo:
                raise CompositionError(
                    f"fused pipeline needs a halo of {need} for stage "
                    f"{bs.name!r} reading {param!r}; patch halo is {patch.halo}"
                )
    regions: dict[str, Apron] = {}
    for name in bms.caches:
        if name in bms.producers:
            regions[name] = aprons[bms.producers[name]]
            continue
        region = Apron()
        for t, bs in enumerate(bms.stages):
            for acc, param in zip(bs.stage.accessors, bs.use.params):
                if param == name and acc.intent is Intent.IN:
                    region.widen(aprons[t], bs.slot_trace(acc.slot).hull())
        if max(region.im, region.ip, region.jm, region.jp) > patch.halo:
            raise CompositionError(
                f"input cache {name!r} needs a preload region of "
                f"{region} but the patch halo is {patch.halo}"
            )
        regions[name] = region
    bms.aprons = aprons
    bms.lags = lags
    bms.windows = windows
    bms.cache_regions = regions
