"""Computation executors: per-stage sweeps and cache-fused tiling.

Two execution strategies share the exact same stage bodies and therefore
produce bitwise-identical results:

* :func:`run_naive` sweeps every stage over the full horizontal domain, one
  vertical level at a time, materializing every intermediate in main storage
  and refreshing halos between stages.
* :func:`run_fused` walks horizontal tiles.  Within a tile all stages of a
  multistage advance level-by-level in a software pipeline; cached
  intermediates live in small per-tile scratch rings holding only a moving
  window of levels, and stages that feed caches compute a redundant apron
  around the tile instead of exchanging halos.

Traffic counters tell the two apart: the naive run touches every
intermediate in main storage once per stage, the fused run not at all.
"""

from __future__ import annotations

import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field

import numpy as np

from .stencil import BoundMultiStage, BoundStage, Computation, EvalContext, Intent, interval_for
from .storage import Field, TrafficReport
from .topology import PatchSpec


@dataclass(frozen=True)
class TileSpec:
    """Horizontal tiling for the fused executor."""

    tile_i: int
    tile_j: int
    workers: int = 1

    def __post_init__(self):
        if self.tile_i < 1 or self.tile_j < 1:
            raise ValueError(f"tile sizes must be >= 1, got {self.tile_i}x{self.tile_j}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")


@dataclass
class RunStats:
    """Wall times and update counts of one executor run.

    ``tag`` prefixes the phase labels under which traffic was recorded, so
    repeated runs on the same fields stay separable.
    """

    tag: str
    executor: str
    fields: list[Field] = dc_field(default_factory=list)
    wall_times: dict[str, float] = dc_field(default_factory=dict)
    stage_updates: dict[str, int] = dc_field(default_factory=dict)

    @property
    def total_wall(self) -> float:
        return sum(self.wall_times.values())

    @property
    def total_updates(self) -> int:
        return sum(self.stage_updates.values())

    def traffic(self) -> TrafficReport:
        return TrafficReport.gather(self.fields, prefix=f"{self.tag}/")


def halo_update(field: Field, space: str = "primary") -> None:
    """Refresh the periodic halo bands from the interior (idempotent).

    Halo copies replicate interior elements, so they bypass the traffic
    counters just like space syncs do.
    """
    spec = field.spec
    h, rows, cols = spec.halo, spec.rows, spec.cols
    arr = field.array(space, "rw")
    arr[:h] = arr[rows : rows + h]
    arr[h + rows :] = arr[h : 2 * h]
    arr[:, :, :h] = arr[:, :, cols : cols + h]
    arr[:, :, h + cols :] = arr[:, :, h : 2 * h]


class _MainPort:
    """Counted main-storage access for one slot over one sweep region."""

    __slots__ = ("field", "counts", "color", "k", "i0", "i1", "j0", "j1")

    def __init__(self, field, counts, color, k, region):
        self.field = field
        self.counts = counts
        self.color = color
        self.k = k
        self.i0, self.i1, self.j0, self.j1 = region

    def read(self, di, tc, dj, dk, x):
        f = self.field
        kk = self.k + dk if f.has_levels else 0
        return f.read_slab(
            "primary", self.counts, tc, kk, x,
            self.i0 + di, self.i1 + di, self.j0 + dj, self.j1 + dj,
        )

    def write(self, values):
        f = self.field
        kk = self.k if f.has_levels else 0
        f.write_slab(
            "primary", self.counts, self.color, kk, 0,
            self.i0, self.i1, self.j0, self.j1, values,
        )


class _ScratchRing:
    """Per-tile ring buffer holding a moving window of cached planes."""

    def __init__(self, colors, window, region, nk, has_levels, backward):
        i0, i1, j0, j1 = region
        self.base_i, self.base_j = i0, j0
        self.window = window
        self.nk = nk
        self.has_levels = has_levels
        self.backward = backward
        self.data = np.empty((window, colors, i1 - i0, j1 - j0), dtype=np.float64)

    def plane(self, level, color):
        if not self.has_levels:
            level = 0
        if not 0 <= level < self.nk:
            raise IndexError(f"cached level {level} outside [0, {self.nk})")
        order = self.nk - 1 - level if self.backward else level
        return self.data[order % self.window, color]


class _ScratchPort:
    """Scratch access for one slot; cached traffic never reaches counters."""

    __slots__ = ("ring", "color", "k", "i0", "i1", "j0", "j1")

    def __init__(self, ring, color, k, region):
        self.ring = ring
        self.color = color
        self.k = k
        self.i0, self.i1, self.j0, self.j1 = region

    def read(self, di, tc, dj, dk, x):
        ring = self.ring
        plane = ring.plane(self.k + dk, tc)
        view = plane[
            self.i0 + di - ring.base_i : self.i1 + di - ring.base_i,
            self.j0 + dj - ring.base_j : self.j1 + dj - ring.base_j,
        ]
        if view.shape != (self.i1 - self.i0, self.j1 - self.j0):
            raise IndexError("cached read outside the scratch region")
        view = view.view()
        view.flags.writeable = False
        return view

    def write(self, values):
        ring = self.ring
        plane = ring.plane(self.k, self.color)
        target = plane[
            self.i0 - ring.base_i : self.i1 - ring.base_i,
            self.j0 - ring.base_j : self.j1 - ring.base_j,
        ]
        if np.shape(values) != target.shape:
            raise ValueError(
                f"write of shape {np.shape(values)} into scratch {target.shape}"
            )
        target[...] = values


class _PreloadPort:
    """Input-cache port: each needed plane is read from main once per tile."""

    __slots__ = ("field", "counts", "color", "k", "i0", "i1", "j0", "j1",
                 "region", "store")

    def __init__(self, field, counts, color, k, sweep, region, store):
        self.field = field
        self.counts = counts
        self.color = color
        self.k = k
        self.i0, self.i1, self.j0, self.j1 = sweep
        self.region = region  # preloaded region, covers every consumer read
        self.store = store  # shared per-tile dict: (color, level, x) -> plane

    def read(self, di, tc, dj, dk, x):
        f = self.field
        kk = self.k + dk if f.has_levels else 0
        key = (tc, kk, x)
        plane = self.store.get(key)
        if plane is None:
            r0, r1, c0, c1 = self.region
            plane = np.array(
                f.read_slab("primary", self.counts, tc, kk, x, r0, r1, c0, c1)
            )
            self.store[key] = plane
        r0, _, c0, _ = self.region
        return plane[
            self.i0 + di - r0 : self.i1 + di - r0,
            self.j0 + dj - c0 : self.j1 + dj - c0,
        ]

    def write(self, values):
        raise AssertionError("input caches are read-only")


def run_naive(comp: Computation, run_tag: str = "naive") -> RunStats:
    """Execute stage by stage over the full domain.

    Pure-input halos are refreshed when a multistage starts; each stage's
    output halo is refreshed right after its sweep so later stages may read
    it with offsets.
    """
    patch = comp.patch
    rows, cols = patch.rows, patch.cols
    stats = RunStats(tag=run_tag, executor="naive", fields=comp.fields())
    for ms_idx, bms in enumerate(comp.multistages):
        t0 = time.perf_counter()
        for name in sorted(bms.input_names()):
            halo_update(comp.bindings[name])
        for bs in bms.stages:
            phase = f"{run_tag}/{bs.name}"
            colors = bs.stage.location.colors
            counts = {slot: f.phase_counts(phase) for slot, f in bs.fields.items()}
            ks = range(bs.nk) if bms.policy != "backward" else range(bs.nk - 1, -1, -1)
            for k in ks:
                label = interval_for(bs.stage, k, bs.nk)
                for color in range(colors):
                    ports = {
                        slot: _MainPort(f, counts[slot], color, k, (0, rows, 0, cols))
                        for slot, f in bs.fields.items()
                    }
                    ctx = EvalContext(bs, ports, color, k, bs.nk)
                    bs.stage.body_for(color, label)(ctx)
                    ctx.finish()
            halo_update(bs.fields[bs.stage.out.slot])
            stats.stage_updates[bs.name] = rows * cols * colors * bs.nk
        stats.wall_times[f"ms{ms_idx}"] = time.perf_counter() - t0
    return stats


def _tile_ranges(extent: int, tile: int):
    return [(lo, min(lo + tile, extent)) for lo in range(0, extent, tile)]


def _required_tile(bms: BoundMultiStage) -> tuple[int, int]:
    ri = rj = 1
    for t, bs in enumerate(bms.stages):
        a = bms.aprons[t]
        ri = max(ri, a.im + a.ip)
        rj = max(rj, a.jm + a.jp)
        for acc in bs.stage.accessors:
            if acc.intent is Intent.IN:
                hull = bs.slot_trace(acc.slot).hull()
                ri = max(ri, hull.imax - hull.imin)
                rj = max(rj, hull.jmax - hull.jmin)
    return ri, rj


def run_fused(comp: Computation, tiles: TileSpec, run_tag: str = "fused") -> RunStats:
    """Execute with horizontal tiling, vertical pipelining and cached scratch.

    Stage ``s`` runs ``lag[s]`` pipeline steps behind its dependents'
    producers, so every cached read hits a plane still inside its ring
    window.  Results are bitwise identical to :func:`run_naive` for any tile
    shape and worker count.
    """
    patch = comp.patch
    rows, cols = patch.rows, patch.cols
    for bms in comp.multistages:
        ri, rj = _required_tile(bms)
        if tiles.tile_i < ri or tiles.tile_j < rj:
            raise ValueError(
                f"tile {tiles.tile_i}x{tiles.tile_j} smaller than the largest "
                f"stage reach {ri}x{rj}"
            )
    stats = RunStats(tag=run_tag, executor="fused", fields=comp.fields())
    for ms_idx, bms in enumerate(comp.multistages):
        t0 = time.perf_counter()
        for name in sorted(bms.input_names()):
            halo_update(comp.bindings[name])
        phase = f"{run_tag}/ms{ms_idx}"
        tile_list = [
            (i0, i1, j0, j1)
            for i0, i1 in _tile_ranges(rows, tiles.tile_i)
            for j0, j1 in _tile_ranges(cols, tiles.tile_j)
        ]
        if tiles.workers == 1:
            for tile in tile_list:
                _merge_tile(phase, _run_tile(comp, bms, tile))
        else:
            with ThreadPoolExecutor(max_workers=tiles.workers) as pool:
                futures = [
                    pool.submit(_run_tile, comp, bms, tile) for tile in tile_list
                ]
                # raw tallies add up and masks OR together, so merge order
                # cannot change the totals
                for fut in futures:
                    _merge_tile(phase, fut.result())
        for t, bs in enumerate(bms.stages):
            a = bms.aprons[t]
            per_tile = sum(
                (i1 - i0 + a.im + a.ip) * (j1 - j0 + a.jm + a.jp)
                for i0, i1, j0, j1 in tile_list
            )
            stats.stage_updates[bs.name] = (
                per_tile * bs.stage.location.colors * bs.nk
            )
        stats.wall_times[f"ms{ms_idx}"] = time.perf_counter() - t0
    return stats


def _merge_tile(phase, tallies) -> None:
    for field, counts in tallies:
        field.merge_counts(phase, counts)


def _run_tile(comp: Computation, bms: BoundMultiStage, tile):
    i0, i1, j0, j1 = tile
    backward = bms.policy == "backward"
    tallies: dict[int, tuple[Field, object]] = {}

    def counts_for(f: Field):
        entry = tallies.get(id(f))
        if entry is None:
            entry = tallies[id(f)] = (f, f.detached_counts())
        return entry[1]

    rings: dict[str, _ScratchRing] = {}
    preload_regions: dict[str, tuple] = {}
    preload_store: dict[str, dict] = {}
    for name, window in bms.windows.items():
        f = comp.bindings[name]
        a = bms.cache_regions[name]
        region = (i0 - a.im, i1 + a.ip, j0 - a.jm, j1 + a.jp)
        if name in bms.producers:
            producer = bms.stages[bms.producers[name]]
            rings[name] = _ScratchRing(
                f.meta.location.colors, window, region,
                producer.nk if f.has_levels else 1, f.has_levels, backward,
            )
        else:
            preload_regions[name] = region
            preload_store[name] = {}

    n = len(bms.stages)
    last = max(bms.lags[s] + bms.stages[s].nk - 1 for s in range(n))
    for m in range(last + 1):
        for s, bs in enumerate(bms.stages):
            o = m - bms.lags[s]
            if not 0 <= o < bs.nk:
                continue
            k = bs.nk - 1 - o if backward else o
            label = interval_for(bs.stage, k, bs.nk)
            a = bms.aprons[s]
            sweep = (i0 - a.im, i1 + a.ip, j0 - a.jm, j1 + a.jp)
            for color in range(bs.stage.location.colors):
                ports = {}
                for acc, param in zip(bs.stage.accessors, bs.use.params):
                    f = bs.fields[acc.slot]
                    if param in rings:
                        ports[acc.slot] = _ScratchPort(rings[param], color, k, sweep)
                    elif param in preload_regions:
                        ports[acc.slot] = _PreloadPort(
                            f, counts_for(f), color, k, sweep,
                            preload_regions[param], preload_store[param],
                        )
                    else:
                        ports[acc.slot] = _MainPort(f, counts_for(f), color, k, sweep)
                ctx = EvalContext(bs, ports, color, k, bs.nk)
                bs.stage.body_for(color, label)(ctx)
                ctx.finish()
    return list(tallies.values())


@dataclass
class TimingResult:
    median_seconds: float
    seconds_per_update: float
    times: list[float]
    updates: int


def time_computation(comp: Computation, runner, reps: int = 10,
                     warmup: int = 1) -> TimingResult:
    """Median wall time of ``runner(comp)`` over ``reps`` runs after warm-up.

    Traffic counting stays enabled while timing; both sides of any reported
    bandwidth figure come from the same instrumented execution model.
    """
    if reps < 1:
        raise ValueError(f"reps must be >= 1, got {reps}")
    stats = None
    for _ in range(warmup):
        stats = runner(comp)
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        stats = runner(comp)
        times.append(time.perf_counter() - t0)
    updates = stats.total_updates
    median = statistics.median(times)
    return TimingResult(
        median_seconds=median,
        seconds_per_update=median / updates if updates else float("nan"),
        times=times,
        updates=updates,
    )
