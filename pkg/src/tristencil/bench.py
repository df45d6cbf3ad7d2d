"""Benchmark experiments: indexing, fusion, transport, and a verify suite.

Each experiment returns deterministic :class:`BenchRecord` rows; wall-clock
metrics are informational (they depend on the host), while counter-based
metrics are exact and reproducible.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass, fields as dc_fields

import numpy as np

from .topology import LocationType, PatchSpec, build_mesh, element_count
from .layouts import (
    AccessMethod,
    DEFAULT_DIM_ORDER,
    LayoutSpec,
    Numbering,
    check_access_combo,
    coalescing_fraction,
    direct_sweep_groups,
    hilbert_rank,
    hilbert_xy,
    make_permutation,
)
from .connectivity import OFFSET_TABLES, build_neighbor_table, edge_signs_table
from .storage import plane_access_total
from .executors import TileSpec, halo_update, run_fused, run_naive, time_computation
from .kernels import (
    build_kernel,
    field_to_flat,
    gather_groups,
    make_kernel_fields,
    run_neighbor_sum,
    run_neighbor_sum_scaled,
    unpermute,
)
from . import mpdata as mp
from . import reference

_V = LocationType.VERTICES
_C = LocationType.CELLS
_E = LocationType.EDGES


class ConfigError(Exception):
    """Invalid benchmark configuration."""


class InvariantFailure(Exception):
    """A correctness invariant did not hold during a benchmark run."""


# Per-plane access weights of the transport step: (reads, writes) per element
# group, without and with scratch-ring fusion of the intermediates.
UNFUSED_PLANE_WEIGHTS = {"nodes": (7, 3), "edges": (1, 1)}
FUSED_PLANE_WEIGHTS = {"nodes": (4, 1)}

_NUMBERINGS = ("sn", "un", "hn")
_LAYOUT_ORDERS = {
    "default": DEFAULT_DIM_ORDER,
    "level-inner": ("extra", "row", "color", "column", "level"),
}


@dataclass(frozen=True)
class BenchConfig:
    """All knobs of the benchmark CLI with desk-scale defaults."""

    rows: int = 128
    cols: int = 128
    levels: int = 80
    halo: int = 1
    numbering: str = "all"  # all | sn | un | hn
    access: str = "all"  # all | direct | indirect
    executor: str = "both"  # both | naive | fused
    tile_i: int = 64
    tile_j: int = 64
    workers: int = 1
    align: int = 8
    layout: str = "default"  # default | level-inner
    warp: int = 8
    reps: int = 10
    seed: int = 0
    steps: int = 1
    dt: float = 0.1
    pivbz: float = 1.0
    preset: str = "gaussian-bump"
    geometry: str = "uniform"  # uniform | random
    ignore_2d: bool = True
    nodes_override: int = 71424
    edges_override: int = 213199
    assert_speedup: bool = False
    out: str | None = None

    def __post_init__(self):
        for name in ("rows", "cols", "levels", "halo", "tile_i", "tile_j",
                     "workers", "align", "warp", "reps", "seed", "steps",
                     "nodes_override", "edges_override"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigError(f"{name} must be an integer, got {value!r}")
        for name in ("rows", "cols", "levels", "halo", "tile_i", "tile_j",
                     "workers", "align", "warp", "reps", "steps",
                     "nodes_override", "edges_override"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")
        if self.rows < 2 or self.cols < 2:
            raise ConfigError("rows and cols must be >= 2")
        if self.halo > min(self.rows, self.cols):
            raise ConfigError(
                f"halo {self.halo} exceeds min(rows, cols) = {min(self.rows, self.cols)}"
            )
        if self.numbering not in ("all",) + _NUMBERINGS:
            raise ConfigError(f"unknown numbering {self.numbering!r}")
        if self.access not in ("all", "direct", "indirect"):
            raise ConfigError(f"unknown access method {self.access!r}")
        if self.executor not in ("both", "naive", "fused"):
            raise ConfigError(f"unknown executor {self.executor!r}")
        if self.layout not in _LAYOUT_ORDERS:
            raise ConfigError(f"unknown layout {self.layout!r}")
        if self.preset not in ("uniform", "gaussian-bump", "random"):
            raise ConfigError(f"unknown preset {self.preset!r}")
        if self.geometry not in ("uniform", "random"):
            raise ConfigError(f"unknown geometry mode {self.geometry!r}")
        if not np.isfinite(self.dt) or not np.isfinite(self.pivbz):
            raise ConfigError("dt and pivbz must be finite")

    def patch(self) -> PatchSpec:
        return PatchSpec(self.rows, self.cols, self.levels, self.halo)

    def layout_spec(self) -> LayoutSpec:
        return LayoutSpec(_LAYOUT_ORDERS[self.layout], self.align)

    def numberings(self) -> tuple[str, ...]:
        return _NUMBERINGS if self.numbering == "all" else (self.numbering,)

    def executors(self) -> tuple[str, ...]:
        return ("naive", "fused") if self.executor == "both" else (self.executor,)


@dataclass(frozen=True)
class BenchRecord:
    """One benchmark result row."""

    experiment: str
    numbering: str
    access: str
    executor: str
    rows: int
    cols: int
    levels: int
    metric: str
    value: float
    units: str


BENCH_CSV_HEADER = "experiment,numbering,access,executor,rows,cols,levels,metric,value,units"


def emit_csv(records, stream) -> None:
    """Write records as CSV in their (deterministic) generation order."""
    stream.write(BENCH_CSV_HEADER + "\n")
    for r in records:
        value = format(r.value, ".10g")
        stream.write(
            f"{r.experiment},{r.numbering},{r.access},{r.executor},"
            f"{r.rows},{r.cols},{r.levels},{r.metric},{value},{r.units}\n"
        )


def _median_seconds(fn, reps: int, warmup: int = 1) -> float:
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def _fill_random(field, rng, lo=0.0, hi=1.0):
    spec = field.spec
    h = spec.halo
    shape = field.core().shape
    values = lo + (hi - lo) * rng.random(shape)
    field.array("primary", "rw")[h:h + spec.rows, :, h:h + spec.cols, :, :] = values
    halo_update(field)


# ---------------------------------------------------------------------------
# indexing experiment


def run_indexing(cfg: BenchConfig) -> list[BenchRecord]:
    """Neighbor-sum kernels under each numbering and access method.

    The direct variant sweeps structured storage with offset arithmetic; the
    indirect variants gather through materialized neighbor tables over flat
    rank-ordered arrays.  Coalescing fractions model warp-width contiguous
    ranges; timings and bandwidths are informational.
    """
    spec = cfg.patch()
    layout = cfg.layout_spec()
    rng = np.random.default_rng(cfg.seed)
    records: list[BenchRecord] = []

    def rec(numbering, access, executor, metric, value, units):
        records.append(BenchRecord("indexing", numbering, access, executor,
                                   cfg.rows, cfg.cols, cfg.levels,
                                   metric, value, units))

    fields = make_kernel_fields(spec, layout)
    _fill_random(fields["a"], rng)
    _fill_random(fields["fac"], rng, 0.5, 1.5)
    n_cells = element_count(spec, _C)
    nk = spec.levels
    baseline: dict[str, np.ndarray] = {}

    want_direct = cfg.access in ("all", "direct") and cfg.numbering in ("all", "sn")
    want_indirect = cfg.access in ("all", "indirect")
    if not want_direct and not want_indirect:
        raise ConfigError(
            f"no runnable combination: numbering={cfg.numbering} access={cfg.access}"
        )

    if want_direct:
        check_access_combo(Numbering.SN, AccessMethod.DIRECT)
        for key, scaled in (("k1", False), ("k2", True)):
            comp = build_kernel(spec, fields, scaled)
            timing = time_computation(
                comp, lambda c, t=key: run_naive(c, t), cfg.reps
            )
            stats = run_naive(comp, key)
            baseline[key] = field_to_flat(fields["b"]).copy()
            distinct = stats.traffic().total_distinct()
            nbytes = distinct * 8
            rec("sn", "direct", "stencil", f"{key}_seconds",
                timing.median_seconds, "s")
            rec("sn", "direct", "stencil", f"{key}_distinct_bytes", nbytes, "bytes")
            rec("sn", "direct", "stencil", f"{key}_bandwidth",
                nbytes / timing.median_seconds / 1e9, "GB/s")
        frac = coalescing_fraction(direct_sweep_groups(layout, spec, _C, cfg.warp))
        rec("sn", "direct", "stencil", "coalescing", frac, "fraction")

    if want_indirect:
        if not baseline:
            comp = build_kernel(spec, fields, False)
            run_naive(comp, "k1")
            baseline["k1"] = field_to_flat(fields["b"]).copy()
            comp = build_kernel(spec, fields, True)
            run_naive(comp, "k2")
            baseline["k2"] = field_to_flat(fields["b"]).copy()
        for name in cfg.numberings():
            numbering = Numbering(name)
            perm = make_permutation(numbering, spec, _C)
            table = build_neighbor_table(spec, _C, _C, perm, perm)
            a_flat = np.ascontiguousarray(field_to_flat(fields["a"], perm))
            fac_flat = np.ascontiguousarray(field_to_flat(fields["fac"], perm))
            results = {}
            for key, runner in (
                ("k1", lambda: run_neighbor_sum(table, a_flat)),
                ("k2", lambda: run_neighbor_sum_scaled(table, a_flat, fac_flat)),
            ):
                seconds = _median_seconds(runner, cfg.reps)
                results[key] = runner()
                # a gathered + b written once per element and level
                nbytes = 2 * n_cells * nk * 8
                if key == "k2":
                    nbytes += n_cells * 8
                rec(name, "indirect", "flat", f"{key}_seconds", seconds, "s")
                rec(name, "indirect", "flat", f"{key}_distinct_bytes", nbytes, "bytes")
                rec(name, "indirect", "flat", f"{key}_bandwidth",
                    nbytes / seconds / 1e9, "GB/s")
                match = float(np.array_equal(unpermute(results[key], perm),
                                             baseline[key]))
                rec(name, "indirect", "flat", f"{key}_relabel_match", match, "flag")
            frac = coalescing_fraction(gather_groups(table, cfg.warp))
            rec(name, "indirect", "flat", "coalescing", frac, "fraction")
    return records


# ---------------------------------------------------------------------------
# fusion experiment


def _transport_setup(cfg: BenchConfig, spec: PatchSpec):
    layout = cfg.layout_spec()
    state = mp.build_state(spec, layout)
    geo = mp.build_geometry(spec, cfg.geometry, seed=cfg.seed, layout=layout)
    rng = np.random.default_rng(cfg.seed)
    mp.init_preset(state.pd_in, cfg.preset, seed=cfg.seed)
    _fill_random(state.vn, rng, -0.5, 0.5)
    _fill_random(state.wn, rng, -0.5, 0.5)
    state.rho.array("primary", "rw")[...] = 1.0
    params = mp.MpdataParams(dt=cfg.dt, pivbz=cfg.pivbz)
    return state, geo, params


def run_fusion(cfg: BenchConfig) -> list[BenchRecord]:
    """Scratch-ring fusion versus per-stage execution of the transport step.

    Emits the closed-form per-plane access model (exact integers under the
    configured element-count overrides) and the measured distinct-traffic
    ratio between the two executors, plus informational timings.
    """
    spec = cfg.patch()
    records: list[BenchRecord] = []

    def rec(executor, metric, value, units):
        records.append(BenchRecord("fusion", "sn", "direct", executor,
                                   cfg.rows, cfg.cols, cfg.levels,
                                   metric, value, units))

    counts = {"nodes": cfg.nodes_override, "edges": cfg.edges_override}
    planes_unfused = plane_access_total(counts, UNFUSED_PLANE_WEIGHTS)
    planes_fused = plane_access_total(counts, FUSED_PLANE_WEIGHTS)
    rec("-", "planes_unfused", planes_unfused, "plane-accesses")
    rec("-", "planes_fused", planes_fused, "plane-accesses")
    rec("-", "plane_ratio", planes_unfused / planes_fused, "ratio")

    state_n, geo_n, params = _transport_setup(cfg, spec)
    comp_n = mp.build_mpdata(spec, state_n, geo_n, params)
    timing_n = time_computation(comp_n, run_naive, cfg.reps)
    stats_n = run_naive(comp_n)
    distinct_n = stats_n.traffic().total_distinct(ignore_2d=cfg.ignore_2d)
    rec("naive", "naive_seconds", timing_n.median_seconds, "s")
    rec("naive", "naive_distinct", distinct_n, "element-accesses")

    state_f, geo_f, _ = _transport_setup(cfg, spec)
    comp_f = mp.build_mpdata(spec, state_f, geo_f, params)
    tiles = TileSpec(cfg.tile_i, cfg.tile_j, cfg.workers)
    timing_f = time_computation(comp_f, lambda c: run_fused(c, tiles), cfg.reps)
    stats_f = run_fused(comp_f, tiles)
    distinct_f = stats_f.traffic().total_distinct(ignore_2d=cfg.ignore_2d)
    rec("fused", "fused_seconds", timing_f.median_seconds, "s")
    rec("fused", "fused_distinct", distinct_f, "element-accesses")

    if not np.array_equal(field_to_flat(state_n.pd_out),
                          field_to_flat(state_f.pd_out)):
        raise InvariantFailure("fused and naive transport results differ")

    rec("-", "measured_distinct_ratio", distinct_n / distinct_f, "ratio")
    speedup = timing_n.median_seconds / timing_f.median_seconds
    rec("-", "wall_speedup", speedup, "ratio")
    if cfg.assert_speedup and speedup <= 1.0:
        raise InvariantFailure(
            f"fused executor was not faster (speedup {speedup:.3f}); "
            "wall-clock speedups are host-dependent"
        )
    return records


# ---------------------------------------------------------------------------
# transport experiment


def _oracle_step(spec, geo, pd, vn, wn, rho, params, flux_op="upwind"):
    e2v = build_neighbor_table(spec, _E, _V).ids
    v2e = build_neighbor_table(spec, _V, _E).ids
    signs = edge_signs_table(spec)
    dual = field_to_flat(geo.dual_volumes)[:, 0]
    return reference.transport_step(
        e2v, v2e, signs, dual, pd, vn, wn, rho,
        params.dt, params.pivbz, flux_op=flux_op,
    )


def run_mpdata(cfg: BenchConfig) -> list[BenchRecord]:
    """Upwind transport dwarf: timings, mass drift, and oracle agreement."""
    spec = cfg.patch()
    records: list[BenchRecord] = []

    def rec(executor, metric, value, units):
        records.append(BenchRecord("mpdata", "sn", "direct", executor,
                                   cfg.rows, cfg.cols, cfg.levels,
                                   metric, value, units))

    tiles = TileSpec(cfg.tile_i, cfg.tile_j, cfg.workers)
    runners = {
        "naive": run_naive,
        "fused": lambda c: run_fused(c, tiles),
    }
    final: dict[str, np.ndarray] = {}
    for name in cfg.executors():
        state, geo, params = _transport_setup(cfg, spec)
        comp = mp.build_mpdata(spec, state, geo, params)
        timing = time_computation(comp, runners[name], cfg.reps)
        rec(name, "step_seconds", timing.median_seconds, "s")
        rec(name, "updates_per_second",
            1.0 / timing.seconds_per_update, "updates/s")

        mass0 = mp.total_mass(state, geo, "pd_in")
        for step in range(cfg.steps):
            if step:
                _copy_core(state.pd_out, state.pd_in)
            runners[name](comp)
        mass1 = mp.total_mass(state, geo, "pd_out")
        rec(name, "mass_rel_drift", abs(mass1 - mass0) / abs(mass0), "fraction")
        final[name] = field_to_flat(state.pd_out).copy()

        if name == "naive":
            state_o, geo_o, _ = _transport_setup(cfg, spec)
            pd = field_to_flat(state_o.pd_in)
            vn = field_to_flat(state_o.vn)
            wn = field_to_flat(state_o.wn)
            rho = field_to_flat(state_o.rho)
            for _ in range(cfg.steps):
                pd = _oracle_step(spec, geo_o, pd, vn, wn, rho, params)["pd_out"]
            match = np.array_equal(pd, final["naive"])
            rec(name, "oracle_match", float(match), "flag")
            if not match:
                raise InvariantFailure("transport result differs from the "
                                       "flat reference implementation")

    if len(final) == 2:
        match = np.array_equal(final["naive"], final["fused"])
        rec("-", "executor_match", float(match), "flag")
        if not match:
            raise InvariantFailure("fused and naive transport results differ")
    return records


def _copy_core(src, dst) -> None:
    h = src.spec.halo
    rows, cols = src.spec.rows, src.spec.cols
    values = src.array("primary", "r")[h:h + rows, :, h:h + cols, :, :]
    dst.array("primary", "rw")[h:h + rows, :, h:h + cols, :, :] = values
    halo_update(dst)


# ---------------------------------------------------------------------------
# verification suite


def _check_offset_tables() -> tuple[bool, str]:
    for rows, cols in ((2, 2), (3, 3), (2, 5), (4, 3)):
        spec = PatchSpec(rows, cols, 1)
        mesh = build_mesh(spec)
        for (from_loc, to_loc) in OFFSET_TABLES:
            table = build_neighbor_table(spec, from_loc, to_loc)
            want = mesh.neighbors(from_loc, to_loc)
            if not np.array_equal(np.sort(table.ids, axis=1), want):
                return False, (f"{from_loc.value}->{to_loc.value} mismatch "
                               f"on {rows}x{cols}")
    return True, "9 relations on 4 patches"


def _check_hilbert() -> tuple[bool, str]:
    for n in (2, 4, 8, 16, 32):
        seen = set()
        prev = None
        for d in range(n * n):
            x, y = hilbert_xy(n, d)
            if hilbert_rank(n, x, y) != d:
                return False, f"rank/xy roundtrip broken at n={n}, d={d}"
            seen.add((x, y))
            if prev is not None and abs(x - prev[0]) + abs(y - prev[1]) != 1:
                return False, f"non-adjacent step at n={n}, d={d}"
            prev = (x, y)
        if len(seen) != n * n:
            return False, f"walk at n={n} is not a bijection"
    return True, "orders 2..32 bijective with unit steps"


def _check_edge_signs() -> tuple[bool, str]:
    spec = PatchSpec(5, 4, 1)
    geo = mp.build_geometry(spec, "uniform")
    v2e = build_neighbor_table(spec, _V, _E).ids
    e2v = build_neighbor_table(spec, _E, _V).ids
    core = geo.edge_signs.core()  # (rows, 1, cols, 1, 6)
    signs = core[:, 0, :, 0, :].reshape(-1, 6)
    for v in range(v2e.shape[0]):
        for slot in range(v2e.shape[1]):
            e = v2e[v, slot]
            lower = min(e2v[e])
            want = 1.0 if v == lower else -1.0
            if signs[v, slot] != want:
                return False, f"vertex {v} slot {slot}: sign {signs[v, slot]}"
    return True, "antisymmetric, +1 on the lower endpoint"


def _check_equivalence(seed: int) -> tuple[bool, str]:
    spec = PatchSpec(6, 5, 4)
    cfg = BenchConfig(rows=6, cols=5, levels=4, seed=seed, geometry="random",
                      preset="random", reps=1)
    state_n, geo_n, params = _transport_setup(cfg, spec)
    comp_n = mp.build_mpdata(spec, state_n, geo_n, params)
    run_naive(comp_n)
    state_f, geo_f, _ = _transport_setup(cfg, spec)
    comp_f = mp.build_mpdata(spec, state_f, geo_f, params)
    run_fused(comp_f, TileSpec(3, 3, 2))
    ok = np.array_equal(field_to_flat(state_n.pd_out),
                        field_to_flat(state_f.pd_out))
    return ok, "fused == naive bitwise on 6x5x4" if ok else "executors diverge"


def _check_oracle(seed: int) -> tuple[bool, str]:
    spec = PatchSpec(6, 5, 4)
    cfg = BenchConfig(rows=6, cols=5, levels=4, seed=seed, geometry="random",
                      preset="random", reps=1)
    state, geo, params = _transport_setup(cfg, spec)
    comp = mp.build_mpdata(spec, state, geo, params)
    run_naive(comp)
    cfg2 = BenchConfig(rows=6, cols=5, levels=4, seed=seed, geometry="random",
                       preset="random", reps=1)
    state_o, geo_o, _ = _transport_setup(cfg2, spec)
    res = _oracle_step(spec, geo_o, field_to_flat(state_o.pd_in),
                       field_to_flat(state_o.vn), field_to_flat(state_o.wn),
                       field_to_flat(state_o.rho), params)
    ok = np.array_equal(res["pd_out"], field_to_flat(state.pd_out))
    return ok, "composed == flat oracle bitwise" if ok else "oracle mismatch"


def _check_conservation(seed: int) -> tuple[bool, str]:
    spec = PatchSpec(6, 5, 4)
    cfg = BenchConfig(rows=6, cols=5, levels=4, seed=seed, geometry="random",
                      preset="random", dt=0.05, pivbz=0.0, reps=1)
    state, geo, params = _transport_setup(cfg, spec)
    comp = mp.build_mpdata(spec, state, geo, params)
    run_naive(comp)
    m0 = mp.total_mass(state, geo, "pd_in")
    m1 = mp.total_mass(state, geo, "pd_out")
    drift = abs(m1 - m0) / abs(m0)
    ok = drift <= 1e-12
    return ok, f"closed-boundary mass drift {drift:.2e}"


def _check_relabeling(seed: int) -> tuple[bool, str]:
    spec = PatchSpec(8, 4, 3)
    layout = LayoutSpec()
    rng = np.random.default_rng(seed)
    fields = make_kernel_fields(spec, layout)
    _fill_random(fields["a"], rng)
    comp = build_kernel(spec, fields, False)
    run_naive(comp)
    want = field_to_flat(fields["b"]).copy()
    for name in _NUMBERINGS:
        perm = make_permutation(Numbering(name), spec, _C)
        table = build_neighbor_table(spec, _C, _C, perm, perm)
        got = unpermute(run_neighbor_sum(table, field_to_flat(fields["a"], perm)),
                        perm)
        if not np.array_equal(got, want):
            return False, f"numbering {name} changed the result"
    return True, "sn/un/hn all reproduce the structured sweep"


def run_verify(cfg: BenchConfig, corrupt: str | None = None):
    """Run the named invariant checks; returns (records, checks).

    ``corrupt`` deliberately breaks one frozen input ("edge-signs" or
    "offset-entry") for the duration of the run so the suite's sensitivity
    can be demonstrated; the caller decides what outcome to expect.
    """
    checks: list[tuple[str, bool, str]] = []

    def run_all():
        for name, fn in (
            ("offset-tables", _check_offset_tables),
            ("hilbert-curve", _check_hilbert),
            ("edge-signs", _check_edge_signs),
            ("executor-equivalence", lambda: _check_equivalence(cfg.seed)),
            ("oracle-match", lambda: _check_oracle(cfg.seed)),
            ("conservation", lambda: _check_conservation(cfg.seed)),
            ("relabeling", lambda: _check_relabeling(cfg.seed)),
        ):
            try:
                ok, detail = fn()
            except Exception as exc:  # a corrupted input may raise outright
                ok, detail = False, f"{type(exc).__name__}: {exc}"
            checks.append((name, ok, detail))

    if corrupt is None:
        run_all()
    elif corrupt == "edge-signs":
        original = mp.edge_signs_table

        def flipped(spec):
            table = original(spec).copy()
            table[0, 0] = -table[0, 0]
            return table

        mp.edge_signs_table = flipped
        try:
            run_all()
        finally:
            mp.edge_signs_table = original
    elif corrupt == "offset-entry":
        key = (_V, _C)
        original = OFFSET_TABLES[key]
        entries = original[0]
        drow, tcol, dcol = entries[0]
        OFFSET_TABLES[key] = (((drow, tcol, dcol + 1),) + entries[1:],)
        try:
            run_all()
        finally:
            OFFSET_TABLES[key] = original
    else:
        raise ConfigError(f"unknown corruption hook {corrupt!r}")

    records = [
        BenchRecord("verify", "-", "-", "-", cfg.rows, cfg.cols, cfg.levels,
                    name, float(ok), "pass")
        for name, ok, _ in checks
    ]
    return records, checks


def config_from_mapping(mapping) -> BenchConfig:
    """Build a config from string keys/values (config file or CLI merge)."""
    known = {f.name: f for f in dc_fields(BenchConfig)}
    kwargs = {}
    for raw_key, value in mapping.items():
        key = raw_key.replace("-", "_")
        if key not in known:
            raise ConfigError(f"unknown configuration key {raw_key!r}")
        kwargs[key] = _coerce(known[key], value)
    return BenchConfig(**kwargs)


def _coerce(field_def, value):
    if not isinstance(value, str):
        return value
    text = value.strip()
    type_name = field_def.type
    if field_def.name == "out":
        return text or None
    if type_name == "bool":
        lowered = text.lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{field_def.name}: expected a boolean, got {value!r}")
    if type_name == "int":
        try:
            return int(text)
        except ValueError:
            raise ConfigError(
                f"{field_def.name}: expected an integer, got {value!r}"
            ) from None
    if type_name == "float":
        try:
            return float(text)
        except ValueError:
            raise ConfigError(
                f"{field_def.name}: expected a number, got {value!r}"
            ) from None
    return text
