"""Upwind advection on the triangular patch (MPDATA donor-cell step).

One transport step advances a vertex-located density ``pd`` with edge-normal
horizontal velocities ``vn`` and interface-staggered vertical velocities
``wn``:

1. ``flux``       edge-normal horizontal flux (upwind or centred),
2. ``fluz``       vertical flux on level interfaces; the bottom/top interface
                  takes the adjacent interior value scaled by ``pivbz``,
3. ``divergence`` signed flux sum per dual volume,
4. ``advance``    explicit Euler update of the density.

All four stages form a single forward multistage with ``flux``, ``fluz`` and
the divergence cached, so the fused executor keeps every intermediate in
scratch.  ``pd`` is double-buffered (``pd_in``/``pd_out``): the final stage
may not overwrite a field other stages still read.

Boundary handling detail: the interface copies ``fluz(0) = pivbz * fluz(1)``
and ``fluz(top) = pivbz * fluz(top-1)`` are expressed as boundary-interval
bodies that recompute the adjacent interior expression and scale it, which
is bitwise-equal to copying but keeps every level writable in pipeline
order.
"""

from __future__ import annotations

import csv
import zlib
from dataclasses import dataclass

import numpy as np

from .connectivity import edge_signs_table
from .layouts import LayoutSpec
from .stencil import (
    Computation,
    Intent,
    StageSpec,
    StageUse,
    accessor,
    compose,
    multistage,
)
from .storage import Field, Selector as _Selector, make_storage
from .topology import LocationType, PatchSpec, element_coord, element_count

_V = LocationType.VERTICES
_C = LocationType.CELLS
_E = LocationType.EDGES

#: side length, area and dual volume of the unit equilateral tiling
UNIT_EDGE_LENGTH = 1.0
UNIT_CELL_AREA = np.sqrt(3.0) / 4.0
UNIT_DUAL_VOLUME = np.sqrt(3.0) / 2.0  # six cells per vertex, a third each


@dataclass(frozen=True)
class MpdataParams:
    dt: float = 0.1
    pivbz: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.dt) or self.dt < 0:
            raise ValueError(f"dt must be finite and >= 0, got {self.dt}")
        if not np.isfinite(self.pivbz):
            raise ValueError(f"pivbz must be finite, got {self.pivbz}")


@dataclass
class GeometryFields:
    """Mesh geometry as storages; signs and weights ride the extra axis."""

    edge_length: Field  # edges, 2-D
    cell_area: Field  # cells, 2-D
    dual_volumes: Field  # vertices, 2-D
    edge_signs: Field  # vertices, 2-D, extra 6
    weights: Field  # cells, 2-D, extra 3

    def fields(self) -> list[Field]:
        return [self.edge_length, self.cell_area, self.dual_volumes,
                self.edge_signs, self.weights]


@dataclass
class StateFields:
    """Prognostic and diagnostic storages of one transport step."""

    pd_in: Field  # vertices, levels
    pd_out: Field  # vertices, levels
    vn: Field  # edges, levels
    wn: Field  # vertices, levels + 1 (interfaces)
    rho: Field  # vertices, levels
    flux: Field  # edges, levels
    fluz: Field  # vertices, levels + 1
    divvd: Field  # vertices, levels

    def fields(self) -> list[Field]:
        return [self.pd_in, self.pd_out, self.vn, self.wn, self.rho,
                self.flux, self.fluz, self.divvd]


def _flat_selector():
    return _Selector(level=False)


def build_geometry(spec: PatchSpec, mode: str = "uniform",
                   seed: int = 0, layout: LayoutSpec | None = None) -> GeometryFields:
    """Allocate and fill geometry fields.

    ``uniform`` is the unit equilateral tiling.  ``random`` perturbs all
    lengths, areas and volumes with positive factors in [0.5, 1.5) so
    conservation and equivalence properties can be checked on irregular
    geometry; signs stay exact either way.
    """
    sel = _flat_selector()
    geo = GeometryFields(
        edge_length=make_storage(spec, _E, "edge_length", sel, layout=layout),
        cell_area=make_storage(spec, _C, "cell_area", sel, layout=layout),
        dual_volumes=make_storage(spec, _V, "dual_volumes", sel, layout=layout),
        edge_signs=make_storage(spec, _V, "edge_signs", _Selector(level=False, extra=True),
                                extra_len=6, layout=layout),
        weights=make_storage(spec, _C, "weights", _Selector(level=False, extra=True),
                             extra_len=3, layout=layout),
    )
    h = spec.halo
    rows, cols = spec.rows, spec.cols
    if mode == "uniform":
        lengths = np.full((rows, 3, cols), UNIT_EDGE_LENGTH)
        areas = np.full((rows, 2, cols), UNIT_CELL_AREA)
        volumes = np.full((rows, 1, cols), UNIT_DUAL_VOLUME)
    elif mode == "random":
        rng = np.random.default_rng(seed)
        lengths = UNIT_EDGE_LENGTH * (0.5 + rng.random((rows, 3, cols)))
        areas = UNIT_CELL_AREA * (0.5 + rng.random((rows, 2, cols)))
        volumes = UNIT_DUAL_VOLUME * (0.5 + rng.random((rows, 1, cols)))
    else:
        raise ValueError(f"unknown geometry mode {mode!r}")
    for field, values in ((geo.edge_length, lengths), (geo.cell_area, areas),
                          (geo.dual_volumes, volumes)):
        field.array("primary", "rw")[h : h + rows, :, h : h + cols, 0, 0] = values
    signs = edge_signs_table(spec)  # (n_vertices, 6) in canonical order
    sarr = geo.edge_signs.array("primary", "rw")
    sarr[h : h + rows, 0, h : h + cols, 0, :] = signs.reshape(rows, cols, 6)
    precompute_weights(spec, geo)
    from .executors import halo_update

    for field in geo.fields():
        halo_update(field)
    return geo


def precompute_weights(spec: PatchSpec, geo: GeometryFields) -> None:
    """Host-side loop filling ``weights[cell, n] = length(edge_n) / area``.

    Follows the canonical cell-to-edge neighbor order, so a weighted
    divergence can fold neighborhoods with plain x-indexed reads.
    """
    from .connectivity import structured_offsets

    h, rows, cols = spec.halo, spec.rows, spec.cols
    lengths = geo.edge_length.array("primary")[h : h + rows, :, h : h + cols, 0, 0]
    areas = geo.cell_area.array("primary")[h : h + rows, :, h : h + cols, 0, 0]
    warr = geo.weights.array("primary", "rw")
    for cc in range(2):
        if np.any(areas[:, cc] == 0.0):
            raise ValueError("cell_area contains zeros; weights are undefined")
        for n, (di, tc, dj) in enumerate(structured_offsets(_C, _E, cc).entries):
            ln = np.roll(np.roll(lengths[:, tc], -di, axis=0), -dj, axis=1)
            warr[h : h + rows, cc, h : h + cols, 0, n] = ln / areas[:, cc]


def build_state(spec: PatchSpec, layout: LayoutSpec | None = None) -> StateFields:
    return StateFields(
        pd_in=make_storage(spec, _V, "pd_in", layout=layout),
        pd_out=make_storage(spec, _V, "pd_out", layout=layout),
        vn=make_storage(spec, _E, "vn", layout=layout),
        wn=make_storage(spec, _V, "wn", levels=spec.levels + 1, layout=layout),
        rho=make_storage(spec, _V, "rho", layout=layout),
        flux=make_storage(spec, _E, "flux", layout=layout),
        fluz=make_storage(spec, _V, "fluz", levels=spec.levels + 1, layout=layout),
        divvd=make_storage(spec, _V, "divvd", layout=layout),
    )


# ---------------------------------------------------------------------------
# stage bodies


def _upwind_flux_body(ev):
    origin, other = ev.offsets(_V)
    vn = ev.read("vn")
    zpos = np.maximum(vn, 0.0)
    zneg = np.minimum(vn, 0.0)
    ev.store(ev.read("pd", origin) * zpos + ev.read("pd", other) * zneg)


def _centred_flux_body(ev):
    origin, other = ev.offsets(_V)
    ev.store(0.5 * ev.read("vn") * (ev.read("pd", origin) + ev.read("pd", other)))


def _fluz_interior_body(ev):
    wn = ev.read("wn")
    ev.store(
        np.maximum(wn, 0.0) * ev.read("pd", dk=-1)
        + np.minimum(wn, 0.0) * ev.read("pd")
    )


def _make_fluz_bottom(pivbz):
    def body(ev):
        wn1 = ev.read("wn", dk=1)
        ev.store(
            pivbz
            * (
                np.maximum(wn1, 0.0) * ev.read("pd")
                + np.minimum(wn1, 0.0) * ev.read("pd", dk=1)
            )
        )

    return body


def _make_fluz_top(pivbz):
    def body(ev):
        wn1 = ev.read("wn", dk=-1)
        ev.store(
            pivbz
            * (
                np.maximum(wn1, 0.0) * ev.read("pd", dk=-2)
                + np.minimum(wn1, 0.0) * ev.read("pd", dk=-1)
            )
        )

    return body


def _fluxdiv_body(ev):
    acc = 0.0
    for n, off in enumerate(ev.offsets(_E)):
        acc = ev.read("signs", x=n) * ev.read("flux", off) + acc
    acc = acc + (ev.read("fluz", dk=1) - ev.read("fluz"))
    ev.store(acc / ev.read("dualv"))


def _make_advance(dt):
    def body(ev):
        slope = dt * ev.read("divvd")
        slope = slope / ev.read("rho")
        ev.store(ev.read("pd") - slope)

    return body


def flux_stage(op: str = "upwind") -> StageSpec:
    bodies = {"upwind": _upwind_flux_body, "centred": _centred_flux_body}
    try:
        body = bodies[op]
    except KeyError:
        raise ValueError(
            f"flux operator must be one of {sorted(bodies)}, got {op!r}"
        ) from None
    return StageSpec(
        name="flux",
        location=_E,
        accessors=(
            accessor("vn", Intent.IN, _E),
            accessor("pd", Intent.IN, _V, extent=(0, 1, 0, 1)),
            accessor("flux", Intent.OUT, _E),
        ),
        body=body,
    )


def fluz_stage(pivbz: float) -> StageSpec:
    return StageSpec(
        name="fluz",
        location=_V,
        accessors=(
            accessor("wn", Intent.IN, _V, k=(-1, 1)),
            accessor("pd", Intent.IN, _V, k=(-2, 1)),
            accessor("fluz", Intent.OUT, _V),
        ),
        body=_fluz_interior_body,
        kminimum=_make_fluz_bottom(pivbz),
        kmaximum=_make_fluz_top(pivbz),
    )


def fluxdiv_stage() -> StageSpec:
    return StageSpec(
        name="divergence",
        location=_V,
        accessors=(
            accessor("flux", Intent.IN, _E, extent=(-1, 0, -1, 0)),
            accessor("fluz", Intent.IN, _V, k=(0, 1)),
            accessor("signs", Intent.IN, _V),
            accessor("dualv", Intent.IN, _V),
            accessor("divvd", Intent.OUT, _V),
        ),
        body=_fluxdiv_body,
    )


def advance_stage(dt: float) -> StageSpec:
    return StageSpec(
        name="advance",
        location=_V,
        accessors=(
            accessor("pd", Intent.IN, _V),
            accessor("divvd", Intent.IN, _V),
            accessor("rho", Intent.IN, _V),
            accessor("pd_out", Intent.OUT, _V),
        ),
        body=_make_advance(dt),
    )


def build_mpdata(
    spec: PatchSpec,
    state: StateFields,
    geo: GeometryFields,
    params: MpdataParams,
    flux_op: str = "upwind",
) -> Computation:
    """Compose the four-stage transport step as one cached forward multistage."""
    if spec.levels < 2:
        raise ValueError(
            f"the transport step needs at least 2 levels, got {spec.levels}"
        )
    rho_core = state.rho.core()
    if np.any(rho_core == 0.0):
        raise ValueError("rho contains zeros; the density update would divide by zero")
    ms = multistage(
        "forward",
        StageUse(flux_stage(flux_op), ("vn", "pd_in", "flux")),
        StageUse(fluz_stage(params.pivbz), ("wn", "pd_in", "fluz")),
        StageUse(fluxdiv_stage(), ("flux", "fluz", "edge_signs", "dual_volumes", "divvd")),
        StageUse(advance_stage(params.dt), ("pd_in", "divvd", "rho", "pd_out")),
        caches=("flux", "fluz", "divvd"),
    )
    bindings = {
        "pd_in": state.pd_in,
        "pd_out": state.pd_out,
        "vn": state.vn,
        "wn": state.wn,
        "rho": state.rho,
        "flux": state.flux,
        "fluz": state.fluz,
        "divvd": state.divvd,
        "edge_signs": geo.edge_signs,
        "dual_volumes": geo.dual_volumes,
    }
    return compose(spec, [ms], bindings)


# ---------------------------------------------------------------------------
# divergence demo kernels (cells)


def _div_simple_body(ev):
    acc = 0.0
    for off in ev.offsets(_E):
        acc = ev.read("vn", off) * ev.read("length", off) + acc
    ev.store(acc / ev.read("area"))


def _div_weighted_body(ev):
    acc = 0.0
    for n, off in enumerate(ev.offsets(_E)):
        acc = ev.read("vn", off) * ev.read("weights", x=n) + acc
    ev.store(acc)


def div_simple_stage() -> StageSpec:
    return StageSpec(
        name="div_simple",
        location=_C,
        accessors=(
            accessor("vn", Intent.IN, _E, extent=(0, 1, 0, 1)),
            accessor("length", Intent.IN, _E, extent=(0, 1, 0, 1)),
            accessor("area", Intent.IN, _C),
            accessor("div", Intent.OUT, _C),
        ),
        body=_div_simple_body,
    )


def div_weighted_stage() -> StageSpec:
    return StageSpec(
        name="div_weighted",
        location=_C,
        accessors=(
            accessor("vn", Intent.IN, _E, extent=(0, 1, 0, 1)),
            accessor("weights", Intent.IN, _C),
            accessor("div", Intent.OUT, _C),
        ),
        body=_div_weighted_body,
    )


def build_divergence(spec: PatchSpec, state: StateFields, geo: GeometryFields,
                     weighted: bool, out: Field) -> Computation:
    """Single-stage cell divergence, plain or with precomputed weights."""
    if weighted:
        use = StageUse(div_weighted_stage(), ("vn", "weights", "div_out"))
        bindings = {"vn": state.vn, "weights": geo.weights, "div_out": out}
    else:
        use = StageUse(div_simple_stage(), ("vn", "length", "area", "div_out"))
        bindings = {
            "vn": state.vn,
            "length": geo.edge_length,
            "area": geo.cell_area,
            "div_out": out,
        }
    return compose(spec, [multistage("parallel", use)], bindings)


# ---------------------------------------------------------------------------
# initialization


def init_preset(field: Field, preset: str, seed: int = 0) -> None:
    """Fill a field's interior with a named preset and refresh its halo.

    ``uniform`` writes ones, ``gaussian-bump`` a horizontal bump constant in
    the vertical, ``random`` per-element draws from [0, 1) seeded by both
    ``seed`` and the field name.
    """
    from .executors import halo_update

    spec = field.spec
    h, rows, cols = spec.halo, spec.rows, spec.cols
    core_shape = (rows, field.shape[1], cols, field.shape[3], field.shape[4])
    if preset == "uniform":
        values = np.ones(core_shape)
    elif preset == "gaussian-bump":
        sigma = max(rows, cols) / 6.0
        di = np.arange(rows)[:, None] - rows / 2.0
        dj = np.arange(cols)[None, :] - cols / 2.0
        bump = np.exp(-(di**2 + dj**2) / (2.0 * sigma**2))
        values = np.broadcast_to(
            bump[:, None, :, None, None], core_shape
        ).copy()
    elif preset == "random":
        rng = np.random.default_rng([seed, zlib.crc32(field.name.encode())])
        values = rng.random(core_shape)
    else:
        raise ValueError(f"unknown preset {preset!r}")
    field.array("primary", "rw")[h : h + rows, :, h : h + cols] = values
    halo_update(field)


def load_field_csv(field: Field, stream) -> None:
    """Load ``element,level,value`` rows into a field's interior.

    Elements are canonical ids; the level column must be 0 for 2-D fields.
    """
    if field.has_extra:
        raise ValueError(f"field {field.name!r} has an extra axis; CSV load "
                         f"supports scalar per-element values only")
    from .executors import halo_update

    spec = field.spec
    arr = field.array("primary", "rw")
    h = spec.halo
    n = element_count(spec, field.meta.location)
    nk = field.shape[3]
    reader = csv.reader(stream)
    for lineno, row in enumerate(reader, start=1):
        if not row or row[0].lstrip().startswith("#"):
            continue
        if lineno == 1 and not _numeric(row[0]):
            continue  # header line
        try:
            eid, level, value = int(row[0]), int(row[1]), float(row[2])
        except (ValueError, IndexError):
            raise ValueError(f"line {lineno}: expected 'element,level,value'")
        if not 0 <= eid < n:
            raise ValueError(f"line {lineno}: element {eid} out of range [0, {n})")
        if not 0 <= level < nk:
            raise ValueError(f"line {lineno}: level {level} out of range [0, {nk})")
        i, c, j = element_coord(spec, field.meta.location, eid)
        arr[i + h, c, j + h, level, 0] = value
    halo_update(field)


def _numeric(token: str) -> bool:
    try:
        int(token)
        return True
    except ValueError:
        return False


def total_mass(state: StateFields, geo: GeometryFields, which: str = "pd_in") -> float:
    """Density integrated over dual volumes and levels."""
    pd = getattr(state, which).core()[:, 0, :, :, 0]
    dual = geo.dual_volumes.core()[:, 0, :, 0, 0]
    return float(np.sum(pd * dual[:, :, None]))
