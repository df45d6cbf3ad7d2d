import io
import math

import numpy as np
import pytest

from tristencil import reference
from tristencil.connectivity import build_neighbor_table, edge_signs_table, structured_offsets
from tristencil.executors import TileSpec, halo_update, run_fused, run_naive
from tristencil.kernels import field_to_flat
from tristencil.layouts import Numbering, make_permutation
from tristencil.mpdata import (
    UNIT_CELL_AREA,
    UNIT_DUAL_VOLUME,
    UNIT_EDGE_LENGTH,
    MpdataParams,
    build_divergence,
    build_geometry,
    build_mpdata,
    build_state,
    flux_stage,
    init_preset,
    load_field_csv,
    precompute_weights,
    total_mass,
)
from tristencil.storage import make_storage
from tristencil.topology import LocationType, PatchSpec, element_count

V = LocationType.VERTICES
C = LocationType.CELLS
E = LocationType.EDGES


def _fill(field, rng, lo, hi):
    spec = field.spec
    h = spec.halo
    arr = field.array("primary", "rw")
    shape = arr[h:h + spec.rows, :, h:h + spec.cols, :, :].shape
    arr[h:h + spec.rows, :, h:h + spec.cols, :, :] = lo + (hi - lo) * rng.random(shape)
    halo_update(field)


def _setup(spec, seed=0, geometry="uniform"):
    geo = build_geometry(spec, geometry, seed=seed)
    state = build_state(spec)
    rng = np.random.default_rng(seed)
    init_preset(state.pd_in, "random", seed=seed)
    _fill(state.vn, rng, -0.5, 0.5)
    _fill(state.wn, rng, -0.5, 0.5)
    _fill(state.rho, rng, 0.5, 1.5)
    return geo, state


def _oracle(spec, state, geo, params, flux_op="upwind"):
    e2v = build_neighbor_table(spec, E, V).ids
    v2e = build_neighbor_table(spec, V, E).ids
    signs = edge_signs_table(spec)
    dual = field_to_flat(geo.dual_volumes)[:, 0]
    return reference.transport_step(
        e2v, v2e, signs, dual,
        field_to_flat(state.pd_in), field_to_flat(state.vn),
        field_to_flat(state.wn), field_to_flat(state.rho),
        params.dt, params.pivbz, flux_op=flux_op,
    )


# -- parameters and builders ------------------------------------------------


def test_params_defaults_and_validation():
    p = MpdataParams()
    assert p.dt == 0.1 and p.pivbz == 1.0
    MpdataParams(dt=0.0, pivbz=-2.0)
    with pytest.raises(ValueError, match="dt"):
        MpdataParams(dt=-0.1)
    with pytest.raises(ValueError, match="dt"):
        MpdataParams(dt=float("nan"))
    with pytest.raises(ValueError, match="pivbz"):
        MpdataParams(pivbz=float("inf"))


def test_uniform_geometry_values():
    spec = PatchSpec(4, 4, 2)
    geo = build_geometry(spec)
    assert np.all(field_to_flat(geo.edge_length) == UNIT_EDGE_LENGTH)
    assert np.all(field_to_flat(geo.cell_area) == UNIT_CELL_AREA)
    assert np.all(field_to_flat(geo.dual_volumes) == UNIT_DUAL_VOLUME)
    assert UNIT_CELL_AREA == pytest.approx(math.sqrt(3.0) / 4.0)
    assert UNIT_DUAL_VOLUME == pytest.approx(6 * UNIT_CELL_AREA / 3.0)
    # every weight is the unit length over the unit area
    w = geo.weights.core()[:, :, :, 0, :]
    assert np.all(w == UNIT_EDGE_LENGTH / UNIT_CELL_AREA)


def test_random_geometry_ranges_and_determinism():
    spec = PatchSpec(5, 4, 2)
    geo = build_geometry(spec, "random", seed=4)
    lengths = field_to_flat(geo.edge_length)
    areas = field_to_flat(geo.cell_area)
    volumes = field_to_flat(geo.dual_volumes)
    assert np.all((lengths >= 0.5) & (lengths < 1.5))
    assert np.all((areas >= 0.5 * UNIT_CELL_AREA) & (areas < 1.5 * UNIT_CELL_AREA))
    assert np.all((volumes >= 0.5 * UNIT_DUAL_VOLUME) & (volumes < 1.5 * UNIT_DUAL_VOLUME))
    again = build_geometry(spec, "random", seed=4)
    assert np.array_equal(field_to_flat(again.edge_length), lengths)
    other = build_geometry(spec, "random", seed=5)
    assert not np.array_equal(field_to_flat(other.edge_length), lengths)
    with pytest.raises(ValueError, match="mode"):
        build_geometry(spec, "warped")


def test_geometry_signs_match_structured_table():
    spec = PatchSpec(4, 5, 2)
    geo = build_geometry(spec, "random", seed=1)
    signs = geo.edge_signs.core()[:, 0, :, 0, :].reshape(-1, 6)
    assert np.array_equal(signs, edge_signs_table(spec))
    assert set(np.unique(signs)) == {-1.0, 1.0}


def test_geometry_fields_are_level_free():
    geo = build_geometry(PatchSpec(4, 4, 3))
    for f in geo.fields():
        assert not f.has_levels
    assert geo.edge_signs.shape[4] == 6
    assert geo.weights.shape[4] == 3


def test_weights_follow_canonical_edge_order():
    spec = PatchSpec(4, 4, 2)
    geo = build_geometry(spec, "random", seed=9)
    c2e = build_neighbor_table(spec, C, E).ids
    lengths = field_to_flat(geo.edge_length)[:, 0]
    areas = field_to_flat(geo.cell_area)[:, 0]
    w = geo.weights.core()[:, :, :, 0, :].reshape(-1, 3)
    expect = lengths[c2e] / areas[:, None]
    assert np.array_equal(w, expect)


def test_weights_reject_zero_area():
    spec = PatchSpec(4, 4, 2)
    geo = build_geometry(spec)
    h = spec.halo
    geo.cell_area.array("primary", "rw")[h, 0, h, 0, 0] = 0.0
    with pytest.raises(ValueError, match="area"):
        precompute_weights(spec, geo)


def test_state_interface_fields_are_staggered():
    spec = PatchSpec(4, 4, 5)
    state = build_state(spec)
    assert state.pd_in.shape[3] == 5
    assert state.wn.shape[3] == 6
    assert state.fluz.shape[3] == 6
    assert state.flux.shape[3] == 5


def test_build_mpdata_validations():
    spec = PatchSpec(4, 4, 1)
    geo, state = _setup(spec)
    with pytest.raises(ValueError, match="levels"):
        build_mpdata(spec, state, geo, MpdataParams())
    spec = PatchSpec(4, 4, 3)
    geo, state = _setup(spec)
    state.rho.array("primary", "rw")[:] = 0.0
    with pytest.raises(ValueError, match="rho"):
        build_mpdata(spec, state, geo, MpdataParams())
    with pytest.raises(ValueError, match="operator"):
        flux_stage("sideways")


def test_mpdata_plan_shape():
    spec = PatchSpec(4, 4, 3)
    geo, state = _setup(spec)
    comp = build_mpdata(spec, state, geo, MpdataParams())
    ms = comp.multistages[0]
    assert [bs.name for bs in ms.stages] == ["flux", "fluz", "divergence", "advance"]
    assert ms.lags == [0, 0, 1, 1]
    assert ms.windows == {"flux": 2, "fluz": 2, "divvd": 1}
    a = ms.aprons[0]
    assert (a.im, a.ip, a.jm, a.jp) == (1, 0, 1, 0)
    assert all((b.im, b.ip, b.jm, b.jp) == (0, 0, 0, 0) for b in ms.aprons[1:])


# -- operator semantics -----------------------------------------------------


def test_flux_operator_small_values():
    e2v = np.array([[0, 1]])
    pd = np.array([[3.0], [5.0]])
    assert reference.upwind_flux(e2v, np.array([[2.0]]), pd)[0, 0] == 6.0
    assert reference.upwind_flux(e2v, np.array([[-2.0]]), pd)[0, 0] == -10.0
    assert reference.centred_flux(e2v, np.array([[2.0]]), pd)[0, 0] == 8.0


def test_fluz_boundaries_scale_neighbor_interface():
    pd = np.array([[1.0, 2.0, 4.0]])
    wn = np.array([[9.0, 3.0, -2.0, 9.0]])  # outer entries must be ignored
    fluz = reference.upwind_fluz(wn, pd, pivbz=0.5)
    assert fluz[0, 1] == 3.0  # upwind from below
    assert fluz[0, 2] == -8.0  # upwind from above
    assert fluz[0, 0] == 0.5 * fluz[0, 1]
    assert fluz[0, 3] == 0.5 * fluz[0, 2]


def test_composed_fluz_top_copies_below_at_unit_pivbz():
    spec = PatchSpec(4, 4, 4)
    geo, state = _setup(spec, seed=6)
    comp = build_mpdata(spec, state, geo, MpdataParams(pivbz=1.0))
    run_naive(comp)
    fluz = field_to_flat(state.fluz)
    assert np.array_equal(fluz[:, -1], fluz[:, -2])
    assert np.array_equal(fluz[:, 0], fluz[:, 1])


# -- equivalence ------------------------------------------------------------


@pytest.mark.parametrize("shape,seed", [
    ((4, 4, 3), 0),
    ((5, 3, 4), 1),
    ((8, 8, 8), 2),
])
def test_composed_step_matches_oracle(shape, seed):
    spec = PatchSpec(*shape)
    geo, state = _setup(spec, seed=seed, geometry="random")
    params = MpdataParams(dt=0.2, pivbz=0.7)
    comp = build_mpdata(spec, state, geo, params)
    oracle = _oracle(spec, state, geo, params)
    run_naive(comp)
    assert np.array_equal(field_to_flat(state.flux), oracle["flux"])
    assert np.array_equal(field_to_flat(state.fluz), oracle["fluz"])
    assert np.array_equal(field_to_flat(state.divvd), oracle["div"])
    assert np.array_equal(field_to_flat(state.pd_out), oracle["pd_out"])


def test_centred_step_matches_oracle():
    spec = PatchSpec(5, 4, 3)
    geo, state = _setup(spec, seed=3, geometry="random")
    params = MpdataParams()
    comp = build_mpdata(spec, state, geo, params, flux_op="centred")
    oracle = _oracle(spec, state, geo, params, flux_op="centred")
    run_naive(comp)
    assert np.array_equal(field_to_flat(state.pd_out), oracle["pd_out"])


@pytest.mark.parametrize("tiles", [TileSpec(3, 3), TileSpec(2, 5, workers=2)])
def test_fused_step_matches_naive(tiles):
    spec = PatchSpec(6, 5, 4)
    params = MpdataParams(dt=0.15, pivbz=0.3)
    geo_n, state_n = _setup(spec, seed=12, geometry="random")
    geo_f, state_f = _setup(spec, seed=12, geometry="random")
    run_naive(build_mpdata(spec, state_n, geo_n, params))
    run_fused(build_mpdata(spec, state_f, geo_f, params), tiles)
    assert np.array_equal(field_to_flat(state_f.pd_out),
                          field_to_flat(state_n.pd_out))


@pytest.mark.parametrize("seed", range(4))
def test_closed_system_conserves_mass(seed):
    spec = PatchSpec(6, 6, 4)
    geo, state = _setup(spec, seed=seed, geometry="random")
    init_preset(state.rho, "uniform")
    comp = build_mpdata(spec, state, geo, MpdataParams(dt=0.05, pivbz=0.0))
    before = total_mass(state, geo, "pd_in")
    run_naive(comp)
    after = total_mass(state, geo, "pd_out")
    assert abs(after - before) <= 1e-12 * abs(before)


def test_relabeled_oracle_is_invariant():
    """The flat step commutes with renumbering vertices and edges."""
    spec = PatchSpec(4, 4, 3)
    geo, state = _setup(spec, seed=5, geometry="random")
    params = MpdataParams(dt=0.1, pivbz=0.4)
    base = _oracle(spec, state, geo, params)

    perm_v = make_permutation(Numbering.HN, spec, V)
    perm_e = make_permutation(Numbering.UN, spec, E)
    e2v = build_neighbor_table(spec, E, V, perm_e, perm_v).ids
    v2e = build_neighbor_table(spec, V, E, perm_v, perm_e).ids
    signs = edge_signs_table(spec)[perm_v.inverse]
    dual = field_to_flat(geo.dual_volumes, perm_v)[:, 0]
    out = reference.transport_step(
        e2v, v2e, signs, dual,
        field_to_flat(state.pd_in, perm_v), field_to_flat(state.vn, perm_e),
        field_to_flat(state.wn, perm_v), field_to_flat(state.rho, perm_v),
        params.dt, params.pivbz,
    )
    assert np.array_equal(out["pd_out"][perm_v.forward], base["pd_out"])
    assert np.array_equal(out["flux"][perm_e.forward], base["flux"])


# -- divergence demo --------------------------------------------------------


def test_divergence_simple_matches_reference():
    spec = PatchSpec(5, 5, 3)
    geo, state = _setup(spec, seed=7, geometry="random")
    out = make_storage(spec, C, "div_out")
    run_naive(build_divergence(spec, state, geo, weighted=False, out=out))
    c2e = build_neighbor_table(spec, C, E).ids
    expect = reference.cell_divergence(
        c2e, field_to_flat(state.vn), field_to_flat(geo.edge_length)[:, 0],
        field_to_flat(geo.cell_area)[:, 0])
    assert np.array_equal(field_to_flat(out), expect)


def test_divergence_weighted_agrees_with_simple():
    spec = PatchSpec(4, 6, 2)
    geo, state = _setup(spec, seed=8, geometry="random")
    simple = make_storage(spec, C, "div_simple_out")
    weighted = make_storage(spec, C, "div_weighted_out")
    run_naive(build_divergence(spec, state, geo, weighted=False, out=simple))
    run_naive(build_divergence(spec, state, geo, weighted=True, out=weighted))
    a, b = field_to_flat(simple), field_to_flat(weighted)
    assert np.max(np.abs(a - b)) <= 1e-12 * np.max(np.abs(a))


# -- initialization helpers -------------------------------------------------


def test_preset_uniform_and_bump():
    spec = PatchSpec(8, 8, 3)
    f = make_storage(spec, V, "f")
    init_preset(f, "uniform")
    assert np.all(field_to_flat(f) == 1.0)
    init_preset(f, "gaussian-bump")
    core = f.core()[:, 0, :, :, 0]
    assert np.all(core > 0.0) and np.max(core) <= 1.0
    # constant in the vertical, peaked at the patch centre
    assert np.array_equal(core[:, :, 0], core[:, :, -1])
    peak = np.unravel_index(np.argmax(core[:, :, 0]), core[:, :, 0].shape)
    assert peak == (4, 4)
    with pytest.raises(ValueError, match="preset"):
        init_preset(f, "sawtooth")


def test_preset_random_seeding():
    spec = PatchSpec(4, 4, 2)
    f1 = make_storage(spec, V, "same")
    f2 = make_storage(spec, V, "same")
    f3 = make_storage(spec, V, "other")
    for f in (f1, f2, f3):
        init_preset(f, "random", seed=3)
    assert np.array_equal(field_to_flat(f1), field_to_flat(f2))
    assert not np.array_equal(field_to_flat(f1), field_to_flat(f3))
    init_preset(f2, "random", seed=4)
    assert not np.array_equal(field_to_flat(f1), field_to_flat(f2))


def test_load_field_csv_roundtrip():
    spec = PatchSpec(4, 4, 2)
    f = make_storage(spec, V, "pd")
    text = io.StringIO(
        "element,level,value\n"
        "# a comment line\n"
        "0,0,1.5\n"
        "5,1,-2.0\n"
        "15,0,4.25\n"
    )
    load_field_csv(f, text)
    flat = field_to_flat(f)
    assert flat[0, 0] == 1.5
    assert flat[5, 1] == -2.0
    assert flat[15, 0] == 4.25
    assert flat[1, 0] == 0.0
    # the halo ring was refreshed: the wrapped corner mirrors element 15
    h = spec.halo
    assert f.array()[h - 1, 0, h - 1, 0, 0] == 4.25


def test_load_field_csv_errors():
    spec = PatchSpec(4, 4, 2)
    f = make_storage(spec, V, "pd")
    with pytest.raises(ValueError, match="element,level,value"):
        load_field_csv(f, io.StringIO("0,zero\n"))
    with pytest.raises(ValueError, match="out of range"):
        load_field_csv(f, io.StringIO(f"{element_count(spec, V)},0,1.0\n"))
    with pytest.raises(ValueError, match="out of range"):
        load_field_csv(f, io.StringIO("0,2,1.0\n"))
    geo = build_geometry(spec)
    with pytest.raises(ValueError, match="extra"):
        load_field_csv(geo.weights, io.StringIO("0,0,1.0\n"))


def test_total_mass_uniform_density():
    spec = PatchSpec(4, 4, 3)
    geo, state = _setup(spec)
    init_preset(state.pd_in, "uniform")
    expect = element_count(spec, V) * spec.levels * UNIT_DUAL_VOLUME
    assert total_mass(state, geo, "pd_in") == pytest.approx(expect, rel=1e-12)
