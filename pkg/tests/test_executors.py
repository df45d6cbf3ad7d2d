import numpy as np
import pytest

from tristencil.executors import (
    TileSpec,
    halo_update,
    run_fused,
    run_naive,
    time_computation,
)
from tristencil.stencil import (
    Intent,
    StageSpec,
    StageUse,
    accessor,
    compose,
    multistage,
)
from tristencil.storage import Selector, make_storage
from tristencil.topology import LocationType, PatchSpec

V = LocationType.VERTICES


def _copy_body(ev):
    ev.store(ev.read("src"))


def _stage(name, body, extent=(0, 0, 0, 0), k=(0, 0), **kwargs):
    return StageSpec(
        name=name,
        location=V,
        accessors=(
            accessor("src", Intent.IN, V, extent, k),
            accessor("dst", Intent.OUT, V),
        ),
        body=body,
        **kwargs,
    )


def _fields(spec, names):
    return {n: make_storage(spec, V, n) for n in names}


def _seed_input(field, seed=0):
    rng = np.random.default_rng(seed)
    spec = field.spec
    h = spec.halo
    arr = field.array("primary", "rw")
    arr[h:h + spec.rows, :, h:h + spec.cols, :, :] = rng.random(
        (spec.rows, 1, spec.cols, arr.shape[3], 1))
    halo_update(field)


def _shift_chain(spec, policy="parallel"):
    """a --(i-shift)--> t --(j-shift)--> b with t cached."""

    def shift_i(ev):
        ev.store(ev.read("src", (-1, 0, 0)))

    def shift_j(ev):
        ev.store(ev.read("src", (0, 0, 1)))

    fields = _fields(spec, ("a", "t", "b"))
    s1 = StageUse(_stage("produce", shift_i, extent=(-1, 0, 0, 0)), ("a", "t"))
    s2 = StageUse(_stage("consume", shift_j, extent=(0, 0, 0, 1)), ("t", "b"))
    comp = compose(spec, [multistage(policy, s1, s2, caches=("t",))], fields)
    return comp, fields


# -- tiles and halos --------------------------------------------------------


def test_tile_spec_validation():
    TileSpec(1, 1)
    with pytest.raises(ValueError, match="tile"):
        TileSpec(0, 4)
    with pytest.raises(ValueError, match="tile"):
        TileSpec(4, -1)
    with pytest.raises(ValueError, match="workers"):
        TileSpec(4, 4, workers=0)


def test_halo_update_wraps_both_axes():
    spec = PatchSpec(5, 4, 1, halo=2)
    f = make_storage(spec, V, "f", Selector(level=False))
    h = spec.halo
    arr = f.array("primary", "rw")
    arr[:] = np.nan
    core = np.arange(5 * 4, dtype=float).reshape(5, 1, 4)
    arr[h:h + 5, :, h:h + 4, 0, 0] = core
    halo_update(f)
    wrapped = np.concatenate([core[-h:], core, core[:h]], axis=0)
    wrapped = np.concatenate(
        [wrapped[:, :, -h:], wrapped, wrapped[:, :, :h]], axis=2)
    assert np.array_equal(f.array()[:, :, :, 0, 0], wrapped)


def test_halo_update_is_idempotent():
    spec = PatchSpec(4, 6, 2)
    f = make_storage(spec, V, "f")
    _seed_input(f, seed=3)
    once = f.array().copy()
    halo_update(f)
    assert np.array_equal(f.array(), once)


def test_naive_refreshes_stale_input_halos():
    spec = PatchSpec(4, 4, 2)
    fields = _fields(spec, ("a", "b"))
    _seed_input(fields["a"], seed=1)
    # poison the halo; the executor must rebuild it before sweeping
    arr = fields["a"].array("primary", "rw")
    arr[0] = np.nan
    arr[:, :, -1] = np.nan

    def shift(ev):
        ev.store(ev.read("src", (-1, 0, 0)))

    use = StageUse(_stage("shift", shift, extent=(-1, 0, 0, 0)), ("a", "b"))
    comp = compose(spec, [multistage("parallel", use)], fields)
    run_naive(comp)
    expect = np.roll(fields["a"].core(), 1, axis=0)
    assert np.array_equal(fields["b"].core(), expect)


# -- naive bookkeeping ------------------------------------------------------


def test_naive_stats_and_phases():
    spec = PatchSpec(4, 5, 3)
    fields = _fields(spec, ("a", "b"))
    _seed_input(fields["a"])
    use = StageUse(_stage("copy", _copy_body), ("a", "b"))
    comp = compose(spec, [multistage("parallel", use)], fields)
    stats = run_naive(comp, run_tag="r0")
    assert stats.executor == "naive"
    assert stats.stage_updates == {"copy": 4 * 5 * 3}
    assert stats.total_updates == comp.total_updates()
    assert set(stats.wall_times) == {"ms0"}
    assert stats.total_wall >= 0.0
    report = stats.traffic()
    assert {row.stage for row in report.rows} == {"r0/copy"}


def test_rerun_overwrites_deterministically():
    spec = PatchSpec(4, 4, 3)
    comp, fields = _shift_chain(spec)
    _seed_input(fields["a"], seed=9)
    run_naive(comp)
    first = fields["b"].core()
    run_naive(comp, run_tag="again")
    assert np.array_equal(fields["b"].core(), first)


# -- fused equivalence ------------------------------------------------------

TILE_CASES = [
    TileSpec(4, 4),
    TileSpec(2, 2),
    TileSpec(3, 2),
    TileSpec(2, 2, workers=3),
]


@pytest.mark.parametrize("tiles", TILE_CASES)
def test_fused_matches_naive_for_shift_chain(tiles):
    spec = PatchSpec(4, 4, 3, halo=2)
    comp_n, fields_n = _shift_chain(spec)
    comp_f, fields_f = _shift_chain(spec)
    _seed_input(fields_n["a"], seed=5)
    _seed_input(fields_f["a"], seed=5)
    run_naive(comp_n)
    run_fused(comp_f, tiles)
    assert np.array_equal(fields_f["b"].core(), fields_n["b"].core())


def test_fused_matches_naive_with_vertical_dependency():
    spec = PatchSpec(4, 4, 4)

    def shift_up(ev):
        ev.store(ev.read("src", dk=1))

    def outs():
        fields = _fields(spec, ("a", "t", "b"))
        s1 = StageUse(_stage("produce", _copy_body), ("a", "t"))
        s2 = StageUse(
            _stage("consume", shift_up, k=(0, 1), kmaximum=_copy_body),
            ("t", "b"),
        )
        comp = compose(spec, [multistage("forward", s1, s2, caches=("t",))],
                       fields)
        return comp, fields

    comp_n, fields_n = outs()
    comp_f, fields_f = outs()
    assert comp_n.multistages[0].lags == [0, 1]
    _seed_input(fields_n["a"], seed=2)
    _seed_input(fields_f["a"], seed=2)
    run_naive(comp_n)
    run_fused(comp_f, TileSpec(2, 2))
    assert np.array_equal(fields_f["b"].core(), fields_n["b"].core())


def test_fused_matches_naive_backward_policy():
    spec = PatchSpec(4, 4, 4)

    def shift_down(ev):
        ev.store(ev.read("src", dk=-1))

    def outs():
        fields = _fields(spec, ("a", "t", "b"))
        s1 = StageUse(_stage("produce", _copy_body), ("a", "t"))
        s2 = StageUse(
            _stage("consume", shift_down, k=(-1, 0), kminimum=_copy_body),
            ("t", "b"),
        )
        comp = compose(spec, [multistage("backward", s1, s2, caches=("t",))],
                       fields)
        return comp, fields

    comp_n, fields_n = outs()
    comp_f, fields_f = outs()
    assert comp_n.multistages[0].lags == [0, 1]
    _seed_input(fields_n["a"], seed=8)
    _seed_input(fields_f["a"], seed=8)
    run_naive(comp_n)
    run_fused(comp_f, TileSpec(2, 3))
    assert np.array_equal(fields_f["b"].core(), fields_n["b"].core())


# -- fused traffic ----------------------------------------------------------


def test_fused_cached_field_stays_out_of_main_storage():
    spec = PatchSpec(4, 4, 3, halo=2)
    comp_n, fields_n = _shift_chain(spec)
    comp_f, fields_f = _shift_chain(spec)
    _seed_input(fields_n["a"])
    _seed_input(fields_f["a"])
    sn = run_naive(comp_n)
    sf = run_fused(comp_f, TileSpec(2, 2))
    naive_t = sum(r.raw_reads + r.raw_writes for r in sn.traffic().rows
                  if r.field == "t")
    fused_t = sum(r.raw_reads + r.raw_writes for r in sf.traffic().rows
                  if r.field == "t")
    assert naive_t > 0
    assert fused_t == 0


def test_distinct_totals_for_pointwise_cached_chain():
    # two pointwise stages through one cache: the unfused run touches
    # 4 planes of main storage per element-level, the fused run only 2
    spec = PatchSpec(8, 8, 5)

    def build():
        fields = _fields(spec, ("a", "t", "b"))
        s1 = StageUse(_stage("produce", _copy_body), ("a", "t"))
        s2 = StageUse(_stage("consume", _copy_body), ("t", "b"))
        comp = compose(spec, [multistage("parallel", s1, s2, caches=("t",))],
                       fields)
        return comp, fields

    comp_n, fields_n = build()
    comp_f, fields_f = build()
    _seed_input(fields_n["a"])
    _seed_input(fields_f["a"])
    sn = run_naive(comp_n)
    sf = run_fused(comp_f, TileSpec(4, 4))
    n_elems = 8 * 8 * 5
    assert sn.traffic().total_distinct() == 4 * n_elems
    assert sf.traffic().total_distinct() == 2 * n_elems


def test_fused_apron_updates_exceed_interior():
    spec = PatchSpec(4, 4, 3, halo=2)
    comp_n, fields_n = _shift_chain(spec)
    comp_f, fields_f = _shift_chain(spec)
    _seed_input(fields_n["a"])
    _seed_input(fields_f["a"])
    sn = run_naive(comp_n)
    sf = run_fused(comp_f, TileSpec(2, 2))
    # the producer re-runs over each tile's apron column
    assert sf.stage_updates["produce"] > sn.stage_updates["produce"]
    assert sf.stage_updates["consume"] == sn.stage_updates["consume"]


def test_worker_count_leaves_traffic_alone():
    spec = PatchSpec(4, 4, 3, halo=2)
    comp_1, fields_1 = _shift_chain(spec)
    comp_3, fields_3 = _shift_chain(spec)
    _seed_input(fields_1["a"])
    _seed_input(fields_3["a"])
    s1 = run_fused(comp_1, TileSpec(2, 2, workers=1))
    s3 = run_fused(comp_3, TileSpec(2, 2, workers=3))
    r1, r3 = s1.traffic(), s3.traffic()
    assert r1.total_raw() == r3.total_raw()
    assert r1.total_distinct() == r3.total_distinct()
    assert np.array_equal(fields_3["b"].core(), fields_1["b"].core())


def test_tile_smaller_than_stage_reach_rejected():
    spec = PatchSpec(4, 4, 3)
    fields = _fields(spec, ("a", "b"))
    _seed_input(fields["a"])

    def both_sides(ev):
        ev.store(ev.read("src", (-1, 0, 0)) + ev.read("src", (1, 0, 0)))

    use = StageUse(_stage("wide", both_sides, extent=(-1, 1, 0, 0)), ("a", "b"))
    comp = compose(spec, [multistage("parallel", use)], fields)
    run_fused(comp, TileSpec(2, 2))  # reach is 2x1, this tile fits
    with pytest.raises(ValueError, match="smaller"):
        run_fused(comp, TileSpec(1, 1))


# -- timing -----------------------------------------------------------------


def test_time_computation_reports_median():
    spec = PatchSpec(4, 4, 2)
    fields = _fields(spec, ("a", "b"))
    _seed_input(fields["a"])
    use = StageUse(_stage("copy", _copy_body), ("a", "b"))
    comp = compose(spec, [multistage("parallel", use)], fields)
    res = time_computation(comp, run_naive, reps=3)
    assert len(res.times) == 3
    assert res.median_seconds > 0.0
    assert res.updates == comp.total_updates()
    assert res.seconds_per_update == res.median_seconds / res.updates


def test_time_computation_rejects_zero_reps():
    spec = PatchSpec(4, 4, 2)
    fields = _fields(spec, ("a", "b"))
    use = StageUse(_stage("copy", _copy_body), ("a", "b"))
    comp = compose(spec, [multistage("parallel", use)], fields)
    with pytest.raises(ValueError, match="reps"):
        time_computation(comp, run_naive, reps=0)
