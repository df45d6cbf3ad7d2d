import io

import numpy as np
import pytest

from tristencil.topology import (
    LocationType,
    PatchSpec,
    build_mesh,
    element_coord,
    element_count,
    element_id,
)
from tristencil.layouts import Numbering, make_permutation
from tristencil.connectivity import (
    OFFSET_TABLES,
    assign_edge_signs,
    build_neighbor_table,
    dump_tables,
    edge_signs_table,
    neighbor_len,
    structured_offsets,
)

V = LocationType.VERTICES
C = LocationType.CELLS
E = LocationType.EDGES

RELATIONS = list(OFFSET_TABLES)


def test_nine_relations_frozen():
    assert len(OFFSET_TABLES) == 9
    degrees = {
        (V, V): 6, (V, E): 6, (V, C): 6,
        (E, V): 2, (E, C): 2, (E, E): 4,
        (C, V): 3, (C, E): 3, (C, C): 3,
    }
    for (from_loc, to_loc), want in degrees.items():
        assert neighbor_len(from_loc, to_loc) == want
        for color in range(from_loc.colors):
            entries = structured_offsets(from_loc, to_loc, color).entries
            assert len(entries) == want
            for (_, tc, _) in entries:
                assert 0 <= tc < to_loc.colors


def test_tables_match_mesh_on_all_small_patches():
    """Exhaustive: every patch 2 <= rows, cols <= 8, all nine relations."""
    for rows in range(2, 9):
        for cols in range(2, 9):
            spec = PatchSpec(rows, cols, 1)
            mesh = build_mesh(spec)
            for from_loc, to_loc in RELATIONS:
                table = build_neighbor_table(spec, from_loc, to_loc)
                assert np.array_equal(
                    np.sort(table.ids, axis=1),
                    mesh.neighbors(from_loc, to_loc),
                ), f"{from_loc.value}->{to_loc.value} on {rows}x{cols}"


def test_offsets_are_translation_invariant():
    """Target-minus-source displacement is the same for every element."""
    spec = PatchSpec(5, 5, 1)
    for from_loc, to_loc in RELATIONS:
        table = build_neighbor_table(spec, from_loc, to_loc)
        for color in range(from_loc.colors):
            entries = structured_offsets(from_loc, to_loc, color).entries
            for i in range(spec.rows):
                for j in range(spec.cols):
                    src = element_id(spec, from_loc, i, color, j)
                    for slot, (di, tc, dj) in enumerate(entries):
                        ti, tcolor, tj = element_coord(
                            spec, to_loc, table.ids[src, slot])
                        assert tcolor == tc
                        assert (ti - i) % 5 == di % 5
                        assert (tj - j) % 5 == dj % 5


def test_edge_to_vertex_origin_comes_first():
    """Slot 0 of every edge's endpoint pair is the vertex at the edge's own
    diamond; downstream upwind selection relies on this."""
    spec = PatchSpec(4, 4, 1)
    e2v = build_neighbor_table(spec, E, V)
    for i in range(4):
        for c in range(3):
            for j in range(4):
                e = element_id(spec, E, i, c, j)
                assert e2v.ids[e, 0] == element_id(spec, V, i, 0, j)


def test_vertex_edge_star_covers_all_colors_twice():
    spec = PatchSpec(4, 4, 1)
    v2e = build_neighbor_table(spec, V, E)
    for v in range(element_count(spec, V)):
        colors = sorted(element_coord(spec, E, e)[1] for e in v2e.ids[v])
        assert colors == [0, 0, 1, 1, 2, 2]


def test_neighbor_table_shape_validation():
    spec = PatchSpec(4, 4, 1)
    table = build_neighbor_table(spec, C, E)
    assert table.ids.shape == (32, 3)
    assert table.ids.dtype == np.int64


def test_permuted_tables_relabel_both_sides():
    spec = PatchSpec(4, 5, 1)
    perm_c = make_permutation(Numbering.UN, spec, C)
    perm_e = make_permutation(Numbering.UN, spec, E)
    plain = build_neighbor_table(spec, C, E)
    perm = build_neighbor_table(spec, C, E, perm_c, perm_e)
    want = perm_e.forward[plain.ids[perm_c.inverse]]
    assert np.array_equal(perm.ids, want)


def test_edge_signs_antisymmetric():
    for spec in (PatchSpec(4, 4, 1), PatchSpec(2, 2, 1), PatchSpec(5, 3, 1)):
        signs = edge_signs_table(spec)
        v2e = build_neighbor_table(spec, V, E).ids
        e2v = build_neighbor_table(spec, E, V).ids
        assert signs.shape == v2e.shape
        assert set(np.unique(signs)) <= {-1.0, 1.0}
        for v in range(v2e.shape[0]):
            for slot in range(6):
                e = v2e[v, slot]
                want = 1.0 if v == min(e2v[e]) else -1.0
                assert signs[v, slot] == want


def test_edge_signs_sum_to_zero_per_edge():
    """Each interior edge is counted once positive, once negative."""
    spec = PatchSpec(3, 4, 1)
    signs = edge_signs_table(spec)
    v2e = build_neighbor_table(spec, V, E).ids
    per_edge = np.zeros(element_count(spec, E))
    for v in range(v2e.shape[0]):
        for slot in range(6):
            per_edge[v2e[v, slot]] += signs[v, slot]
    assert np.all(per_edge == 0.0)


def test_assign_edge_signs_agrees_with_table():
    spec = PatchSpec(5, 4, 1)
    mesh = build_mesh(spec)
    assert np.array_equal(assign_edge_signs(mesh), edge_signs_table(spec))


def test_table_size_validation():
    spec = PatchSpec(4, 4, 1)
    small = make_permutation(Numbering.UN, PatchSpec(3, 3, 1), C)
    with pytest.raises(ValueError):
        build_neighbor_table(spec, C, C, small, None)


def test_dump_tables_csv():
    spec = PatchSpec(2, 3, 1)
    buf = io.StringIO()
    dump_tables(spec, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "from_loc,to_loc,element,slot,neighbor"
    diamonds = 6
    want_rows = sum(f.colors * diamonds * neighbor_len(f, t)
                    for f, t in RELATIONS)
    assert len(lines) == 1 + want_rows
    first = lines[1].split(",")
    assert first[0] in ("vertices", "cells", "edges")
