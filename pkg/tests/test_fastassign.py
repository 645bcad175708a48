from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lsconf.core import assign_labels_cos
from lsconf.errors import DegenerateInputError, InconsistentProvenanceError, InvalidKError, ShapeError
from lsconf.fastassign import Mode, assign_batch, assign_fast, assign_topk, build_index, class_scores
from lsconf.rootsys import CenterMatrix, build_configuration, choose_centers


def make(family, n, k=None, **kw):
    cfg = build_configuration(family, n, **kw)
    C = choose_centers(cfg, k or len(cfg))
    return cfg, C, build_index(cfg, C)


def test_mode_selection():
    assert make("An", 4)[2].mode is Mode.FULL_ROOTS
    assert make("An", 4, projection="DropLast")[2].mode is Mode.FULL_ROOTS
    assert make("Anr", 4, 7, seed=1)[2].mode is Mode.SUBSET_ROOTS
    assert make("Anp", 4)[2].mode is Mode.SUBSET_ROOTS
    assert make("An", 4, projection="Isometric")[2].mode is Mode.BRUTE_FORCE
    assert make("An", 3, interpolation=1)[2].mode is Mode.BRUTE_FORCE


def test_index_tables_a2_drop():
    _, _, index = make("An", 2, projection="DropLast")
    # roots touching the dropped coordinate 2 become axes
    assert index.axis_to_class == {(1, 0): 1, (1, 1): 3, (-1, 0): 4, (-1, 1): 5}
    assert index.pair_to_class == {(0, 1): 0, (1, 0): 2}


@pytest.mark.parametrize("case", [
    ("An", 5, None, {}),
    ("An", 5, None, {"projection": "DropLast"}),
    ("Anr", 6, 17, {"seed": 4}),
    ("Anr", 6, 17, {"seed": 4, "projection": "DropLast"}),
    ("Anp", 5, None, {"projection": "DropLast"}),
    ("An", 4, None, {"projection": "Isometric"}),
])
def test_matches_brute_force(case):
    family, n, k, kw = case
    _, C, index = make(family, n, k, **kw)
    rng = np.random.default_rng(0)
    Z = rng.standard_normal((500, C.n_dim))
    # exact ties: integer-valued queries
    Z[:100] = rng.integers(-2, 3, (100, C.n_dim))
    Z = Z[np.any(Z != 0, axis=1)]
    np.testing.assert_array_equal(assign_batch(index, Z), assign_labels_cos(Z, C))


@given(st.lists(st.integers(-3, 3), min_size=6, max_size=6))
@settings(max_examples=200, deadline=None)
def test_tie_heavy_queries(z):
    if not any(z):
        return
    for kw in ({}, {"projection": "DropLast"}):
        cfg = build_configuration("Anr", 6 if kw else 5, seed=2, **kw)
        C = choose_centers(cfg, 20)
        index = build_index(cfg, C)
        zz = np.array(z[: C.n_dim], dtype=float)
        if not zz.any():
            continue
        assert assign_fast(index, zz) == assign_labels_cos(zz[None], C)[0]


def test_full_roots_counts_passes():
    _, _, index = make("An", 64)
    stats = {}
    assign_fast(index, np.random.default_rng(1).standard_normal(65), stats)
    assert stats["coordinate_passes"] == 3


def test_errors():
    _, C, index = make("An", 3)
    with pytest.raises(DegenerateInputError):
        assign_fast(index, np.zeros(4))
    with pytest.raises(ShapeError):
        assign_fast(index, np.ones(3))
    with pytest.raises(InvalidKError):
        assign_topk(index, np.ones(4), 0)
    cfg = build_configuration("An", 3)
    with pytest.raises(InconsistentProvenanceError):
        build_index(cfg, CenterMatrix(cfg.vectors[::-1].copy()))


def test_topk_order_and_scores():
    _, C, index = make("An", 3)
    z = np.array([3.0, 1.0, 0.0, -2.0])
    top = assign_topk(index, z, 3)
    # e0-e3 (5), then e0-e2 / e1-e3 tie at 3 -> lowest class first
    assert top[0] == 2
    scores = class_scores(index, z)
    np.testing.assert_array_equal(scores, (C.centers @ z) / C.norms)
    assert scores[top[1]] == scores[top[2]] and top[1] < top[2]
