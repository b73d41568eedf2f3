from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bubbletree.bubble_tree import (BubbleEdge, BubbleTree, BubbleVertex, GhostLawViolated, TreeConfig,
                                    TreeInvariantViolated, build_tree, check_tree, dumps, fmt_real,
                                    mass_accounting, parse, same_tree, serialize, thick_thin, vanishing)
from bubbletree.errors import ConfigError
from bubbletree.families import FamilySpec, generate
from bubbletree.grid_metric import disk

FOUR_PI = 4.0 * np.pi


def sphere_edge(parent, child, x=0.0):
    return BubbleEdge(parent, child, (x, 0.0), FOUR_PI, FOUR_PI, 0.0, True)


def two_bubble_tree(root_kind="ghost"):
    vs = [BubbleVertex(0, root_kind, root_kind == "ghost", 0.0, 0.0),
          BubbleVertex(1, "bubble", False, FOUR_PI, FOUR_PI, "sphere_minus_infty", 1),
          BubbleVertex(2, "bubble", False, FOUR_PI, FOUR_PI, "sphere_minus_infty", 1)]
    return BubbleTree(vs, [sphere_edge(0, 1, 1.0), sphere_edge(0, 2, 2.0)], 0, (2 * FOUR_PI, 2 * FOUR_PI))


@pytest.fixture(scope="module")
def flat_seq():
    return generate(FamilySpec("flat", n_values=(1, 2, 3), chart=disk((0, 0), 1.0, 128)))


class TestFlat:
    def test_single_base_vertex(self, flat_seq):
        tree = build_tree(flat_seq)
        assert len(tree.vertices) == 1 and not tree.edges
        root = tree.vertex(tree.root)
        assert root.kind == "base" and not root.vanished
        assert root.area == pytest.approx(np.pi, rel=1e-4)

    def test_accounting_is_exact(self, flat_seq):
        acc = mass_accounting(build_tree(flat_seq), flat_seq)
        assert acc["area_identity"]["pass"] and acc["conservation"]["pass"]
        assert abs(acc["area_identity"]["residual"]) < 1e-12

    def test_thick_thin(self, flat_seq):
        tt = thick_thin(build_tree(flat_seq), flat_seq, 0.5)
        assert (tt.n_thick, tt.n_thin) == (1, 0)

    def test_not_vanishing(self, flat_seq):
        vanished, last, slope = vanishing(flat_seq, [], 3, -8.0, -0.5)
        assert not vanished and last == 0.0 and slope == pytest.approx(0.0, abs=1e-12)


class TestCheckTree:
    def test_valid(self):
        check_tree(two_bubble_tree())

    def test_ghost_law(self):
        t = two_bubble_tree()
        # a ghost below the root with a single child
        t.vertices[1] = BubbleVertex(1, "ghost", True, 0.0, 0.0, "sphere_minus_infty", 1)
        t.vertices.append(BubbleVertex(3, "bubble", False, FOUR_PI, FOUR_PI, "sphere_minus_infty", 2))
        t.edges.append(sphere_edge(1, 3))
        t.totals = (4 * FOUR_PI, 4 * FOUR_PI)
        with pytest.raises(GhostLawViolated):
            check_tree(t)

    def test_truncated_ghost_is_allowed(self):
        t = two_bubble_tree()
        t.vertices[1] = BubbleVertex(1, "ghost", True, 0.0, 0.0, "sphere_minus_infty", 1, truncated=True)
        check_tree(t)

    @pytest.mark.parametrize("breakage", ["cycle", "small_edge", "masses", "kind", "root"])
    def test_violations(self, breakage):
        t = two_bubble_tree()
        if breakage == "cycle":
            t.edges[1] = sphere_edge(1, 1)
        elif breakage == "small_edge":
            t.edges[0].area_mass = 1.0
        elif breakage == "masses":
            t.totals = (FOUR_PI, FOUR_PI)
        elif breakage == "kind":
            t.vertices[0].vanished = False
        else:
            t.root = 7
        with pytest.raises(TreeInvariantViolated):
            check_tree(t)


class TestSerialization:
    def test_reals_round_trip(self):
        for x in (0.1, 1 / 3, np.pi, 1e-300, 2.0):
            assert float(fmt_real(x)) == x
        assert fmt_real(2.0) == "2.0"

    def test_non_finite(self):
        with pytest.raises(ValueError):
            fmt_real(np.nan)

    def test_dumps_is_json(self):
        doc = {"a": [1.0, 2], "b": {"c": True, "d": None}, "e": []}
        assert json.loads(dumps(doc)) == doc

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.tuples(st.floats(-5, 5), st.floats(0, 50), st.floats(0, 50), st.booleans()),
                    min_size=0, max_size=5))
    def test_round_trip(self, children):
        vs = [BubbleVertex(0, "base", False, 1.0, 2.0)]
        es = []
        for k, (x, a, e, eff) in enumerate(children, start=1):
            vs.append(BubbleVertex(k, "bubble", False, a, e, "sphere_minus_infty", 1))
            es.append(BubbleEdge(0, k, (x, -x), a + 1, e + 1, a / 7, eff))
        tree = BubbleTree(vs, es, 0, (100.0, 100.0))
        text = serialize(tree)
        back = parse(text)
        assert same_tree(tree, back)
        assert serialize(back) == text

    def test_parse_rejects_unknown_kind(self):
        doc = json.loads(serialize(two_bubble_tree()))
        doc["vertices"][1]["kind"] = "neck"
        with pytest.raises(ConfigError):
            parse(json.dumps(doc))

    def test_parse_rejects_missing_field(self):
        doc = json.loads(serialize(two_bubble_tree()))
        del doc["edges"][0]["point"]
        with pytest.raises(ConfigError):
            parse(json.dumps(doc))


def test_tree_config_rejects_depth():
    with pytest.raises(ConfigError):
        TreeConfig(max_depth=0)


def test_edge_floor():
    assert TreeConfig().edge_floor == pytest.approx(4 * np.pi**2 * 0.75**2)
