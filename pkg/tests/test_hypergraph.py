from datetime import datetime, timezone

import numpy as np
import pytest

from hypernews.data import Dataset, NewsItem, PropagationTree, Splits, TreeNode
from hypernews.errors import DataFormatError, ValidationError
from hypernews.hypergraph import (
    Hyperedge,
    Hypergraph,
    build_entity_hyperedges,
    build_time_hyperedges,
    build_user_hyperedges,
    clique_expansion,
    concat_hypergraphs,
    default_time_granularity,
    fallback_entities,
    hypergraph_stats,
    load_hypergraph,
    save_hypergraph,
)

from conftest import make_dataset, make_random_hypergraph, make_tree


def dataset_with_trees(rng, specs, feature_dim=3, entities=None):
    """specs: per item, list of (user, timestamp) tuples for a path tree."""
    items, trees = [], []
    for i, nodes in enumerate(specs):
        items.append(NewsItem(
            id=i,
            feature=rng.standard_normal(feature_dim).astype(np.float32),
            label=int(rng.integers(0, 2)),
            entities=frozenset(entities[i]) if entities else frozenset(),
        ))
        tree_nodes = tuple(
            TreeNode(idx=j, user=user, timestamp=ts) for j, (user, ts) in enumerate(nodes)
        )
        edges = tuple((j - 1, j) for j in range(1, len(nodes)))
        trees.append(PropagationTree(
            news_id=i, nodes=tree_nodes, edges=edges,
            features=rng.standard_normal((len(nodes), feature_dim)).astype(np.float32),
        ))
    n = len(items)
    return Dataset(
        items=tuple(items), trees=tuple(trees),
        splits=Splits(np.arange(n, dtype=np.int64), np.zeros(0, np.int64), np.zeros(0, np.int64)),
        feature_dim=feature_dim,
    )


def ts(spec: str) -> int:
    return int(datetime.fromisoformat(spec).replace(tzinfo=timezone.utc).timestamp())


class TestUserHyperedges:
    def test_shared_user_groups_news(self, rng):
        # One user engages news 3, 4, and 5; everyone else is unique.
        specs = [[(f"solo{i}", 1000 + i)] for i in range(6)]
        for i in (3, 4, 5):
            specs[i].append(("busy", 2000 + i))
        ds = dataset_with_trees(rng, specs)
        edges = build_user_hyperedges(ds)
        assert len(edges) == 1
        assert edges[0].key == "busy"
        assert edges[0].members == (3, 4, 5)

    def test_no_cosharing_yields_empty(self, rng):
        ds = dataset_with_trees(rng, [[(f"only{i}", 10)] for i in range(4)])
        assert build_user_hyperedges(ds) == []

    def test_root_user_counts(self, rng):
        # The root posters co-share; engagement users are all unique.
        specs = [[("poster", 10), (f"x{i}", 20)] for i in range(2)]
        ds = dataset_with_trees(rng, specs)
        edges = build_user_hyperedges(ds)
        assert [e.members for e in edges] == [(0, 1)]

    def test_deterministic_key_order(self, rng):
        specs = [[("zeta", 1), ("alpha", 2)], [("zeta", 3), ("alpha", 4)]]
        ds = dataset_with_trees(rng, specs)
        assert [e.key for e in build_user_hyperedges(ds)] == ["alpha", "zeta"]


class TestTimeHyperedges:
    def test_same_day_different_hours(self, rng):
        early = ts("2020-01-01T03:00:00")
        late = ts("2020-01-01T21:00:00")
        ds = dataset_with_trees(rng, [[("a", early)], [("b", late)]])
        day_edges = build_time_hyperedges(ds, "day")
        assert len(day_edges) == 1
        assert day_edges[0].members == (0, 1)
        assert day_edges[0].key == "2020-01-01"
        assert build_time_hyperedges(ds, "hour") == []

    def test_same_second_single_bucket(self, rng):
        t = ts("2021-06-15T12:30:00")
        ds = dataset_with_trees(rng, [[("a", t)], [("b", t)], [("c", t)]])
        for granularity in ("day", "hour"):
            edges = build_time_hyperedges(ds, granularity)
            assert len(edges) == 1
            assert edges[0].members == (0, 1, 2)

    def test_utc_flooring_not_rounding(self, rng):
        # 23:59 stays in its own day even though midnight is nearer.
        almost_midnight = ts("2020-03-01T23:59:00")
        next_day = ts("2020-03-02T00:01:00")
        ds = dataset_with_trees(rng, [[("a", almost_midnight)], [("b", next_day)]])
        assert build_time_hyperedges(ds, "day") == []

    def test_bad_granularity(self, rng):
        ds = dataset_with_trees(rng, [[("a", 1)], [("b", 1)]])
        with pytest.raises(ValidationError):
            build_time_hyperedges(ds, "week")

    def test_default_granularity_by_size(self):
        assert default_time_granularity(314) == "day"
        assert default_time_granularity(5464) == "hour"


class TestEntityHyperedges:
    def test_shared_entity(self, rng):
        ds = dataset_with_trees(
            rng, [[("a", 1)], [("b", 2)], [("c", 3)]],
            entities=[{"COVID-19"}, {"COVID-19"}, {"Election"}],
        )
        edges = build_entity_hyperedges(ds)
        assert len(edges) == 1
        assert edges[0].key == "covid-19"
        assert edges[0].members == (0, 1)

    def test_no_annotations(self, rng):
        ds = dataset_with_trees(rng, [[("a", 1)], [("b", 2)]])
        assert build_entity_hyperedges(ds) == []

    def test_case_fold_and_whitespace(self, rng):
        ds = dataset_with_trees(
            rng, [[("a", 1)], [("b", 2)]],
            entities=[{"covid-19"}, {"COVID-19"}],
        )
        edges = build_entity_hyperedges(ds)
        assert len(edges) == 1 and edges[0].members == (0, 1)
        ds2 = dataset_with_trees(
            rng, [[("a", 1)], [("b", 2)]],
            entities=[{"New  York"}, {"new york"}],
        )
        assert len(build_entity_hyperedges(ds2)) == 1


def test_fallback_entities():
    text = "The White House met Joe Biden in Washington yesterday, but they left."
    got = fallback_entities(text)
    assert "White House" in got
    assert "Joe Biden" in got
    assert "Washington" in got
    assert not any(e.lower() == "the" for e in got)


class TestConcat:
    def test_table_scale_counts(self):
        # Part sizes mirroring a real corpus: 2,953 + 1,717 + 1,040 = 5,710.
        def part(kind, count):
            return [
                Hyperedge(id=i, kind=kind, key=f"{kind}{i}", members=(i, i + 1))
                for i in range(count)
            ]
        parts = [part("user", 2953), part("time", 1717), part("entity", 1040)]
        hg = concat_hypergraphs(parts, n_nodes=3000)
        assert hg.n_hyperedges == 5710
        assert [e.id for e in hg.hyperedges] == list(range(5710))
        kinds = [e.kind for e in hg.hyperedges]
        assert kinds[:2953] == ["user"] * 2953
        assert kinds[2953:4670] == ["time"] * 1717

    def test_empty_concat_warns(self):
        with pytest.warns(RuntimeWarning, match="no hyperedges"):
            hg = concat_hypergraphs([[], [], []], n_nodes=4)
        assert hg.n_hyperedges == 0

    def test_duplicate_member_sets_kept(self):
        parts = [
            [Hyperedge(id=0, kind="user", key="u", members=(1, 2))],
            [Hyperedge(id=0, kind="time", key="t", members=(1, 2))],
        ]
        hg = concat_hypergraphs(parts, n_nodes=3)
        assert hg.n_hyperedges == 2
        assert hg.hyperedges[0].members == hg.hyperedges[1].members

    def test_out_of_range_member(self):
        part = [Hyperedge(id=0, kind="user", key="u", members=(0, 9))]
        with pytest.raises(ValidationError, match="out of range"):
            concat_hypergraphs([part], n_nodes=3)

    def test_membership_count_preserved(self, rng):
        parts = []
        total = 0
        for kind in ("user", "time", "entity"):
            part = []
            for j in range(int(rng.integers(1, 5))):
                size = int(rng.integers(2, 6))
                members = tuple(sorted(rng.choice(10, size=size, replace=False)))
                part.append(Hyperedge(id=j, kind=kind, key=f"{kind}{j}", members=members))
                total += size
            parts.append(part)
        hg = concat_hypergraphs(parts, n_nodes=10)
        assert int(hg.member_offsets[-1]) == total


class TestIncidenceConsistency:
    def test_pair_arrays_are_transposes(self, rng):
        for trial in range(20):
            hg = make_random_hypergraph(rng, int(rng.integers(2, 9)),
                                        int(rng.integers(0, 6)), allow_singletons=True)
            pairs_edge_side = set(zip(hg.member_edges.tolist(), hg.member_nodes.tolist()))
            pairs_node_side = set(zip(hg.incident_edges.tolist(), hg.incident_nodes.tolist()))
            assert pairs_edge_side == pairs_node_side
            dense = hg.dense_incidence()
            for i in range(hg.n_nodes):
                for j in range(hg.n_hyperedges):
                    member = i in hg.hyperedges[j].members
                    assert dense[i, j] == int(member)
                    assert (j in hg.incident_edge_ids(i).tolist()) == member


class TestCliqueExpansion:
    def test_triangle_from_single_hyperedge(self):
        hg = Hypergraph.from_hyperedges(
            6, [Hyperedge(id=0, kind="user", key="u", members=(3, 4, 5))]
        )
        graph = clique_expansion(hg)
        assert set(graph.edges) == {(3, 4), (3, 5), (4, 5)}

    def test_pair_hyperedge(self):
        hg = Hypergraph.from_hyperedges(
            3, [Hyperedge(id=0, kind="user", key="u", members=(0, 2))]
        )
        assert clique_expansion(hg).edges == ((0, 2),)

    def test_matches_all_pairs_scan(self, rng):
        for _ in range(100):
            hg = make_random_hypergraph(rng, 12, 6, allow_singletons=True)
            got = set(clique_expansion(hg).edges)
            expected = set()
            for u in range(12):
                for v in range(u + 1, 12):
                    for e in hg.hyperedges:
                        if u in e.members and v in e.members:
                            expected.add((u, v))
                            break
            assert got == expected

    def test_invariant_under_reordering_and_singletons(self, rng):
        hg = make_random_hypergraph(rng, 8, 5)
        base = clique_expansion(hg).edges
        reordered = Hypergraph.from_hyperedges(8, list(reversed(hg.hyperedges)))
        assert clique_expansion(reordered).edges == base
        with_singletons = Hypergraph.from_hyperedges(
            8,
            list(hg.hyperedges)
            + [Hyperedge(id=99, kind="user", key="s", members=(3,))],
        )
        assert clique_expansion(with_singletons).edges == base


class TestStats:
    def test_single_hyperedge(self):
        hg = Hypergraph.from_hyperedges(
            3, [Hyperedge(id=0, kind="user", key="u", members=(0, 1, 2))]
        )
        rows = {r.kind: r for r in hypergraph_stats(hg)}
        assert rows["user"].n_hyperedges == 1
        assert rows["user"].mean_size == 3.0
        assert rows["user"].mean_degree == 1.0
        assert rows["all"].max_degree == 1

    def test_empty(self):
        hg = Hypergraph.from_hyperedges(4, [])
        rows = hypergraph_stats(hg)
        assert len(rows) == 1 and rows[0].kind == "all"
        assert rows[0].n_hyperedges == 0
        assert rows[0].mean_size == 0.0
        assert rows[0].max_degree == 0

    def test_degree_counts_only_engaged_nodes(self):
        hg = Hypergraph.from_hyperedges(
            10, [Hyperedge(id=0, kind="user", key="u", members=(0, 1))]
        )
        rows = {r.kind: r for r in hypergraph_stats(hg)}
        assert rows["user"].mean_degree == 1.0  # nodes 2..9 excluded


class TestSerialization:
    def test_round_trip(self, tmp_path, rng):
        hg = make_random_hypergraph(rng, 9, 5)
        path = tmp_path / "graph.hg"
        save_hypergraph(hg, path)
        loaded = load_hypergraph(path)
        assert loaded.n_nodes == hg.n_nodes
        assert loaded.hyperedges == hg.hyperedges
        path2 = tmp_path / "again.hg"
        save_hypergraph(loaded, path2)
        assert path.read_bytes() == path2.read_bytes()

    def test_key_with_spaces(self, tmp_path):
        hg = Hypergraph.from_hyperedges(
            4, [Hyperedge(id=0, kind="entity", key="new york city", members=(0, 3))]
        )
        path = tmp_path / "g.hg"
        save_hypergraph(hg, path)
        loaded = load_hypergraph(path)
        assert loaded.hyperedges[0].key == "new york city"
        assert loaded.hyperedges[0].members == (0, 3)

    def test_deterministic_bytes_from_same_dataset(self, tmp_path, rng):
        from hypernews.hypergraph import build_hypergraph
        ds = make_dataset(rng, 15)
        a, b = tmp_path / "a.hg", tmp_path / "b.hg"
        save_hypergraph(build_hypergraph(ds), a)
        save_hypergraph(build_hypergraph(ds), b)
        assert a.read_bytes() == b.read_bytes()

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.hg"
        path.write_text("XX v9 1 1\n")
        with pytest.raises(DataFormatError):
            load_hypergraph(path)

    def test_count_mismatch(self, tmp_path):
        path = tmp_path / "bad.hg"
        path.write_text("HG v1 3 2\n0 user u 0,1\n")
        with pytest.raises(DataFormatError, match="promises"):
            load_hypergraph(path)
