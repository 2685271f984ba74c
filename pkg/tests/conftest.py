"""Shared builders for small random fixtures."""
import numpy as np
import pytest

from hypernews.data import Dataset, NewsItem, PropagationTree, Splits, TreeNode
from hypernews.hypergraph import Hyperedge, Hypergraph


def make_tree(rng: np.random.Generator, news_id: int, feature_dim: int,
              n_nodes: int | None = None, users=None) -> PropagationTree:
    if n_nodes is None:
        n_nodes = int(rng.integers(1, 5))
    if users is None:
        users = [f"u{news_id}_{j}" for j in range(n_nodes)]
    ts = [1_600_000_000 + int(rng.integers(0, 86_400))]
    edges = []
    for j in range(1, n_nodes):
        parent = int(rng.integers(0, j))
        edges.append((parent, j))
        ts.append(ts[parent] + int(rng.integers(0, 3600)))
    nodes = tuple(TreeNode(idx=j, user=users[j % len(users)], timestamp=ts[j])
                  for j in range(n_nodes))
    features = rng.standard_normal((n_nodes, feature_dim)).astype(np.float32)
    return PropagationTree(news_id=news_id, nodes=nodes, edges=tuple(edges),
                           features=features)


def make_dataset(rng: np.random.Generator, n_items: int, feature_dim: int = 3,
                 entities=None) -> Dataset:
    items = []
    trees = []
    for i in range(n_items):
        feature = rng.standard_normal(feature_dim).astype(np.float32)
        items.append(NewsItem(
            id=i, feature=feature, label=int(rng.integers(0, 2)),
            entities=frozenset(entities[i]) if entities else frozenset(),
        ))
        trees.append(make_tree(rng, i, feature_dim))
    return Dataset(
        items=tuple(items),
        trees=tuple(trees),
        splits=Splits(
            train=np.arange(n_items, dtype=np.int64),
            val=np.zeros(0, dtype=np.int64),
            test=np.zeros(0, dtype=np.int64),
        ),
        feature_dim=feature_dim,
    )


def make_random_hypergraph(rng: np.random.Generator, n_nodes: int, n_edges: int,
                           allow_singletons: bool = False) -> Hypergraph:
    kinds = ("user", "time", "entity")
    edges = []
    for j in range(n_edges):
        low = 1 if allow_singletons else 2
        size = int(rng.integers(low, max(low + 1, n_nodes + 1)))
        members = tuple(sorted(rng.choice(n_nodes, size=min(size, n_nodes), replace=False)))
        edges.append(Hyperedge(id=j, kind=kinds[j % 3], key=f"k{j}", members=members))
    return Hypergraph.from_hyperedges(n_nodes, edges)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
