"""Hypergraph construction: User/Time/Entity hyperedges, concatenation,
clique expansion, statistics, and a plain-text serialization.

Nodes are news items; a hyperedge groups every news piece that shares a user,
a time bucket, or an entity. Candidate hyperedges with fewer than two members
are dropped: they add nothing to message passing and inflate the edge count.
"""
from __future__ import annotations

import logging
import re
import warnings
from dataclasses import dataclass
from datetime import datetime, timezone
from functools import cached_property
from pathlib import Path

import numpy as np

from .data import Dataset
from .errors import DataFormatError, ValidationError

logger = logging.getLogger(__name__)

KIND_USER = "user"
KIND_TIME = "time"
KIND_ENTITY = "entity"
KINDS = (KIND_USER, KIND_TIME, KIND_ENTITY)


@dataclass(frozen=True)
class Hyperedge:
    id: int
    kind: str
    key: str
    members: tuple[int, ...]  # sorted, unique node ids


@dataclass(frozen=True, eq=False)
class Hypergraph:
    """Incidence structure with both edge-side and node-side index arrays."""

    n_nodes: int
    hyperedges: tuple[Hyperedge, ...]

    @classmethod
    def from_hyperedges(cls, n_nodes: int, hyperedges) -> "Hypergraph":
        edges = []
        for j, e in enumerate(hyperedges):
            members = tuple(sorted(set(int(m) for m in e.members)))
            if members and (members[0] < 0 or members[-1] >= n_nodes):
                raise ValidationError(
                    f"hyperedge {e.key!r} member out of range [0, {n_nodes})"
                )
            edges.append(Hyperedge(id=j, kind=e.kind, key=e.key, members=members))
        return cls(n_nodes=n_nodes, hyperedges=tuple(edges))

    @property
    def n_hyperedges(self) -> int:
        return len(self.hyperedges)

    # Edge-sorted pair arrays: pair p is (member_edges[p], member_nodes[p]),
    # grouped contiguously per hyperedge.
    @cached_property
    def member_offsets(self) -> np.ndarray:
        sizes = np.array([len(e.members) for e in self.hyperedges], dtype=np.int64)
        offsets = np.zeros(self.n_hyperedges + 1, dtype=np.int64)
        np.cumsum(sizes, out=offsets[1:])
        return offsets

    @cached_property
    def member_nodes(self) -> np.ndarray:
        if not self.hyperedges:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate([np.asarray(e.members, dtype=np.int64) for e in self.hyperedges])

    @cached_property
    def member_edges(self) -> np.ndarray:
        return np.repeat(
            np.arange(self.n_hyperedges, dtype=np.int64), np.diff(self.member_offsets)
        )

    # Node-sorted pair arrays: same incidence pairs grouped per node.
    @cached_property
    def _node_order(self) -> np.ndarray:
        return np.argsort(self.member_nodes, kind="stable")

    @cached_property
    def incident_nodes(self) -> np.ndarray:
        return self.member_nodes[self._node_order]

    @cached_property
    def incident_edges(self) -> np.ndarray:
        return self.member_edges[self._node_order]

    @cached_property
    def incident_offsets(self) -> np.ndarray:
        counts = np.bincount(self.member_nodes, minlength=self.n_nodes)
        offsets = np.zeros(self.n_nodes + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])
        return offsets

    @cached_property
    def node_degrees(self) -> np.ndarray:
        return np.diff(self.incident_offsets)

    def incident_edge_ids(self, node: int) -> np.ndarray:
        lo, hi = self.incident_offsets[node], self.incident_offsets[node + 1]
        return self.incident_edges[lo:hi]

    def dense_incidence(self) -> np.ndarray:
        """N x M 0/1 matrix; intended for small graphs and tests."""
        h = np.zeros((self.n_nodes, self.n_hyperedges), dtype=np.int8)
        h[self.member_nodes, self.member_edges] = 1
        return h


@dataclass(frozen=True, eq=False)
class PlainGraph:
    n_nodes: int
    edges: tuple[tuple[int, int], ...]  # unordered pairs stored as u < v


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------

def _grouped_hyperedges(kind: str, groups: dict[str, set[int]]) -> list[Hyperedge]:
    out = []
    for key in sorted(groups):
        members = tuple(sorted(groups[key]))
        if len(members) < 2:
            continue  # singletons contribute nothing to aggregation
        out.append(Hyperedge(id=len(out), kind=kind, key=key, members=members))
    return out


def build_user_hyperedges(dataset: Dataset) -> list[Hyperedge]:
    """One hyperedge per user id appearing in two or more trees (root included)."""
    groups: dict[str, set[int]] = {}
    for tree in dataset.trees:
        for node in tree.nodes:
            groups.setdefault(node.user, set()).add(tree.news_id)
    return _grouped_hyperedges(KIND_USER, groups)


def time_bucket(timestamp: int, granularity: str) -> str:
    """Floor an epoch timestamp to its UTC day or hour bucket token."""
    dt = datetime.fromtimestamp(int(timestamp), tz=timezone.utc)
    if granularity == "day":
        return dt.strftime("%Y-%m-%d")
    if granularity == "hour":
        return dt.strftime("%Y-%m-%dT%H")
    raise ValidationError(f"granularity must be 'day' or 'hour', got {granularity!r}")


def default_time_granularity(n_items: int) -> str:
    """Day buckets for small corpora, hour buckets for large ones."""
    return "day" if n_items < 1000 else "hour"


def build_time_hyperedges(dataset: Dataset, granularity: str = "day") -> list[Hyperedge]:
    """One hyperedge per time bucket containing engagements of >= 2 news."""
    groups: dict[str, set[int]] = {}
    for tree in dataset.trees:
        for node in tree.nodes:
            groups.setdefault(time_bucket(node.timestamp, granularity), set()).add(tree.news_id)
    return _grouped_hyperedges(KIND_TIME, groups)


def normalize_entity(text: str) -> str:
    return " ".join(text.split()).casefold()


def build_entity_hyperedges(dataset: Dataset) -> list[Hyperedge]:
    """One hyperedge per normalized entity annotated on >= 2 news."""
    groups: dict[str, set[int]] = {}
    for item in dataset.items:
        for raw in item.entities:
            key = normalize_entity(raw)
            if key:
                groups.setdefault(key, set()).add(item.id)
    return _grouped_hyperedges(KIND_ENTITY, groups)


_ENTITY_STOPWORDS = frozenset(
    "the a an and or but if then else when i you he she it we they this that".split()
)


def fallback_entities(text: str) -> set[str]:
    """Crude extractor for corpora without annotations: maximal runs of
    capitalized tokens, excluding a small stopword list."""
    entities = set()
    run: list[str] = []
    for token in re.findall(r"[A-Za-z][\w'\-]*", text):
        if token[0].isupper() and token.lower() not in _ENTITY_STOPWORDS:
            run.append(token)
        else:
            if run:
                entities.add(" ".join(run))
            run = []
    if run:
        entities.add(" ".join(run))
    return entities


def build_hyperedges(
    dataset: Dataset,
    kinds=KINDS,
    time_granularity: str = "day",
) -> list[list[Hyperedge]]:
    """Build the requested hyperedge families in canonical user/time/entity order."""
    builders = {
        KIND_USER: lambda: build_user_hyperedges(dataset),
        KIND_TIME: lambda: build_time_hyperedges(dataset, time_granularity),
        KIND_ENTITY: lambda: build_entity_hyperedges(dataset),
    }
    unknown = [k for k in kinds if k not in builders]
    if unknown:
        raise ValidationError(f"unknown hyperedge kinds {unknown}")
    return [builders[k]() for k in KINDS if k in kinds]


def concat_hypergraphs(parts: list[list[Hyperedge]], n_nodes: int) -> Hypergraph:
    """Concatenate hyperedge families into one incidence structure.

    Ids are reassigned in part order; duplicate member sets across kinds stay
    distinct columns.
    """
    merged: list[Hyperedge] = []
    for part in parts:
        merged.extend(part)
    hg = Hypergraph.from_hyperedges(n_nodes, merged)
    if hg.n_hyperedges == 0:
        warnings.warn("hypergraph has no hyperedges", RuntimeWarning, stacklevel=2)
    else:
        isolated = int((hg.node_degrees == 0).sum())
        if isolated:
            logger.warning(
                "%d of %d nodes are isolated and will rely on the classifier bias only",
                isolated,
                n_nodes,
            )
    return hg


def build_hypergraph(
    dataset: Dataset,
    kinds=KINDS,
    time_granularity: str = "day",
) -> Hypergraph:
    return concat_hypergraphs(
        build_hyperedges(dataset, kinds, time_granularity), dataset.n_items
    )


# ---------------------------------------------------------------------------
# Clique expansion and statistics
# ---------------------------------------------------------------------------

def clique_expansion(hg: Hypergraph) -> PlainGraph:
    """Replace every hyperedge by a clique over its members, deduplicated."""
    pairs: set[tuple[int, int]] = set()
    for edge in hg.hyperedges:
        members = edge.members
        for a in range(len(members)):
            for b in range(a + 1, len(members)):
                pairs.add((members[a], members[b]))
    return PlainGraph(n_nodes=hg.n_nodes, edges=tuple(sorted(pairs)))


@dataclass(frozen=True)
class KindStats:
    kind: str
    n_hyperedges: int
    mean_size: float
    max_size: int
    mean_degree: float  # over nodes with at least one incident edge of this kind
    max_degree: int


def hypergraph_stats(hg: Hypergraph) -> list[KindStats]:
    """Per-kind and overall counts, sizes, and node degrees."""
    rows = []
    present_kinds = [k for k in KINDS if any(e.kind == k for e in hg.hyperedges)]
    for kind in present_kinds + ["all"]:
        edges = [e for e in hg.hyperedges if kind == "all" or e.kind == kind]
        sizes = np.array([len(e.members) for e in edges], dtype=np.int64)
        degrees = np.zeros(hg.n_nodes, dtype=np.int64)
        for e in edges:
            degrees[list(e.members)] += 1
        engaged = degrees[degrees > 0]
        rows.append(
            KindStats(
                kind=kind,
                n_hyperedges=len(edges),
                mean_size=float(sizes.mean()) if sizes.size else 0.0,
                max_size=int(sizes.max()) if sizes.size else 0,
                mean_degree=float(engaged.mean()) if engaged.size else 0.0,
                max_degree=int(degrees.max()) if degrees.size else 0,
            )
        )
    return rows


# ---------------------------------------------------------------------------
# Serialization: header "HG v1 N M", then "id kind key member,member,..."
# ---------------------------------------------------------------------------

def save_hypergraph(hg: Hypergraph, path: str | Path) -> None:
    with open(path, "w") as fh:
        fh.write(f"HG v1 {hg.n_nodes} {hg.n_hyperedges}\n")
        for e in hg.hyperedges:
            members = ",".join(str(m) for m in e.members)
            fh.write(f"{e.id} {e.kind} {e.key} {members}\n")


def load_hypergraph(path: str | Path) -> Hypergraph:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise DataFormatError(f"{path}: empty hypergraph file")
    header = lines[0].split()
    if len(header) != 4 or header[0] != "HG" or header[1] != "v1":
        raise DataFormatError(f"{path}: bad header {lines[0]!r}")
    n_nodes, n_edges = int(header[2]), int(header[3])
    if len(lines) - 1 != n_edges:
        raise DataFormatError(
            f"{path}: header promises {n_edges} hyperedges, file has {len(lines) - 1}"
        )
    edges = []
    for line in lines[1:]:
        head, _, members_tok = line.rpartition(" ")
        parts = head.split(" ", 2)
        if len(parts) != 3:
            raise DataFormatError(f"{path}: bad hyperedge line {line!r}")
        edge_id, kind, key = int(parts[0]), parts[1], parts[2]
        if kind not in KINDS:
            raise DataFormatError(f"{path}: unknown kind {kind!r}")
        members = tuple(int(m) for m in members_tok.split(",") if m != "")
        edges.append(Hyperedge(id=edge_id, kind=kind, key=key, members=members))
    return Hypergraph.from_hyperedges(n_nodes, edges)
