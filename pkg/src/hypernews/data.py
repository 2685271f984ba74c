"""Dataset model, on-disk formats, splits, label downsampling, synthetic data.

A dataset directory holds:

* ``features.bin``        news feature matrix (see :mod:`hypernews.matrixio`)
* ``trees.jsonl``         one JSON record per propagation tree
* ``trees.features.bin``  node features for all trees, stacked
* ``trees.manifest.csv``  ``news_id,idx`` per feature row, aligned with the matrix
* ``labels.csv``          ``news_id,label`` with label in {0 (fake), 1 (true)}
* ``splits.csv``          ``news_id,split`` with split in {train, val, test}
* ``entities.csv``        optional ``news_id,entity`` annotation pairs
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import DataFormatError, IntegrityError, StratificationError, ValidationError
from .matrixio import read_matrix, write_matrix

LABEL_FAKE = 0
LABEL_TRUE = 1

FEATURES_FILE = "features.bin"
TREES_FILE = "trees.jsonl"
LABELS_FILE = "labels.csv"
SPLITS_FILE = "splits.csv"
ENTITIES_FILE = "entities.csv"


@dataclass(frozen=True, eq=False)
class NewsItem:
    id: int
    feature: np.ndarray
    label: int | None
    entities: frozenset[str] = frozenset()


@dataclass(frozen=True, eq=False)
class TreeNode:
    idx: int
    user: str
    timestamp: int


@dataclass(frozen=True, eq=False)
class PropagationTree:
    """Rooted engagement cascade of one news piece; node 0 is the root post."""

    news_id: int
    nodes: tuple[TreeNode, ...]
    edges: tuple[tuple[int, int], ...]   # (parent, child)
    features: np.ndarray                 # (len(nodes), F)

    def validate(self, feature_dim: int) -> None:
        n = len(self.nodes)
        if n == 0:
            raise ValidationError(f"tree {self.news_id}: no nodes")
        if [node.idx for node in self.nodes] != list(range(n)):
            raise ValidationError(f"tree {self.news_id}: node indices must be 0..{n - 1}")
        if len(self.edges) != n - 1:
            raise ValidationError(
                f"tree {self.news_id}: expected {n - 1} edges, got {len(self.edges)}"
            )
        if self.features.shape != (n, feature_dim):
            raise ValidationError(
                f"tree {self.news_id}: feature shape {self.features.shape}, "
                f"expected {(n, feature_dim)}"
            )
        parent = [-1] * n
        for p, c in self.edges:
            if not (0 <= p < n and 0 < c < n):
                raise ValidationError(f"tree {self.news_id}: edge ({p},{c}) out of range")
            if parent[c] != -1:
                raise ValidationError(f"tree {self.news_id}: node {c} has two parents")
            parent[c] = p
        if any(parent[c] == -1 for c in range(1, n)):
            raise ValidationError(f"tree {self.news_id}: detached non-root node")
        # Reachability from the root guarantees acyclicity together with the
        # single-parent property.
        seen = [False] * n
        seen[0] = True
        stack = [0]
        children: list[list[int]] = [[] for _ in range(n)]
        for p, c in self.edges:
            children[p].append(c)
        while stack:
            u = stack.pop()
            for c in children[u]:
                if seen[c]:
                    raise ValidationError(f"tree {self.news_id}: cycle through node {c}")
                seen[c] = True
                stack.append(c)
        if not all(seen):
            raise ValidationError(f"tree {self.news_id}: not connected to the root")
        for p, c in self.edges:
            if self.nodes[c].timestamp < self.nodes[p].timestamp:
                raise ValidationError(
                    f"tree {self.news_id}: node {c} earlier than its parent"
                )
        for node in self.nodes:
            if not node.user:
                raise ValidationError(f"tree {self.news_id}: node {node.idx} has no user id")


@dataclass(frozen=True, eq=False)
class Splits:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def as_dict(self) -> dict[str, np.ndarray]:
        return {"train": self.train, "val": self.val, "test": self.test}


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable container for items, trees, and split assignments."""

    items: tuple[NewsItem, ...]
    trees: tuple[PropagationTree, ...]
    splits: Splits
    feature_dim: int

    def __post_init__(self):
        validate_dataset(self)

    @property
    def n_items(self) -> int:
        return len(self.items)

    @cached_property
    def features(self) -> np.ndarray:
        m = np.stack([item.feature for item in self.items]).astype(np.float32)
        m.setflags(write=False)
        return m

    @cached_property
    def labels(self) -> np.ndarray:
        """Label per item; -1 marks an unlabeled item."""
        arr = np.array(
            [item.label if item.label is not None else -1 for item in self.items],
            dtype=np.int64,
        )
        arr.setflags(write=False)
        return arr

    def split_indices(self, name: str) -> np.ndarray:
        try:
            return self.splits.as_dict()[name]
        except KeyError:
            raise ValidationError(f"unknown split {name!r}") from None


def validate_dataset(ds: Dataset) -> None:
    n = len(ds.items)
    if ds.feature_dim <= 0:
        raise ValidationError("feature_dim must be positive")
    for i, item in enumerate(ds.items):
        if item.id != i:
            raise ValidationError(f"item {i} has id {item.id}; ids must be 0..N-1")
        if item.feature.shape != (ds.feature_dim,):
            raise ValidationError(
                f"item {i}: feature length {item.feature.shape}, expected {ds.feature_dim}"
            )
        if item.label is not None and item.label not in (LABEL_FAKE, LABEL_TRUE):
            raise ValidationError(f"item {i}: label must be 0 or 1, got {item.label}")
    if len(ds.trees) != n:
        raise IntegrityError(f"{n} items but {len(ds.trees)} trees; every item needs a tree")
    for i, tree in enumerate(ds.trees):
        if tree.news_id != i:
            raise IntegrityError(f"tree at position {i} has news_id {tree.news_id}")
        tree.validate(ds.feature_dim)

    labeled = {i for i, item in enumerate(ds.items) if item.label is not None}
    seen: set[int] = set()
    for name, idx in ds.splits.as_dict().items():
        idx_set = set(int(i) for i in idx)
        if not idx_set <= set(range(n)):
            raise ValidationError(f"split {name!r} references unknown news ids")
        overlap = seen & idx_set
        if overlap:
            raise ValidationError(f"split overlap on news ids {sorted(overlap)[:5]}")
        seen |= idx_set
    for name in ("train", "val"):
        for i in ds.splits.as_dict()[name]:
            if int(i) not in labeled:
                raise ValidationError(f"{name} item {int(i)} has no label")
    if not labeled <= seen:
        raise ValidationError("labeled items missing from all splits")


# ---------------------------------------------------------------------------
# Loading and writing
# ---------------------------------------------------------------------------

def tree_sibling_paths(trees_path: str | Path) -> tuple[Path, Path]:
    """Feature matrix and manifest paths that accompany a trees file."""
    base = Path(trees_path)
    stem = base.name[: -len(base.suffix)] if base.suffix else base.name
    return base.with_name(stem + ".features.bin"), base.with_name(stem + ".manifest.csv")


def _read_csv_rows(path: Path, expected_header: list[str]) -> list[list[str]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != expected_header:
        raise DataFormatError(f"{path}: expected header {','.join(expected_header)}")
    return rows[1:]


def load_dataset(
    features_path: str | Path,
    trees_path: str | Path,
    labels_path: str | Path,
    splits_path: str | Path,
    entities_path: str | Path | None = None,
) -> Dataset:
    """Load a dataset from its component files (see the module docstring)."""
    features = read_matrix(features_path)
    n, feature_dim = features.shape
    features.setflags(write=False)

    labels: dict[int, int] = {}
    for row in _read_csv_rows(Path(labels_path), ["news_id", "label"]):
        news_id, label = int(row[0]), int(row[1])
        if not 0 <= news_id < n:
            raise IntegrityError(f"labels reference unknown news id {news_id}")
        labels[news_id] = label

    split_of: dict[int, str] = {}
    for row in _read_csv_rows(Path(splits_path), ["news_id", "split"]):
        news_id, split = int(row[0]), row[1]
        if split not in ("train", "val", "test"):
            raise DataFormatError(f"unknown split tag {split!r}")
        if not 0 <= news_id < n:
            raise IntegrityError(f"splits reference unknown news id {news_id}")
        if news_id in split_of:
            raise ValidationError(f"news id {news_id} assigned to two splits")
        split_of[news_id] = split

    entities: dict[int, set[str]] = {i: set() for i in range(n)}
    if entities_path is not None and Path(entities_path).exists():
        for row in _read_csv_rows(Path(entities_path), ["news_id", "entity"]):
            news_id = int(row[0])
            if not 0 <= news_id < n:
                raise IntegrityError(f"entities reference unknown news id {news_id}")
            entities[news_id].add(row[1])

    trees = _load_trees(Path(trees_path), n, feature_dim)

    items = tuple(
        NewsItem(
            id=i,
            feature=features[i],
            label=labels.get(i),
            entities=frozenset(entities[i]),
        )
        for i in range(n)
    )
    splits = Splits(
        *(
            np.array(sorted(i for i, s in split_of.items() if s == name), dtype=np.int64)
            for name in ("train", "val", "test")
        )
    )
    return Dataset(items=items, trees=trees, splits=splits, feature_dim=feature_dim)


def _load_trees(trees_path: Path, n: int, feature_dim: int) -> tuple[PropagationTree, ...]:
    feat_path, manifest_path = tree_sibling_paths(trees_path)
    node_features = read_matrix(feat_path)
    if node_features.shape[0] and node_features.shape[1] != feature_dim:
        raise IntegrityError(
            f"tree features have width {node_features.shape[1]}, news features {feature_dim}"
        )
    row_of: dict[tuple[int, int], int] = {}
    for r, row in enumerate(_read_csv_rows(manifest_path, ["news_id", "idx"])):
        key = (int(row[0]), int(row[1]))
        if key in row_of:
            raise IntegrityError(f"duplicate manifest entry for (news {key[0]}, node {key[1]})")
        row_of[key] = r
    if len(row_of) != node_features.shape[0]:
        raise IntegrityError("tree feature matrix and manifest row counts differ")

    records: dict[int, dict] = {}
    with open(trees_path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"{trees_path}:{line_no}: bad JSON ({exc})") from exc
            news_id = int(rec["news_id"])
            if not 0 <= news_id < n:
                raise IntegrityError(f"tree references unknown news id {news_id}")
            if news_id in records:
                raise IntegrityError(f"two trees for news id {news_id}")
            records[news_id] = rec
    missing = set(range(n)) - set(records)
    if missing:
        raise IntegrityError(
            f"{len(missing)} news items have no propagation tree "
            f"(first missing id {min(missing)})"
        )

    trees = []
    for news_id in range(n):
        rec = records[news_id]
        nodes = tuple(
            TreeNode(idx=int(d["idx"]), user=str(d["user"]), timestamp=int(d["ts"]))
            for d in sorted(rec["nodes"], key=lambda d: int(d["idx"]))
        )
        try:
            rows = [row_of[(news_id, node.idx)] for node in nodes]
        except KeyError as exc:
            raise IntegrityError(f"tree {news_id}: node feature row missing {exc}") from exc
        feats = node_features[rows].copy()
        feats.setflags(write=False)
        trees.append(
            PropagationTree(
                news_id=news_id,
                nodes=nodes,
                edges=tuple((int(p), int(c)) for p, c in rec["edges"]),
                features=feats,
            )
        )
    return tuple(trees)


def load_dataset_dir(directory: str | Path) -> Dataset:
    d = Path(directory)
    return load_dataset(
        d / FEATURES_FILE,
        d / TREES_FILE,
        d / LABELS_FILE,
        d / SPLITS_FILE,
        entities_path=d / ENTITIES_FILE,
    )


def write_dataset(ds: Dataset, directory: str | Path) -> None:
    """Write all dataset files into `directory` (created if needed)."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_matrix(d / FEATURES_FILE, ds.features)

    trees_path = d / TREES_FILE
    feat_path, manifest_path = tree_sibling_paths(trees_path)
    manifest_rows = []
    blocks = []
    with open(trees_path, "w") as fh:
        for tree in ds.trees:
            rec = {
                "news_id": tree.news_id,
                "nodes": [
                    {"idx": node.idx, "user": node.user, "ts": node.timestamp}
                    for node in tree.nodes
                ],
                "edges": [[p, c] for p, c in tree.edges],
            }
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")
            for node in tree.nodes:
                manifest_rows.append([tree.news_id, node.idx])
            blocks.append(tree.features)
    write_matrix(feat_path, np.concatenate(blocks, axis=0))
    _write_csv(manifest_path, ["news_id", "idx"], manifest_rows)

    _write_csv(
        d / LABELS_FILE,
        ["news_id", "label"],
        [[item.id, item.label] for item in ds.items if item.label is not None],
    )
    split_rows = []
    for name, idx in ds.splits.as_dict().items():
        split_rows.extend([int(i), name] for i in idx)
    split_rows.sort(key=lambda r: r[0])
    _write_csv(d / SPLITS_FILE, ["news_id", "split"], split_rows)
    entity_rows = [
        [item.id, e] for item in ds.items for e in sorted(item.entities)
    ]
    _write_csv(d / ENTITIES_FILE, ["news_id", "entity"], entity_rows)


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


# ---------------------------------------------------------------------------
# Splitting and downsampling
# ---------------------------------------------------------------------------

def _per_class_counts(total: int, class_sizes: dict[int, int], n_labeled: int) -> dict[int, int]:
    """Apportion `total` slots across label classes, each within +-1 of its share."""
    counts = {}
    labels_sorted = sorted(class_sizes)
    assigned = 0
    for label in labels_sorted[:-1]:
        share = total * class_sizes[label] / n_labeled
        c = int(math.floor(share + 0.5))
        c = max(0, min(c, class_sizes[label]))
        counts[label] = c
        assigned += c
    counts[labels_sorted[-1]] = total - assigned
    return counts


def make_splits(ds: Dataset, fractions: tuple[float, float, float], seed: int) -> Dataset:
    """Re-split labeled items into train/val/test, stratified per label class.

    Sizes are floor(fraction * N) for train and val with the remainder going
    to test; each split's class mix matches the global mix within one item.
    """
    f_train, f_val, f_test = fractions
    if min(f_train, f_val, f_test) <= 0:
        raise ValidationError("all split fractions must be positive")
    if abs(f_train + f_val + f_test - 1.0) > 1e-9:
        raise ValidationError("split fractions must sum to 1")

    labeled = [i for i, item in enumerate(ds.items) if item.label is not None]
    n = len(labeled)
    if n < 3:
        raise ValidationError(f"dataset too small to split: {n} labeled items")

    n_train = int(f_train * n)
    n_val = int(f_val * n)

    by_class: dict[int, list[int]] = {}
    for i in labeled:
        by_class.setdefault(ds.items[i].label, []).append(i)
    class_sizes = {c: len(v) for c, v in by_class.items()}

    train_c = _per_class_counts(n_train, class_sizes, n)
    val_c = _per_class_counts(n_val, class_sizes, n)

    rng = np.random.default_rng(seed)
    train, val, test = [], [], []
    for label in sorted(by_class):
        idx = np.array(by_class[label], dtype=np.int64)
        rng.shuffle(idx)
        a, b = train_c[label], train_c[label] + val_c[label]
        if b > len(idx):
            raise StratificationError(f"class {label} too small for requested fractions")
        train.extend(idx[:a])
        val.extend(idx[a:b])
        test.extend(idx[b:])
    splits = Splits(
        train=np.array(sorted(train), dtype=np.int64),
        val=np.array(sorted(val), dtype=np.int64),
        test=np.array(sorted(test), dtype=np.int64),
    )
    return replace(ds, splits=splits)


def downsample_train_labels(ds: Dataset, keep_fraction: float, seed: int) -> Dataset:
    """Keep a stratified fraction of training items; drop the rest entirely.

    Removed items disappear from the dataset (features, trees, annotations),
    so no later hypergraph can reference them. Val and test sets keep the same
    items under renumbered ids. Selections are nested: under one seed the kept
    set for a smaller fraction is a subset of the kept set for a larger one.
    """
    if not 0 < keep_fraction <= 1:
        raise ValidationError(f"keep_fraction must be in (0, 1], got {keep_fraction}")
    if keep_fraction == 1.0:
        return ds

    train = [int(i) for i in ds.splits.train]
    by_class: dict[int, list[int]] = {}
    for i in train:
        by_class.setdefault(ds.items[i].label, []).append(i)
    k_total = int(math.ceil(keep_fraction * len(train)))
    class_sizes = {c: len(v) for c, v in by_class.items()}
    k_per_class = _per_class_counts(k_total, class_sizes, len(train))
    if any(k <= 0 for k in k_per_class.values()):
        raise StratificationError(
            f"keep_fraction {keep_fraction} would empty a training class"
        )

    rng = np.random.default_rng(seed)
    kept: set[int] = set()
    for label in sorted(by_class):
        idx = np.array(by_class[label], dtype=np.int64)
        rng.shuffle(idx)
        # Prefix selection makes kept sets nested across fractions.
        kept.update(int(i) for i in idx[: k_per_class[label]])

    removed = set(train) - kept
    survivors = [i for i in range(ds.n_items) if i not in removed]
    new_id = {old: new for new, old in enumerate(survivors)}

    items = tuple(
        replace(ds.items[old], id=new_id[old]) for old in survivors
    )
    trees = tuple(
        replace(ds.trees[old], news_id=new_id[old]) for old in survivors
    )

    def remap(indices: np.ndarray) -> np.ndarray:
        return np.array(
            sorted(new_id[int(i)] for i in indices if int(i) in new_id), dtype=np.int64
        )

    splits = Splits(
        train=remap(np.array(sorted(kept), dtype=np.int64)),
        val=remap(ds.splits.val),
        test=remap(ds.splits.test),
    )
    return Dataset(items=items, trees=trees, splits=splits, feature_dim=ds.feature_dim)


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticConfig:
    """Desk-scale generator with credibility planted at the user level."""

    n_news: int = 200
    n_users: int = 40
    fake_fraction: float = 0.5
    user_fidelity: float = 0.95
    feature_dim: int = 32
    signal_strength: float = 1.0
    noise_scale: float = 0.45
    seed: int = 0

    def validate(self) -> None:
        if self.n_news <= 0 or self.n_users <= 0 or self.feature_dim <= 0:
            raise ValidationError("counts must be positive")
        if not 0 < self.fake_fraction < 1:
            raise ValidationError("fake_fraction must be in (0, 1)")
        if not 0.5 <= self.user_fidelity <= 1:
            raise ValidationError("user_fidelity must be in [0.5, 1]")
        if self.signal_strength < 0:
            raise ValidationError("signal_strength must be >= 0")
        if self.noise_scale <= 0:
            raise ValidationError("noise_scale must be > 0")


# Time and entity groupings are label-independent by construction. Their
# buckets are kept large so they act as smoothing, not as per-node identifiers
# a model could memorise.
_SYNTH_ENTITY_POOL = 8
_SYNTH_TIME_WINDOW = 2 * 86400   # root posts spread over two days
_SYNTH_EPOCH = 1_577_836_800     # 2020-01-01T00:00:00Z


def generate_synthetic(config: SyntheticConfig) -> Dataset:
    """Generate a dataset whose User hyperedges carry the planted label signal.

    Each user leans fake or true; a news piece's sharers match its label with
    probability ``user_fidelity``. News features are class means separated by
    ``signal_strength`` plus Gaussian noise; tree node features are per-user
    vectors with no label information, so structure is what separates the
    classes when the feature signal is weak.
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    n, f = config.n_news, config.feature_dim

    n_fake = min(max(int(round(config.fake_fraction * n)), 1), n - 1)
    labels = np.array([LABEL_FAKE] * n_fake + [LABEL_TRUE] * (n - n_fake), dtype=np.int64)
    rng.shuffle(labels)

    user_ids = [f"u{k:04d}" for k in range(config.n_users)]
    user_class = np.array(
        [LABEL_FAKE] * (config.n_users // 2)
        + [LABEL_TRUE] * (config.n_users - config.n_users // 2),
        dtype=np.int64,
    )
    rng.shuffle(user_class)
    class_pools = {
        LABEL_FAKE: np.flatnonzero(user_class == LABEL_FAKE),
        LABEL_TRUE: np.flatnonzero(user_class == LABEL_TRUE),
    }
    user_vecs = config.noise_scale * rng.standard_normal((config.n_users, f))

    direction = rng.standard_normal(f)
    direction /= np.linalg.norm(direction)
    offset = 0.5 * config.signal_strength * direction

    items = []
    trees = []
    for i in range(n):
        label = int(labels[i])
        feature = (offset if label == LABEL_TRUE else -offset) + (
            config.noise_scale * rng.standard_normal(f)
        )

        k = int(rng.integers(3, 7))
        sharers = set()
        for _ in range(k):
            pool = class_pools[
                label if rng.random() < config.user_fidelity else 1 - label
            ]
            sharers.add(int(pool[rng.integers(len(pool))]))
        sharer_list = sorted(sharers)

        n_nodes = int(rng.integers(2, 31))
        node_users = [sharer_list[int(rng.integers(len(sharer_list)))] for _ in range(n_nodes)]
        timestamps = [_SYNTH_EPOCH + int(rng.integers(0, _SYNTH_TIME_WINDOW))]
        edges = []
        for j in range(1, n_nodes):
            parent = int(rng.integers(0, j))
            edges.append((parent, j))
            timestamps.append(timestamps[parent] + int(rng.integers(60, 3601)))
        nodes = tuple(
            TreeNode(idx=j, user=user_ids[node_users[j]], timestamp=timestamps[j])
            for j in range(n_nodes)
        )
        node_feats = np.empty((n_nodes, f), dtype=np.float64)
        node_feats[0] = feature
        for j in range(1, n_nodes):
            node_feats[j] = user_vecs[node_users[j]] + config.noise_scale * rng.standard_normal(f)

        n_entities = int(rng.integers(1, 3))
        entity_picks = rng.choice(_SYNTH_ENTITY_POOL, size=n_entities, replace=False)
        entities = frozenset(f"entity{int(e):02d}" for e in entity_picks)

        feat32 = feature.astype(np.float32)
        feat32.setflags(write=False)
        nf32 = node_feats.astype(np.float32)
        nf32.setflags(write=False)
        items.append(NewsItem(id=i, feature=feat32, label=label, entities=entities))
        trees.append(
            PropagationTree(news_id=i, nodes=nodes, edges=tuple(edges), features=nf32)
        )

    ds = Dataset(
        items=tuple(items),
        trees=tuple(trees),
        splits=Splits(
            train=np.arange(n, dtype=np.int64),
            val=np.zeros(0, dtype=np.int64),
            test=np.zeros(0, dtype=np.int64),
        ),
        feature_dim=f,
    )
    return make_splits(ds, (0.2, 0.1, 0.7), config.seed)
