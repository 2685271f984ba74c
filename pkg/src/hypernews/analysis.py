"""Experiment runners: evaluation, hyperedge-type ablation, label-fraction
sweeps, the clique-expansion baseline, and user credibility analysis."""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .attention import AttentionSnapshot, ModelParams, forward, predict
from .baseline import BaselineDriver, init_baseline_params
from .data import Dataset, downsample_train_labels
from .errors import ValidationError
from .hypergraph import (
    KIND_USER,
    KINDS,
    Hypergraph,
    build_hypergraph,
    clique_expansion,
)
from .metrics import Metrics, metrics_from_predictions
from .training import TrainConfig, fit, train

# Ablation rows run full combination first, then pairs, then single types.
ABLATION_SUBSETS: tuple[tuple[str, ...], ...] = (
    ("user", "time", "entity"),
    ("user", "time"),
    ("user", "entity"),
    ("time", "entity"),
    ("user",),
    ("time",),
    ("entity",),
)


def evaluate(params: ModelParams, dataset: Dataset, hg: Hypergraph,
             split: str = "test", batch_size: int = 128) -> Metrics:
    """Deterministic forward pass scored against a split's labels."""
    idx = dataset.split_indices(split)
    if idx.size == 0:
        raise ValidationError(f"split {split!r} is empty")
    labels = dataset.labels[idx]
    if np.any(labels < 0):
        raise ValidationError(f"split {split!r} contains unlabeled items")
    logits, _ = forward(params, dataset, hg, batch_size=batch_size)
    pred, _ = predict(logits[idx])
    return metrics_from_predictions(labels, pred)


def _mean_std(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std(ddof=1)) if arr.size > 1 else 0.0


@dataclass(frozen=True)
class SummaryRow:
    label: str
    accuracies: tuple[float, ...]
    f1_scores: tuple[float, ...]

    @property
    def mean_accuracy(self) -> float:
        return _mean_std(list(self.accuracies))[0]

    @property
    def std_accuracy(self) -> float:
        return _mean_std(list(self.accuracies))[1]

    @property
    def mean_f1(self) -> float:
        return _mean_std(list(self.f1_scores))[0]

    @property
    def std_f1(self) -> float:
        return _mean_std(list(self.f1_scores))[1]


def ablate_hyperedge_types(
    config: TrainConfig,
    dataset: Dataset,
    seeds,
    time_granularity: str = "day",
) -> list[SummaryRow]:
    """Train one model per non-empty hyperedge-kind subset per seed."""
    seeds = list(seeds)
    if not seeds:
        raise ValidationError("ablation needs at least one seed")
    rows = []
    for subset in ABLATION_SUBSETS:
        hg = build_hypergraph(dataset, kinds=subset, time_granularity=time_granularity)
        accs, f1s = [], []
        for seed in seeds:
            _, report = train(replace(config, seed=seed), dataset, hg)
            accs.append(report.test_metrics.accuracy)
            f1s.append(report.test_metrics.f1_macro)
        rows.append(
            SummaryRow(label="+".join(subset), accuracies=tuple(accs), f1_scores=tuple(f1s))
        )
    return rows


def sweep_label_fraction(
    config: TrainConfig,
    dataset: Dataset,
    fractions,
    seeds,
    time_granularity: str = "day",
) -> list[SummaryRow]:
    """Downsample training labels, rebuild the hypergraph, retrain, evaluate."""
    seeds = list(seeds)
    if not seeds:
        raise ValidationError("sweep needs at least one seed")
    rows = []
    for fraction in fractions:
        accs, f1s = [], []
        for seed in seeds:
            ds = downsample_train_labels(dataset, fraction, seed)
            hg = build_hypergraph(ds, kinds=KINDS, time_granularity=time_granularity)
            _, report = train(replace(config, seed=seed), ds, hg)
            accs.append(report.test_metrics.accuracy)
            f1s.append(report.test_metrics.f1_macro)
        rows.append(
            SummaryRow(
                label=f"{fraction:g}", accuracies=tuple(accs), f1_scores=tuple(f1s)
            )
        )
    return rows


def baseline_clique_gnn(config: TrainConfig, dataset: Dataset, hg: Hypergraph) -> Metrics:
    """Train the mean-aggregation GNN on the clique-expanded graph."""
    config.validate()
    graph = clique_expansion(hg)
    params = init_baseline_params(
        np.random.default_rng(config.seed),
        feature_dim=dataset.feature_dim,
        hidden_dim=config.hidden_dim,
        dtype=config.dtype,
    )
    driver = BaselineDriver(params, dataset, graph, config.dropout)
    report = fit(driver, config, dataset.labels, dataset.splits)
    return report.test_metrics


# ---------------------------------------------------------------------------
# Credibility analysis
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CredibilityRecord:
    user_key: str
    credibility: float  # fraction of true-labeled news among labeled members
    n_news: int
    mean_beta: float    # mean final-layer incident attention over members


def credibility_table(
    dataset: Dataset, hg: Hypergraph, snapshot: AttentionSnapshot
) -> list[CredibilityRecord]:
    """One record per User hyperedge; members without labels are excluded
    from the credibility ratio."""
    user_edges = [e for e in hg.hyperedges if e.kind == KIND_USER]
    if not user_edges:
        raise ValidationError("hypergraph has no User hyperedges")
    final = snapshot.final
    beta_sum = np.zeros(hg.n_hyperedges, dtype=np.float64)
    beta_cnt = np.zeros(hg.n_hyperedges, dtype=np.int64)
    np.add.at(beta_sum, final.beta_edges, final.beta.astype(np.float64))
    np.add.at(beta_cnt, final.beta_edges, 1)

    labels = dataset.labels
    records = []
    for edge in user_edges:
        members = np.asarray(edge.members, dtype=np.int64)
        labeled = labels[members] >= 0
        if not labeled.any():
            continue
        cred = float(labels[members][labeled].sum() / labeled.sum())
        mean_beta = float(beta_sum[edge.id] / beta_cnt[edge.id]) if beta_cnt[edge.id] else 0.0
        records.append(
            CredibilityRecord(
                user_key=edge.key,
                credibility=cred,
                n_news=len(edge.members),
                mean_beta=mean_beta,
            )
        )
    return records


@dataclass(frozen=True)
class SamplingRow:
    ratio: float
    n_sampled: int
    top_high_pct: float     # credibility > 0.9 among top-attention hyperedges
    top_low_pct: float      # credibility < 0.1 among top-attention hyperedges
    bottom_high_pct: float
    bottom_low_pct: float


def attention_user_sampling(records, ratios) -> list[SamplingRow]:
    """Rank User hyperedges by mean attention and report how many of the top
    and bottom slices have extreme credibility (> 0.9 / < 0.1)."""
    records = list(records)
    if not records:
        raise ValidationError("no credibility records to sample")
    by_top = sorted(records, key=lambda r: (-r.mean_beta, r.user_key))
    by_bottom = sorted(records, key=lambda r: (r.mean_beta, r.user_key))

    def pct(sample, predicate) -> float:
        return 100.0 * sum(predicate(r) for r in sample) / len(sample)

    rows = []
    for ratio in ratios:
        if not 0 < ratio < 1:
            raise ValidationError(f"sampling ratio must be in (0, 1), got {ratio}")
        k = max(1, int(ratio * len(records)))
        top, bottom = by_top[:k], by_bottom[:k]
        rows.append(
            SamplingRow(
                ratio=ratio,
                n_sampled=k,
                top_high_pct=pct(top, lambda r: r.credibility > 0.9),
                top_low_pct=pct(top, lambda r: r.credibility < 0.1),
                bottom_high_pct=pct(bottom, lambda r: r.credibility > 0.9),
                bottom_low_pct=pct(bottom, lambda r: r.credibility < 0.1),
            )
        )
    return rows


# ---------------------------------------------------------------------------
# Table emission
# ---------------------------------------------------------------------------

def write_csv(path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def format_table(header: list[str], rows) -> str:
    """Aligned text rendering of a small table."""
    cells = [[str(c) for c in row] for row in rows]
    widths = [
        max(len(header[i]), *(len(r[i]) for r in cells)) if cells else len(header[i])
        for i in range(len(header))
    ]
    lines = [
        "  ".join(h.ljust(w) for h, w in zip(header, widths)),
        "  ".join("-" * w for w in widths),
    ]
    lines.extend("  ".join(c.ljust(w) for c, w in zip(row, widths)) for row in cells)
    return "\n".join(lines)


def summary_rows_for_output(rows: list[SummaryRow]) -> list[list]:
    return [
        [r.label, f"{r.mean_accuracy:.4f}", f"{r.std_accuracy:.4f}",
         f"{r.mean_f1:.4f}", f"{r.std_f1:.4f}", len(r.accuracies)]
        for r in rows
    ]


SUMMARY_HEADER = ["label", "mean_accuracy", "std_accuracy", "mean_f1", "std_f1", "n_seeds"]
