"""Loss, Adam optimization, the transductive training loop, checkpoints, and
the finite-difference gradient oracle.

Training runs full-graph every epoch: one forward with dropout, one exact
backward, one Adam step. Only training-split labels enter the loss, so the
parameter trajectory is independent of validation/test labels; those labels
feed early stopping and reporting only. Every epoch's parameters are hashed
into the report, which makes determinism and leakage checks one-line asserts.
"""
from __future__ import annotations

import hashlib
import struct
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .attention import (
    AttentionSnapshot,
    ModelParams,
    _forward_cached,
    backward_from_cache,
    clone_params,
    forward,
    init_model_params,
    named_tensors,
    params_from_named,
    predict,
)
from .data import Dataset, Splits, generate_synthetic, SyntheticConfig
from .encoder import build_tree_chunks
from .errors import CheckpointError, TrainingDiverged, ValidationError
from .hypergraph import Hypergraph, Hyperedge
from .kernels import row_softmax
from .metrics import Metrics, metrics_from_predictions

PRECISIONS = {"f32": np.float32, "f64": np.float64}
PROB_CLAMP = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    hidden_dim: int = 128
    batch_size: int = 128
    learning_rate: float = 1e-3
    dropout: float = 0.3
    max_epochs: int = 200
    patience: int = 20
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    precision: str = "f32"

    def validate(self) -> None:
        if self.hidden_dim <= 0 or self.batch_size <= 0 or self.max_epochs <= 0:
            raise ValidationError("hidden_dim, batch_size, max_epochs must be positive")
        if self.patience <= 0:
            raise ValidationError("patience must be positive")
        if not 0 <= self.dropout < 1:
            raise ValidationError("dropout must be in [0, 1)")
        if self.learning_rate < 0 or self.eps <= 0:
            raise ValidationError("learning_rate must be >= 0 and eps > 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValidationError("Adam betas must be in [0, 1)")
        if self.precision not in PRECISIONS:
            raise ValidationError(f"precision must be one of {sorted(PRECISIONS)}")

    @property
    def dtype(self):
        return PRECISIONS[self.precision]

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        """Parse a line-oriented ``key = value`` config file ('#' comments)."""
        values: dict[str, str] = {}
        for line_no, raw in enumerate(Path(path).read_text().splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"{path}:{line_no}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            values[key] = value
        kwargs = {}
        for name in cls.__dataclass_fields__:
            if name in values:
                kwargs[name] = _parse_field(name, values.pop(name))
        if values:
            raise ValidationError(f"unknown config keys: {sorted(values)}")
        config = cls(**kwargs)
        config.validate()
        return config


_INT_FIELDS = {"hidden_dim", "batch_size", "max_epochs", "patience", "seed"}
_FLOAT_FIELDS = {"learning_rate", "dropout", "beta1", "beta2", "eps"}


def _parse_field(name: str, raw: str):
    if name in _INT_FIELDS:
        return int(raw)
    if name in _FLOAT_FIELDS:
        return float(raw)
    return raw


# ---------------------------------------------------------------------------
# Loss
# ---------------------------------------------------------------------------

def loss(logits: np.ndarray, labels: np.ndarray, train_idx: np.ndarray) -> float:
    """Mean binary cross-entropy of softmax probabilities over `train_idx`."""
    idx = np.asarray(train_idx, dtype=np.int64)
    if idx.size == 0:
        raise ValidationError("loss needs a non-empty index set")
    y = np.asarray(labels)[idx]
    if np.any(y < 0):
        raise ValidationError("loss indices include unlabeled items")
    probs = row_softmax(logits[idx].astype(np.float64))
    p_true = np.clip(probs[:, 1], PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(-np.mean(y * np.log(p_true) + (1 - y) * np.log(1.0 - p_true)))


def loss_grad(logits: np.ndarray, labels: np.ndarray, train_idx: np.ndarray) -> np.ndarray:
    """d(loss)/d(logits): (softmax - onehot) / n on train rows, zero elsewhere."""
    idx = np.asarray(train_idx, dtype=np.int64)
    if idx.size == 0:
        raise ValidationError("loss needs a non-empty index set")
    g = np.zeros_like(logits)
    probs = row_softmax(logits[idx])
    onehot = np.zeros_like(probs)
    onehot[np.arange(idx.size), np.asarray(labels)[idx]] = 1
    g[idx] = (probs - onehot) / logits.dtype.type(idx.size)
    return g


def backward(
    params: ModelParams,
    dataset: Dataset,
    hg: Hypergraph,
    train_idx: np.ndarray,
    batch_size: int = 128,
) -> dict[str, np.ndarray]:
    """Gradients of the training loss w.r.t. every parameter (dropout off)."""
    logits, _, cache = _forward_cached(params, dataset, hg, batch_size=batch_size)
    grads = backward_from_cache(params, hg, cache, loss_grad(logits, dataset.labels, train_idx))
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingDiverged(f"non-finite gradient in {name}")
    return grads


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

class Adam:
    """Standard Adam with bias correction; updates tensors in place."""

    def __init__(self, named: dict[str, np.ndarray], lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in named.items()}
        self.v = {k: np.zeros_like(v) for k, v in named.items()}

    def step(self, named: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for key, p in named.items():
            g = grads[key]
            m = self.m[key]
            v = self.v[key]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            p -= (self.lr / b1c) * m / (np.sqrt(v / b2c) + self.eps)


# ---------------------------------------------------------------------------
# Training loop (shared by the hypergraph model and the clique baseline)
# ---------------------------------------------------------------------------

@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    val_accuracy: float
    val_f1: float


@dataclass
class TrainReport:
    epochs: list[EpochStats] = field(default_factory=list)
    best_epoch: int = 0
    test_metrics: Metrics | None = None
    wall_clock_seconds: float = 0.0
    snapshot: AttentionSnapshot | None = None
    param_digests: list[str] = field(default_factory=list)

    @property
    def final_train_loss(self) -> float:
        return self.epochs[-1].train_loss if self.epochs else float("nan")


def _digest(named: dict[str, np.ndarray]) -> str:
    h = hashlib.sha256()
    for key in sorted(named):
        h.update(key.encode())
        h.update(np.ascontiguousarray(named[key]).tobytes())
    return h.hexdigest()


def _split_metrics(logits, labels, idx) -> tuple[float, float, float]:
    pred, _ = predict(logits[idx])
    m = metrics_from_predictions(np.asarray(labels)[idx], pred)
    return loss(logits, labels, idx), m.accuracy, m.f1_macro


def fit(driver, config: TrainConfig, labels: np.ndarray, splits: Splits):
    """Generic early-stopped Adam loop over a transductive model driver.

    The driver supplies ``params`` (named tensors), ``forward_train(rng)``,
    ``forward_eval()`` returning (logits, snapshot-or-None), and
    ``backward(cache, g_logits)``.
    """
    config.validate()
    train_idx, val_idx = splits.train, splits.val
    if train_idx.size == 0 or val_idx.size == 0:
        raise ValidationError("training requires non-empty train and val splits")
    started = time.perf_counter()
    rng = np.random.default_rng(config.seed)
    named = driver.named
    optimizer = Adam(named, config.learning_rate, config.beta1, config.beta2, config.eps)
    report = TrainReport()
    best = None  # (acc, -val_loss) maximized
    best_params = None
    since_best = 0

    for epoch in range(1, config.max_epochs + 1):
        logits, cache = driver.forward_train(rng)
        train_loss = loss(logits, labels, train_idx)
        if not np.isfinite(train_loss):
            raise TrainingDiverged(f"loss became non-finite at epoch {epoch}")
        grads = driver.backward(cache, loss_grad(logits, labels, train_idx))
        optimizer.step(named, grads)
        report.param_digests.append(_digest(named))

        eval_logits, _ = driver.forward_eval()
        val_loss, val_acc, val_f1 = _split_metrics(eval_logits, labels, val_idx)
        report.epochs.append(
            EpochStats(epoch=epoch, train_loss=train_loss, val_loss=val_loss,
                       val_accuracy=val_acc, val_f1=val_f1)
        )
        score = (val_acc, -val_loss)
        if best is None or score > best:
            best = score
            best_params = {k: v.copy() for k, v in named.items()}
            report.best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                break

    for key, value in best_params.items():
        named[key][...] = value
    eval_logits, snapshot = driver.forward_eval()
    report.snapshot = snapshot
    if splits.test.size:
        pred, _ = predict(eval_logits[splits.test])
        report.test_metrics = metrics_from_predictions(
            np.asarray(labels)[splits.test], pred
        )
    report.wall_clock_seconds = time.perf_counter() - started
    return report


class _HypergraphDriver:
    def __init__(self, params: ModelParams, dataset: Dataset, hg: Hypergraph,
                 config: TrainConfig):
        self.params = params
        self.dataset = dataset
        self.hg = hg
        self.config = config
        self.chunks = build_tree_chunks(dataset.trees, config.batch_size)
        self.named = named_tensors(params)
        self._cache = None

    def forward_train(self, rng):
        logits, _, cache = _forward_cached(
            self.params, self.dataset, self.hg, train_mode=True, rng=rng,
            dropout=self.config.dropout, tree_chunks=self.chunks,
        )
        return logits, cache

    def backward(self, cache, g_logits):
        return backward_from_cache(self.params, self.hg, cache, g_logits)

    def forward_eval(self):
        logits, snapshot, _ = _forward_cached(
            self.params, self.dataset, self.hg, tree_chunks=self.chunks
        )
        return logits, snapshot


def train(config: TrainConfig, dataset: Dataset, hg: Hypergraph) -> tuple[ModelParams, TrainReport]:
    """Train the hypergraph attention model; returns best-validation params."""
    config.validate()
    params = init_model_params(
        np.random.default_rng(config.seed),
        feature_dim=dataset.feature_dim,
        hidden_dim=config.hidden_dim,
        dtype=config.dtype,
    )
    driver = _HypergraphDriver(params, dataset, hg, config)
    report = fit(driver, config, dataset.labels, dataset.splits)
    return params, report


# ---------------------------------------------------------------------------
# Checkpoints: magic HGCK, u32 version, u32 dtype size, u32 tensor count,
# then per tensor: u32 name length, name bytes, u32 rank, u32 dims, payload.
# ---------------------------------------------------------------------------

CHECKPOINT_MAGIC = b"HGCK"
CHECKPOINT_VERSION = 1
_DTYPE_CODES = {4: "<f4", 8: "<f8"}


def save_checkpoint(params: ModelParams, path) -> None:
    named = named_tensors(params)
    itemsize = params.dtype.itemsize
    if itemsize not in _DTYPE_CODES:
        raise CheckpointError(f"unsupported parameter dtype {params.dtype}")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<III", CHECKPOINT_VERSION, itemsize, len(named)))
        for name, tensor in named.items():
            encoded = name.encode()
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", tensor.ndim))
            fh.write(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
            fh.write(np.ascontiguousarray(tensor, dtype=_DTYPE_CODES[itemsize]).tobytes())


def load_checkpoint(path, hidden_dim: int | None = None,
                    feature_dim: int | None = None) -> ModelParams:
    """Load a checkpoint, optionally enforcing expected model dimensions."""
    data = Path(path).read_bytes()
    view = memoryview(data)
    pos = 0

    def take(n: int) -> memoryview:
        nonlocal pos
        if pos + n > len(data):
            raise CheckpointError(f"{path}: truncated checkpoint")
        out = view[pos : pos + n]
        pos += n
        return out

    if bytes(take(4)) != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: bad checkpoint magic")
    version, itemsize, count = struct.unpack("<III", take(12))
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    if itemsize not in _DTYPE_CODES:
        raise CheckpointError(f"{path}: unsupported dtype size {itemsize}")
    named: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4))
        name = bytes(take(name_len)).decode()
        (rank,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{rank}I", take(4 * rank))
        n_items = int(np.prod(shape, dtype=np.int64)) if rank else 1
        payload = take(n_items * itemsize)
        named[name] = np.frombuffer(payload, dtype=_DTYPE_CODES[itemsize]).reshape(shape).copy()
    if pos != len(data):
        raise CheckpointError(f"{path}: trailing bytes after tensor table")
    try:
        params = params_from_named(named)
    except KeyError as exc:
        raise CheckpointError(f"{path}: missing tensor {exc}") from exc
    if hidden_dim is not None and params.hidden_dim != hidden_dim:
        raise CheckpointError(
            f"{path}: checkpoint hidden_dim {params.hidden_dim} != expected {hidden_dim}"
        )
    if feature_dim is not None and params.feature_dim != feature_dim:
        raise CheckpointError(
            f"{path}: checkpoint feature_dim {params.feature_dim} != expected {feature_dim}"
        )
    return params


# ---------------------------------------------------------------------------
# Finite-difference gradient oracle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GradCheckReport:
    max_rel_error: dict[str, float]
    tolerance: float

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values())

    @property
    def offenders(self) -> list[str]:
        return [k for k, v in self.max_rel_error.items() if v > self.tolerance]

    @property
    def passed(self) -> bool:
        return not self.offenders


def grad_check(
    params: ModelParams,
    dataset: Dataset,
    hg: Hypergraph,
    tolerance: float = 1e-4,
    step: float = 1e-5,
    small_limit: int = 128,
    n_sampled: int = 50,
    analytic: dict[str, np.ndarray] | None = None,
) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    Every entry of tensors with at most `small_limit` elements is perturbed;
    larger tensors use `n_sampled` deterministic random entries. Dropout is
    off and f64 precision is required so the comparison is meaningful.
    """
    if params.dtype != np.float64:
        raise ValidationError("grad_check requires float64 parameters")
    train_idx = dataset.splits.train
    if analytic is None:
        analytic = backward(params, dataset, hg, train_idx)

    def loss_at() -> float:
        logits, _ = forward(params, dataset, hg)
        return loss(logits, dataset.labels, train_idx)

    rng = np.random.default_rng(0)
    named = named_tensors(params)
    max_err: dict[str, float] = {}
    for name, tensor in named.items():
        flat = tensor.reshape(-1)
        if flat.size <= small_limit:
            entries = np.arange(flat.size)
        else:
            entries = rng.choice(flat.size, size=min(n_sampled, flat.size), replace=False)
        g_flat = analytic[name].reshape(-1)
        worst = 0.0
        for idx in entries:
            original = flat[idx]
            flat[idx] = original + step
            up = loss_at()
            flat[idx] = original - step
            down = loss_at()
            flat[idx] = original
            fd = (up - down) / (2.0 * step)
            ga = float(g_flat[idx])
            rel = abs(ga - fd) / max(abs(ga), abs(fd), 1e-8)
            worst = max(worst, rel)
        max_err[name] = worst
    return GradCheckReport(max_rel_error=max_err, tolerance=tolerance)


def make_gradcheck_fixture(hidden_dim: int = 3, seed: int = 0):
    """Tiny f64 model/dataset/hypergraph (N=5, M=4) for gradient checking."""
    synth = SyntheticConfig(
        n_news=5, n_users=4, feature_dim=4, noise_scale=1.0, seed=seed,
    )
    dataset = generate_synthetic(synth)
    dataset = replace(
        dataset,
        splits=Splits(
            train=np.arange(5, dtype=np.int64),
            val=np.zeros(0, dtype=np.int64),
            test=np.zeros(0, dtype=np.int64),
        ),
    )
    members = [(0, 1, 2), (1, 3), (2, 3, 4), (0, 4)]
    edges = [
        Hyperedge(id=j, kind="user", key=f"g{j}", members=m)
        for j, m in enumerate(members)
    ]
    hg = Hypergraph.from_hyperedges(5, edges)
    params = init_model_params(
        np.random.default_rng(seed), feature_dim=4, hidden_dim=hidden_dim,
        dtype=np.float64,
    )
    return params, dataset, hg
