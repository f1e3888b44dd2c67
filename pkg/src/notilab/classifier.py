"""Timing-sequence classifiers: a small 1-D CNN and a nearest-centroid baseline.

The network is implemented directly in numpy (conv -> global max pool ->
fully connected stack -> softmax) with an adaptive-moment optimizer written
from first principles, so training stays dependency-free and bit-reproducible
for a fixed seed. Inputs are sequences of 1 to 5 RTT values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import seeds
from .dataset import FoldedDataset, apply_stats, make_folds, normalize_fold

_KERNEL = 3


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class CnnConfig:
    activation: str = "relu"
    optimizer: str = "adam"
    dropout_rate: float = 0.1
    epochs: int = 60
    conv_filters: int = 32
    fc_layers: int = 2
    fc_neurons: int = 50
    batch_size: int = 32
    learning_rate: float = 0.001
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        for name in ("epochs", "conv_filters", "fc_layers", "fc_neurons", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.activation not in ("relu", "tanh"):
            raise ValueError(f"unsupported activation {self.activation!r}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unsupported optimizer {self.optimizer!r}")

    @staticmethod
    def from_json(obj: dict, seed: int | None = None) -> "CnnConfig":
        kwargs = {k: obj[k] for k in CnnConfig.__dataclass_fields__ if k in obj}
        if seed is not None:
            kwargs["seed"] = seed
        return CnnConfig(**kwargs)


@dataclass
class EvalReport:
    classes: list[str]
    confusion: np.ndarray  # rows = actual, columns = predicted
    per_class_precision: dict[str, float]
    per_class_recall: dict[str, float]
    overall_accuracy: float
    n_samples: int
    sequence_length: int

    def to_dict(self) -> dict:
        return {
            "classes": self.classes,
            "confusion": self.confusion.astype(int).tolist(),
            "per_class_precision": self.per_class_precision,
            "per_class_recall": self.per_class_recall,
            "overall_accuracy": self.overall_accuracy,
            "n_samples": self.n_samples,
            "sequence_length": self.sequence_length,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _act(z: np.ndarray, kind: str) -> np.ndarray:
    return np.maximum(z, 0.0) if kind == "relu" else np.tanh(z)


def _act_grad(z: np.ndarray, a: np.ndarray, kind: str) -> np.ndarray:
    return (z > 0.0).astype(float) if kind == "relu" else 1.0 - a * a


def _pad_edges(x: np.ndarray) -> np.ndarray:
    # sequences shorter than the kernel get one edge value on each side
    if x.shape[1] >= _KERNEL:
        return x
    return np.pad(x, ((0, 0), (1, 1)), mode="edge")


def _windows(x: np.ndarray) -> np.ndarray:
    xp = _pad_edges(x)
    span = xp.shape[1] - _KERNEL + 1
    return np.stack([xp[:, i:i + _KERNEL] for i in range(span)], axis=1)  # (B, span, K)


class _Adam:
    def __init__(self, params: dict[str, np.ndarray], lr: float,
                 beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * (g * g)
            params[k] -= self.lr * (self.m[k] / b1c) / (np.sqrt(self.v[k] / b2c) + self.eps)


class _Sgd:
    def __init__(self, params, lr):
        self.lr = lr

    def step(self, params, grads):
        for k, g in grads.items():
            params[k] -= self.lr * g


@dataclass
class CnnModel:
    cfg: CnnConfig
    classes: list[str]
    sequence_length: int
    stats: object  # FeatureStats of the training fold
    params: dict[str, np.ndarray] = field(default_factory=dict)

    def _forward(self, x: np.ndarray, rng: np.random.Generator | None = None):
        """Forward pass on standardized input; rng enables dropout (training)."""
        p = self.params
        act = self.cfg.activation
        x3 = _windows(x)
        zc = np.einsum("bik,fk->bif", x3, p["conv_w"]) + p["conv_b"]
        ac = _act(zc, act)
        pool_idx = ac.argmax(axis=1)  # (B, F)
        pooled = np.take_along_axis(ac, pool_idx[:, None, :], axis=1)[:, 0, :]
        cache = {"x3": x3, "conv_z": zc, "conv_a": ac, "pool_idx": pool_idx, "h": [pooled]}
        h = pooled
        for li in range(self.cfg.fc_layers):
            z = h @ p[f"fc{li}_w"] + p[f"fc{li}_b"]
            a = _act(z, act)
            if rng is not None and self.cfg.dropout_rate > 0.0:
                keep = 1.0 - self.cfg.dropout_rate
                mask = (rng.random(a.shape) < keep) / keep
                a = a * mask
                cache[f"fc{li}_drop"] = mask
            cache[f"fc{li}_z"] = z
            cache["h"].append(a)
            h = a
        logits = h @ p["out_w"] + p["out_b"]
        cache["logits"] = logits
        return _softmax(logits), cache

    def _backward(self, probs, y_onehot, cache):
        p = self.params
        act = self.cfg.activation
        grads = {}
        batch = probs.shape[0]
        dlogits = (probs - y_onehot) / batch
        h_last = cache["h"][-1]
        grads["out_w"] = h_last.T @ dlogits
        grads["out_b"] = dlogits.sum(axis=0)
        dh = dlogits @ p["out_w"].T
        for li in range(self.cfg.fc_layers - 1, -1, -1):
            if f"fc{li}_drop" in cache:
                dh = dh * cache[f"fc{li}_drop"]
            z = cache[f"fc{li}_z"]
            a = _act(z, act)
            dz = dh * _act_grad(z, a, act)
            grads[f"fc{li}_w"] = cache["h"][li].T @ dz
            grads[f"fc{li}_b"] = dz.sum(axis=0)
            dh = dz @ p[f"fc{li}_w"].T
        # route pooled gradient back to each filter's argmax position
        dac = np.zeros_like(cache["conv_a"])
        np.put_along_axis(dac, cache["pool_idx"][:, None, :], dh[:, None, :], axis=1)
        dzc = dac * _act_grad(cache["conv_z"], cache["conv_a"], act)
        grads["conv_w"] = np.einsum("bif,bik->fk", dzc, cache["x3"])
        grads["conv_b"] = dzc.sum(axis=(0, 1))
        return grads

    def predict_proba(self, x_raw: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x_raw, dtype=float))
        if x.shape[1] != self.sequence_length:
            raise ValueError(f"sample length {x.shape[1]} does not match "
                             f"training length {self.sequence_length}")
        probs, _ = self._forward(apply_stats(x, self.stats))
        return probs


def _init_params(cfg: CnnConfig, n_classes: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    params = {}
    params["conv_w"] = rng.normal(0.0, np.sqrt(2.0 / _KERNEL), size=(cfg.conv_filters, _KERNEL))
    params["conv_b"] = np.zeros(cfg.conv_filters)
    fan_in = cfg.conv_filters
    for li in range(cfg.fc_layers):
        params[f"fc{li}_w"] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, cfg.fc_neurons))
        params[f"fc{li}_b"] = np.zeros(cfg.fc_neurons)
        fan_in = cfg.fc_neurons
    params["out_w"] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, n_classes))
    params["out_b"] = np.zeros(n_classes)
    return params


def train_cnn(folded: FoldedDataset, cfg: CnnConfig, fold: int) -> CnnModel:
    """Train on everything outside `fold`; the model keeps the fold's scaler."""
    train_z, _, stats = normalize_fold(folded, fold)
    train_idx, _ = folded.split(fold)
    labels = folded.labels()
    classes = sorted(set(labels))
    label_to_idx = {c: i for i, c in enumerate(classes)}
    y = np.array([label_to_idx[labels[i]] for i in train_idx])

    rng = seeds.sub_rng(cfg.seed, seeds.TRAIN, fold)
    model = CnnModel(cfg=cfg, classes=classes, sequence_length=train_z.shape[1],
                     stats=stats, params=_init_params(cfg, len(classes), rng))
    onehot = np.eye(len(classes))[y]
    opt = _Adam(model.params, cfg.learning_rate) if cfg.optimizer == "adam" \
        else _Sgd(model.params, cfg.learning_rate)

    n = train_z.shape[0]
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            sel = order[start:start + cfg.batch_size]
            probs, cache = model._forward(train_z[sel], rng=rng)
            loss = -np.mean(np.log(np.clip(probs[np.arange(len(sel)), y[sel]], 1e-12, None)))
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch offset {start} "
                    f"(lr={cfg.learning_rate}, optimizer={cfg.optimizer})")
            opt.step(model.params, model._backward(probs, onehot[sel], cache))
    return model


def predict(model: CnnModel, sample) -> tuple[np.ndarray, int]:
    """Probability vector and argmax class index (ties break to the lowest index)."""
    probs = model.predict_proba(sample)[0]
    return probs, int(np.argmax(probs))


def _report(y_true: np.ndarray, y_pred: np.ndarray, classes: list[str],
            sequence_length: int) -> EvalReport:
    c = len(classes)
    confusion = np.zeros((c, c), dtype=int)
    for a, p in zip(y_true, y_pred):
        confusion[a, p] += 1
    col = confusion.sum(axis=0)
    row = confusion.sum(axis=1)
    diag = np.diag(confusion)
    precision = {classes[i]: (float(diag[i] / col[i]) if col[i] else 0.0) for i in range(c)}
    recall = {classes[i]: (float(diag[i] / row[i]) if row[i] else 0.0) for i in range(c)}
    total = int(confusion.sum())
    return EvalReport(classes=classes, confusion=confusion,
                      per_class_precision=precision, per_class_recall=recall,
                      overall_accuracy=float(diag.sum() / total) if total else 0.0,
                      n_samples=total, sequence_length=sequence_length)


def cross_validate(folded: FoldedDataset, cfg: CnnConfig) -> EvalReport:
    """5-fold cross-validation; every sample is predicted exactly once."""
    labels = folded.labels()
    classes = sorted(set(labels))
    label_to_idx = {c: i for i, c in enumerate(classes)}
    x = folded.matrix()
    y_true = np.array([label_to_idx[l] for l in labels])
    y_pred = np.full(len(labels), -1, dtype=int)
    for fold in range(folded.n_folds):
        model = train_cnn(folded, cfg, fold)
        _, test_idx = folded.split(fold)
        probs = model.predict_proba(x[test_idx])
        y_pred[test_idx] = probs.argmax(axis=1)
    assert (y_pred >= 0).all()
    return _report(y_true, y_pred, classes, x.shape[1])


def centroid_baseline(folded: FoldedDataset, fold: int) -> EvalReport:
    """Nearest-centroid (Euclidean) sanity check on one fold's test portion."""
    train_z, test_z, _ = normalize_fold(folded, fold)
    train_idx, test_idx = folded.split(fold)
    labels = folded.labels()
    classes = sorted(set(labels))
    label_to_idx = {c: i for i, c in enumerate(classes)}
    y_train = np.array([label_to_idx[labels[i]] for i in train_idx])
    y_test = np.array([label_to_idx[labels[i]] for i in test_idx])
    centroids = np.stack([train_z[y_train == i].mean(axis=0) for i in range(len(classes))])
    d2 = ((test_z[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return _report(y_test, d2.argmin(axis=1), classes, train_z.shape[1])


def centroid_cross_validate(folded: FoldedDataset) -> EvalReport:
    labels = folded.labels()
    classes = sorted(set(labels))
    label_to_idx = {c: i for i, c in enumerate(classes)}
    x = folded.matrix()
    y_true = np.array([label_to_idx[l] for l in labels])
    y_pred = np.full(len(labels), -1, dtype=int)
    for fold in range(folded.n_folds):
        train_z, test_z, _ = normalize_fold(folded, fold)
        train_idx, test_idx = folded.split(fold)
        y_train = y_true[train_idx]
        centroids = np.stack([train_z[y_train == i].mean(axis=0) for i in range(len(classes))])
        d2 = ((test_z[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        y_pred[test_idx] = d2.argmin(axis=1)
    return _report(y_true, y_pred, classes, x.shape[1])


def convergence_curve(samples, cfg: CnnConfig, sizes=tuple(range(10, 301, 10)),
                      seed: int = 0) -> list[tuple[int, float]]:
    """Cross-validated accuracy on seeded balanced subsets of growing size."""
    from collections import defaultdict

    by_label = defaultdict(list)
    for s in samples:
        by_label[s.label].append(s)
    k = min(len(v) for v in by_label.values())
    points = []
    for size in sizes:
        if size > k:
            break
        rng = seeds.sub_rng(seed, seeds.SUBSET, size)
        subset = []
        for label in sorted(by_label):
            pool = by_label[label]
            chosen = rng.choice(len(pool), size=size, replace=False)
            subset.extend(pool[i] for i in sorted(chosen))
        folded = make_folds(subset, seed)
        points.append((size, cross_validate(folded, cfg).overall_accuracy))
    return points
