"""Fuel-consumption-rate surrogate: feature encoding and gradient-boosted regression trees.

The feature layout is fixed at 86 columns::

    [distance, lat, lon, sog, loa, beam, gt]   7 numeric
    ship_type one-hot                          12
    month one-hot (1-12)                       12
    day-of-month one-hot (1-31)                31
    hour one-hot (0-23)                        24
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

LAYOUT_VERSION = 1
NUMERIC_FIELDS = ("distance_travelled", "lat", "lon", "sog", "loa", "beam", "gt")
N_SHIP_TYPES = 12
# (field name, first valid value, block size)
CATEGORICAL_BLOCKS = (
    ("ship_type", 0, N_SHIP_TYPES),
    ("month", 1, 12),
    ("day", 1, 31),
    ("hour", 0, 24),
)
N_FEATURES = len(NUMERIC_FIELDS) + sum(size for _, _, size in CATEGORICAL_BLOCKS)
assert N_FEATURES == 86


def block_offsets() -> dict[str, int]:
    """Column index where each one-hot block starts."""
    out = {}
    pos = len(NUMERIC_FIELDS)
    for name, _, size in CATEGORICAL_BLOCKS:
        out[name] = pos
        pos += size
    return out


@dataclass
class OperationalRecord:
    distance_travelled: float
    lat: float
    lon: float
    sog: float
    loa: float
    beam: float
    gt: float
    ship_type: int
    month: int
    day: int
    hour: int
    fcr_target: float | None = None


def _check_category(name: str, value: int, lo: int, size: int) -> int:
    if value != int(value) or not lo <= value < lo + size:
        raise ValueError(f"{name}={value!r} outside vocabulary [{lo}, {lo + size - 1}]")
    return int(value) - lo


def encode_features(record: OperationalRecord) -> np.ndarray:
    x = np.zeros(N_FEATURES)
    for i, name in enumerate(NUMERIC_FIELDS):
        v = float(getattr(record, name))
        if not math.isfinite(v):
            raise ValueError(f"{name} is not finite: {v}")
        x[i] = v
    offsets = block_offsets()
    for name, lo, size in CATEGORICAL_BLOCKS:
        x[offsets[name] + _check_category(name, getattr(record, name), lo, size)] = 1.0
    return x


def encode_table(records: Sequence[OperationalRecord]) -> tuple[np.ndarray, np.ndarray | None]:
    """Stack encoded records; the target column is returned when every record has one."""
    X = np.stack([encode_features(r) for r in records]) if records else np.zeros((0, N_FEATURES))
    targets = [r.fcr_target for r in records]
    y = None if any(t is None for t in targets) else np.asarray(targets, dtype=float)
    return X, y


def read_records(path: str | Path) -> list[OperationalRecord]:
    """Load records from a delimited table whose header names OperationalRecord fields."""
    path = Path(path)
    with path.open(newline="") as fh:
        sample = fh.read(4096)
        fh.seek(0)
        dialect = csv.Sniffer().sniff(sample, delimiters=",;\t")
        reader = csv.DictReader(fh, dialect=dialect)
        names = {f.name for f in fields(OperationalRecord)}
        missing = names - {"fcr_target"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        out = []
        for line, row in enumerate(reader, start=2):
            try:
                kw = {}
                for name in names:
                    raw = row.get(name)
                    if name == "fcr_target":
                        kw[name] = float(raw) if raw not in (None, "") else None
                    elif name in ("ship_type", "month", "day", "hour"):
                        kw[name] = int(raw)
                    else:
                        kw[name] = float(raw)
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{line}: {exc}") from None
            out.append(OperationalRecord(**kw))
    return out


def write_records(path: str | Path, records: Iterable[OperationalRecord]) -> None:
    names = [f.name for f in fields(OperationalRecord)]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for r in records:
            w.writerow(["" if getattr(r, n) is None else getattr(r, n) for n in names])


@dataclass(frozen=True)
class BoostParams:
    n_trees: int = 200
    max_depth: int = 6
    learning_rate: float = 0.1
    min_samples_leaf: int = 5


@dataclass
class Tree:
    """Flat binary regression tree; ``feature[i] == -1`` marks a leaf.

    Samples with ``x[feature] <= threshold`` go left.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.nonzero(active)[0]
            n = node[idx]
            go_left = X[idx, self.feature[n]] <= self.threshold[n]
            node[idx] = np.where(go_left, self.left[n], self.right[n])
            active[idx] = self.feature[node[idx]] >= 0
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_nodes(self) -> list[dict]:
        out = []
        for i in range(len(self.feature)):
            if self.feature[i] < 0:
                out.append({"value": float(self.value[i])})
            else:
                out.append({
                    "feature": int(self.feature[i]),
                    "threshold": float(self.threshold[i]),
                    "left": int(self.left[i]),
                    "right": int(self.right[i]),
                })
        return out

    @classmethod
    def from_nodes(cls, nodes: list[dict]) -> "Tree":
        n = len(nodes)
        t = cls(np.full(n, -1, dtype=np.int64), np.zeros(n), np.full(n, -1, dtype=np.int64),
                np.full(n, -1, dtype=np.int64), np.zeros(n))
        for i, nd in enumerate(nodes):
            if "value" in nd:
                t.value[i] = nd["value"]
            else:
                f = int(nd["feature"])
                if not 0 <= f < N_FEATURES:
                    raise ValueError(f"node {i}: feature index {f} out of range")
                t.feature[i], t.threshold[i] = f, nd["threshold"]
                t.left[i], t.right[i] = nd["left"], nd["right"]
        return t


@dataclass
class TreeEnsemble:
    base_score: float
    learning_rate: float
    trees: list[Tree] = field(default_factory=list)

    def raw_predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        total = np.zeros(len(X))
        for t in self.trees:
            total += t.predict(X)
        return self.base_score + self.learning_rate * total

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.maximum(self.raw_predict(X), 0.0)

    def predict_record(self, record: OperationalRecord) -> float:
        return predict_fcr(self, encode_features(record))

    def save(self, path: str | Path) -> None:
        doc = {
            "format": "crlnav-fuel-ensemble",
            "layout_version": LAYOUT_VERSION,
            "n_features": N_FEATURES,
            "base_score": self.base_score,
            "learning_rate": self.learning_rate,
            "trees": [t.to_nodes() for t in self.trees],
        }
        Path(path).write_text(json.dumps(doc))

    @classmethod
    def load(cls, path: str | Path) -> "TreeEnsemble":
        doc = json.loads(Path(path).read_text())
        if doc.get("format") != "crlnav-fuel-ensemble" or doc.get("layout_version") != LAYOUT_VERSION:
            raise ValueError(f"{path}: not a layout-v{LAYOUT_VERSION} fuel ensemble")
        return cls(float(doc["base_score"]), float(doc["learning_rate"]),
                   [Tree.from_nodes(nodes) for nodes in doc["trees"]])


def predict_fcr(model: TreeEnsemble, x: np.ndarray) -> float:
    """Predicted fuel consumption rate in mt/hour, clamped at zero."""
    return float(model.predict(np.asarray(x, dtype=float)[None, :])[0])


def _numeric_gains(Xs: np.ndarray, r: np.ndarray, min_leaf: int):
    """Best split position per presorted numeric column.

    ``Xs[f]`` and ``r[f]`` hold column values and residuals in ascending value
    order. Returns (gain, position) arrays of length F.
    """
    F, n = Xs.shape
    full = np.cumsum(r, axis=1)
    cs = full[:, :-1]
    total = full[:, -1:]
    n_left = np.arange(1, n, dtype=float)
    gain = cs * cs / n_left + (total - cs) ** 2 / (n - n_left) - total * total / n
    valid = Xs[:, :-1] < Xs[:, 1:]
    valid[:, : min_leaf - 1] = False
    if min_leaf > 1:
        valid[:, n - min_leaf:] = False
    gain = np.where(valid, gain, -np.inf)
    pos = np.argmax(gain, axis=1)
    return gain[np.arange(F), pos], pos


def _binary_gains(B: np.ndarray, r: np.ndarray, min_leaf: int) -> np.ndarray:
    """Gain of splitting each 0/1 column at 0.5."""
    n = len(r)
    total = r.sum()
    n1 = B.sum(axis=0)
    s1 = r @ B
    n0 = n - n1
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = (total - s1) ** 2 / n0 + s1 * s1 / n1 - total * total / n
    return np.where((n0 >= min_leaf) & (n1 >= min_leaf), gain, -np.inf)


def _fit_tree(X: np.ndarray, num_cols: np.ndarray, bin_cols: np.ndarray, order: np.ndarray,
              resid: np.ndarray, params: BoostParams) -> Tree:
    """Grow one tree on ``resid``.

    ``order[k]`` lists all sample indices sorted by column ``num_cols[k]``.
    """
    F = X.shape[1]
    min_leaf = max(params.min_samples_leaf, 1)
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node():
        for lst, v in ((feature, -1), (threshold, 0.0), (left, -1), (right, -1), (value, 0.0)):
            lst.append(v)
        return len(feature) - 1

    stack = [(new_node(), np.arange(len(resid)), order, 0)]
    while stack:
        nid, rows, idx, depth = stack.pop()
        r = resid[rows]
        value[nid] = float(r.mean())
        n = len(rows)
        if depth >= params.max_depth or n < 2 * min_leaf:
            continue
        gains = np.full(F, -np.inf)
        cut = np.zeros(F)
        if len(num_cols):
            Xs = X[idx, num_cols[:, None]]
            g, pos = _numeric_gains(Xs, resid[idx], min_leaf)
            gains[num_cols] = g
            k = np.arange(len(num_cols))
            lo = Xs[k, pos]
            hi = Xs[k, np.minimum(pos + 1, n - 1)]
            mid = 0.5 * (lo + hi)
            cut[num_cols] = np.where(mid >= hi, lo, mid)
        if len(bin_cols):
            gains[bin_cols] = _binary_gains(X[np.ix_(rows, bin_cols)], r, min_leaf)
            cut[bin_cols] = 0.5
        f = int(np.argmax(gains))
        total = r.sum()
        if not np.isfinite(gains[f]) or gains[f] <= 1e-12 * max(1.0, total * total / n):
            continue
        thr = float(cut[f])
        go_left = X[:, f] <= thr
        lm = go_left[rows]
        m = go_left[idx]
        n_left = int(lm.sum())
        feature[nid], threshold[nid] = f, thr
        li, ri = new_node(), new_node()
        left[nid], right[nid] = li, ri
        stack.append((ri, rows[~lm], idx[~m].reshape(len(num_cols), n - n_left), depth + 1))
        stack.append((li, rows[lm], idx[m].reshape(len(num_cols), n_left), depth + 1))
    return Tree(np.array(feature, dtype=np.int64), np.array(threshold), np.array(left, dtype=np.int64),
                np.array(right, dtype=np.int64), np.array(value))


def fit_arrays(X: np.ndarray, y: np.ndarray, params: BoostParams = BoostParams()) -> TreeEnsemble:
    """Squared-error gradient boosting with mean-valued leaves."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(y) == 0:
        raise ValueError("cannot fit on an empty dataset")
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError(f"X shape {X.shape} does not match {len(y)} targets")
    if not 0 < params.learning_rate <= 1:
        raise ValueError("learning_rate must be in (0, 1]")
    model = TreeEnsemble(float(y.mean()), params.learning_rate)
    if params.n_trees == 0:
        return model
    is_binary = np.all((X == 0.0) | (X == 1.0), axis=0)
    bin_cols = np.nonzero(is_binary)[0]
    num_cols = np.nonzero(~is_binary)[0]
    order = np.argsort(X[:, num_cols], axis=0, kind="stable").T.copy()
    pred = np.full(len(y), model.base_score)
    for _ in range(params.n_trees):
        tree = _fit_tree(X, num_cols, bin_cols, order, y - pred, params)
        model.trees.append(tree)
        pred += params.learning_rate * tree.predict(X)
    return model


def fit_ensemble(dataset: Sequence[OperationalRecord], params: BoostParams = BoostParams()) -> TreeEnsemble:
    if not dataset:
        raise ValueError("cannot fit on an empty dataset")
    X, y = encode_table(dataset)
    if y is None:
        raise ValueError("every training record needs fcr_target")
    return fit_arrays(X, y, params)


def regression_metrics(pred: Sequence[float], target: Sequence[float]) -> dict[str, float]:
    """MAE, RMSE and R^2 (as a percentage)."""
    p = np.asarray(pred, dtype=float)
    t = np.asarray(target, dtype=float)
    if p.shape != t.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {t.shape}")
    if p.size == 0:
        raise ValueError("metrics need at least one sample")
    err = p - t
    sst = float(np.sum((t - t.mean()) ** 2))
    if sst == 0.0:
        raise ValueError("R^2 is undefined for a constant target")
    return {
        "mae": float(np.mean(np.abs(err))),
        "rmse": float(np.sqrt(np.mean(err**2))),
        "r2": 100.0 * (1.0 - float(np.sum(err**2)) / sst),
    }
