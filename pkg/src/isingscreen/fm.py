"""Second-order factorization machine surrogate and its QUBO export."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Sequence

import numpy as np

from .problem import LabeledSample, QuboModel, as_bits, group_kinds


class UndefinedCorrelation(ValueError):
    pass


@dataclass(frozen=True)
class FmModel:
    """``y = w0 + sum_i w_i x_i + sum_{i<j} <v_i, v_j> x_i x_j``; ``v`` has shape ``(n, kappa)``."""

    w0: float
    w: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        w = np.array(self.w, dtype=float)
        v = np.array(self.v, dtype=float)
        if v.ndim != 2 or v.shape[0] != w.size:
            raise ValueError(f"factor matrix shape {v.shape} does not match {w.size} weights")
        if not (math.isfinite(self.w0) and np.isfinite(w).all() and np.isfinite(v).all()):
            raise ValueError("FM parameters must be finite")
        w.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "w0", float(self.w0))
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "v", v)

    @property
    def n(self) -> int:
        return self.w.size

    @property
    def kappa(self) -> int:
        return self.v.shape[1]

    def predict(self, xs) -> np.ndarray:
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        if xs.shape[1] != self.n:
            raise ValueError(f"expected {self.n} features, got {xs.shape[1]}")
        xv = xs @ self.v
        pair = 0.5 * ((xv ** 2).sum(axis=1) - (xs ** 2) @ (self.v ** 2).sum(axis=1))
        return self.w0 + xs @ self.w + pair

    def to_json(self) -> dict:
        return {"n": self.n, "kappa": self.kappa, "w0": self.w0,
                "w": self.w.tolist(), "v": self.v.tolist()}

    @classmethod
    def from_json(cls, doc) -> "FmModel":
        m = cls(doc["w0"], doc["w"], doc["v"])
        if m.n != doc.get("n", m.n) or m.kappa != doc.get("kappa", m.kappa):
            raise ValueError("FM JSON header disagrees with parameter shapes")
        return m

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "FmModel":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def fm_predict(m: FmModel, x) -> float:
    bits = as_bits(x)
    if bits.size != m.n:
        raise ValueError(f"bitstring length {bits.size} does not match model size {m.n}")
    return float(m.predict(bits[None, :])[0])


def fm_to_qubo(m: FmModel, sense: str = "minimize") -> QuboModel:
    """``Q_ii = w_i``, ``Q_ij = <v_i, v_j>``, constant ``w0``."""
    return QuboModel(m.n, m.w0, m.w, np.triu(m.v @ m.v.T, k=1), sense)


def pearson_r(pred: Sequence[float], truth: Sequence[float]) -> float:
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.size != truth.size or pred.size == 0:
        raise ValueError("need two equal, non-empty sequences")
    dp = pred - pred.mean()
    dt = truth - truth.mean()
    denom = math.sqrt(float(dp @ dp) * float(dt @ dt))
    if denom == 0.0:
        raise UndefinedCorrelation("correlation is undefined for a constant sequence")
    return float(np.clip((dp @ dt) / denom, -1.0, 1.0))


# --------------------------------------------------------------------------
# training


@dataclass
class TrainConfig:
    kappa: int = 8
    epochs: int = 100
    learning_rate: float = 0.05
    init_scale: float = 0.01
    seed: int = 0
    l2: float = 0.0
    batch_size: int = 16

    def __post_init__(self):
        if self.kappa < 1 or self.epochs < 1 or self.batch_size < 1:
            raise ValueError("kappa, epochs and batch_size must be >= 1")
        if self.learning_rate <= 0 or self.l2 < 0 or self.init_scale < 0:
            raise ValueError("learning_rate must be > 0; l2 and init_scale >= 0")


@dataclass
class FitReport:
    train_loss: float
    r_train: float | None
    r_test: float | None = None
    n_train: int = 0
    n_test: int = 0

    def to_json(self) -> dict:
        return asdict(self)


def loss_and_grad(w0: float, w: np.ndarray, v: np.ndarray, xs: np.ndarray, y: np.ndarray,
                  l2: float = 0.0):
    """Mean squared error (+ l2 on ``w`` and ``v``) and its analytic gradient.

    Returns ``(loss, g_w0, g_w, g_v)``.
    """
    xv = xs @ v
    x2 = xs ** 2
    pred = w0 + xs @ w + 0.5 * ((xv ** 2).sum(axis=1) - x2 @ (v ** 2).sum(axis=1))
    r = pred - y
    b = y.size
    loss = float(r @ r) / b + l2 * (float(w @ w) + float((v ** 2).sum()))
    coef = 2.0 * r / b
    g_w0 = float(coef.sum())
    g_w = xs.T @ coef + 2 * l2 * w
    g_v = xs.T @ (coef[:, None] * xv) - v * (x2.T @ coef)[:, None] + 2 * l2 * v
    return loss, g_w0, g_w, g_v


def _stack(data: Sequence[LabeledSample]) -> tuple[np.ndarray, np.ndarray]:
    if not data:
        raise ValueError("training data is empty")
    n = data[0].x.size
    if any(s.x.size != n for s in data):
        raise ValueError("samples have inconsistent bitstring lengths")
    xs = np.array([s.x for s in data], dtype=float)
    y = np.array([s.y for s in data], dtype=float)
    if not np.isfinite(y).all():
        raise ValueError("non-finite target value")
    return xs, y


def _safe_r(pred, truth) -> float | None:
    try:
        return pearson_r(pred, truth)
    except (UndefinedCorrelation, ValueError):
        return None


def fm_train(data: Sequence[LabeledSample], cfg: TrainConfig | None = None,
             test: Sequence[LabeledSample] | None = None) -> tuple[FmModel, FitReport]:
    """Mini-batch SGD on the squared loss with targets standardized internally.

    Deterministic for a fixed ``cfg.seed``.  Correlations are ``None`` where
    undefined (a single sample, or constant predictions).
    """
    cfg = cfg or TrainConfig()
    xs, y = _stack(data)
    n = xs.shape[1]
    mu = float(y.mean())
    sd = float(y.std())
    if sd == 0.0:
        sd = 1.0
    ys = (y - mu) / sd

    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    w0 = 0.0  # standardized mean
    w = np.zeros(n)
    v = rng.uniform(-cfg.init_scale, cfg.init_scale, size=(n, cfg.kappa))
    lr = cfg.learning_rate
    for _ in range(cfg.epochs):
        order = rng.permutation(ys.size)
        for start in range(0, ys.size, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            _, g0, gw, gv = loss_and_grad(w0, w, v, xs[idx], ys[idx], cfg.l2)
            w0 -= lr * g0
            w -= lr * gw
            v -= lr * gv

    # undo standardization: y = mu + sd * y_std, pair terms scale through sqrt(sd) per factor
    model = FmModel(mu + sd * w0, sd * w, math.sqrt(sd) * v)
    pred = model.predict(xs)
    report = FitReport(float(np.mean((pred - y) ** 2)), _safe_r(pred, y), n_train=y.size)
    if test:
        xt, yt = _stack(test)
        report.r_test = _safe_r(model.predict(xt), yt)
        report.n_test = yt.size
    return model, report


def evaluate(m: FmModel, data: Sequence[LabeledSample]) -> float | None:
    xs, y = _stack(data)
    return _safe_r(m.predict(xs), y)


# --------------------------------------------------------------------------
# active learning


def stratified_order(pool: Sequence[LabeledSample], seed: int = 0) -> list[int]:
    """Pool indices: single-group samples first, then 2-, 3-, 4-group strata each shuffled."""
    rng = np.random.Generator(np.random.PCG64(seed))
    kinds = np.array([group_kinds(s.x) for s in pool])
    order = list(np.flatnonzero(kinds == 1))
    for k in range(2, int(kinds.max(initial=1)) + 1):
        stratum = np.flatnonzero(kinds == k)
        order.extend(stratum[rng.permutation(stratum.size)])
    return [int(i) for i in order]


def stratified_split(pool: Sequence[LabeledSample], size: int, seed: int = 0):
    """First ``size`` samples of :func:`stratified_order` and the remainder."""
    order = stratified_order(pool, seed)
    train = [pool[i] for i in order[:size]]
    rest = [pool[i] for i in order[size:]]
    return train, rest


def active_learning_loop(pool: Sequence[LabeledSample], batch: int = 60,
                         r_threshold: float = 0.85, cfg: TrainConfig | None = None,
                         seed: int = 0) -> tuple[FmModel, list[FitReport]]:
    """Grow the training set by ``batch`` samples per round until ``r_test >= r_threshold``.

    The first round trains on all single-group samples plus ``batch`` drawn from
    the 2-group stratum; later draws follow :func:`stratified_order`.  Every
    sample not yet in the training set is the test set.  If the threshold is
    never reached, the model with the best ``r_test`` is returned.
    """
    if batch < 1:
        raise ValueError("batch must be >= 1")
    cfg = cfg or TrainConfig()
    order = stratified_order(pool, seed)
    n_seed = sum(group_kinds(s.x) == 1 for s in pool)
    if n_seed == 0 or len(pool) < n_seed + 2:
        raise ValueError("pool is smaller than the single-group seed set plus a test set")
    reports: list[FitReport] = []
    best: tuple[float, FmModel] | None = None
    size = n_seed
    while True:
        size = min(size + batch, len(pool))
        if len(pool) - size < 2:
            break
        train = [pool[i] for i in order[:size]]
        test = [pool[i] for i in order[size:]]
        model, report = fm_train(train, cfg, test)
        reports.append(report)
        r = -math.inf if report.r_test is None else report.r_test
        if best is None or r > best[0]:
            best = (r, model)
        if r >= r_threshold:
            return model, reports
        if size == len(pool):
            break
    if best is None:
        raise ValueError("pool too small for a single training round")
    return best[1], reports
