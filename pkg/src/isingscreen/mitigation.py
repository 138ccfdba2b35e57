"""Readout-error mitigation on the observed-bitstring subspace (M3 style).

The assignment matrix is the tensor product of per-qubit 2x2 confusion
matrices, but it is never formed over the full ``2**n`` space: only rows and
columns of bitstrings that actually appear in the histogram are used, and the
entries ``prod_q A_q[r_q][t_q]`` are generated on demand.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .problem import IsingModel, as_bits, bits_to_index
from .sim import ReadoutNoise, ShotHistogram, noisy_counts

DENSE_LIMIT = 1024
_ROW_CHUNK = 256


class MitigationError(RuntimeError):
    def __init__(self, msg, residual: float):
        super().__init__(f"{msg} (residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class ConfusionSpec:
    """Per-qubit matrices ``A_q[r][t] = P(read r | true t)``, stacked as ``(n, 2, 2)``."""

    matrices: np.ndarray

    def __post_init__(self):
        mats = np.array(self.matrices, dtype=float)
        if mats.ndim != 3 or mats.shape[1:] != (2, 2):
            raise ValueError(f"expected shape (n, 2, 2), got {mats.shape}")
        if not np.allclose(mats.sum(axis=1), 1.0, atol=1e-12):
            raise ValueError("confusion matrix columns must sum to 1")
        if np.any(mats[:, [0, 1], [0, 1]] <= 0.5):
            raise ValueError("confusion matrix diagonals must exceed 0.5")
        mats.setflags(write=False)
        object.__setattr__(self, "matrices", mats)

    @property
    def n_qubits(self) -> int:
        return self.matrices.shape[0]

    @classmethod
    def from_rates(cls, p10, p01) -> "ConfusionSpec":
        p10 = np.asarray(p10, dtype=float)
        p01 = np.asarray(p01, dtype=float)
        mats = np.empty((p10.size, 2, 2))
        mats[:, 0, 0] = 1 - p10
        mats[:, 1, 0] = p10
        mats[:, 0, 1] = p01
        mats[:, 1, 1] = 1 - p01
        return cls(mats)

    @classmethod
    def from_noise(cls, noise: ReadoutNoise) -> "ConfusionSpec":
        return cls.from_rates(noise.p10, noise.p01)

    @classmethod
    def identity(cls, n: int) -> "ConfusionSpec":
        return cls(np.tile(np.eye(2), (n, 1, 1)))

    def to_json(self) -> dict:
        return {"qubits": [{"p10": float(a[1, 0]), "p01": float(a[0, 1])} for a in self.matrices]}

    @classmethod
    def from_json(cls, doc) -> "ConfusionSpec":
        qs = doc["qubits"]
        return cls.from_rates([q["p10"] for q in qs], [q["p01"] for q in qs])

    @classmethod
    def load(cls, path) -> "ConfusionSpec":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))

    def full_matrix(self) -> np.ndarray:
        """Dense ``2**n x 2**n`` assignment matrix (little-endian); small ``n`` only."""
        out = np.ones((1, 1))
        for a in self.matrices[::-1]:
            out = np.kron(out, a)
        return out


def calibrate(noise: ReadoutNoise, shots: int = 10000, seed=None) -> ConfusionSpec:
    """Estimate per-qubit flip rates by preparing all-zeros and all-ones through ``noise``."""
    n = noise.n_qubits
    rng = np.random.Generator(np.random.PCG64(seed))
    rates = []
    for prepared in (0, (1 << n) - 1):
        counts = np.zeros(1 << n, dtype=np.int64)
        counts[prepared] = shots
        noisy = noisy_counts(counts, noise, rng)
        idx = np.flatnonzero(noisy)
        bits = (idx[:, None] >> np.arange(n)) & 1
        ones = (bits * noisy[idx, None]).sum(axis=0) / shots
        rates.append(ones if prepared == 0 else 1 - ones)
    return ConfusionSpec.from_rates(np.clip(rates[0], 0, 0.49), np.clip(rates[1], 0, 0.49))


class QuasiDistribution(dict):
    """Bitstring -> real weight; weights may be negative and sum to one."""

    @property
    def n_qubits(self) -> int:
        return len(next(iter(self)))

    def total(self) -> float:
        return float(sum(self.values()))

    def nearest_probability(self) -> dict[str, float]:
        """Closest probability distribution in Euclidean norm (projection onto the simplex)."""
        keys = list(self)
        w = np.array([self[k] for k in keys])
        p = project_to_simplex(w)
        return {k: float(v) for k, v in zip(keys, p) if v > 0}

    def expectation(self, m: IsingModel) -> float:
        return mitigated_expectation(m, self)

    def to_json(self) -> dict:
        return {k: float(v) for k, v in sorted(self.items())}

    @classmethod
    def from_json(cls, doc: Mapping[str, float]) -> "QuasiDistribution":
        return cls({k: float(v) for k, v in doc.items()})


def project_to_simplex(w: np.ndarray) -> np.ndarray:
    """Euclidean projection of ``w`` onto ``{p >= 0, sum p = 1}`` (sort-based)."""
    w = np.asarray(w, dtype=float)
    u = np.sort(w)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, w.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    tau = css[rho] / (rho + 1)
    return np.maximum(w - tau, 0.0)


_GROUP = 8


class _Factors:
    """Confusion entries for a fixed subspace, from per-group lookup tables.

    Qubits are split into groups of up to 8; each group's ``2**g x 2**g``
    Kronecker table turns one entry into a product of ``ceil(n / 8)`` lookups.
    """

    def __init__(self, spec: ConfusionSpec, keys: list[str]):
        bits = np.array([as_bits(k) for k in keys], dtype=np.int64)
        self.tables, self.codes = [], []
        for lo in range(0, spec.n_qubits, _GROUP):
            hi = min(lo + _GROUP, spec.n_qubits)
            table = np.ones((1, 1))
            for a in spec.matrices[lo:hi][::-1]:
                table = np.kron(table, a)
            self.tables.append(table)
            self.codes.append(bits[:, lo:hi] @ (1 << np.arange(hi - lo)))
        self.size = len(keys)

    def block(self, rows: slice) -> np.ndarray:
        out = None
        for table, code in zip(self.tables, self.codes):
            part = table[code[rows][:, None], code[None, :]]
            out = part if out is None else out * part
        return out

    def diagonal(self) -> np.ndarray:
        out = np.ones(self.size)
        for table, code in zip(self.tables, self.codes):
            out *= table[code, code]
        return out


def reduced_matrix(spec: ConfusionSpec, keys: list[str]) -> np.ndarray:
    """Dense restriction of the assignment matrix to ``keys`` (rows and columns)."""
    return _Factors(spec, keys).block(slice(None))


def mitigate(hist: ShotHistogram, spec: ConfusionSpec, tol: float = 1e-8,
             method: str = "auto", max_iter: int | None = None) -> QuasiDistribution:
    """Solve ``A_S x = p`` on the observed subspace ``S`` and normalize ``x`` to sum 1.

    ``method`` is ``"direct"`` (dense LU), ``"iterative"`` (matrix-free GMRES
    with a Jacobi preconditioner, capped at ``10 |S|`` iterations) or
    ``"auto"``, which goes direct when ``|S| <= 1024``.
    """
    if not hist.counts:
        raise ValueError("empty histogram")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if spec.n_qubits != hist.n_qubits:
        raise ValueError(f"confusion spec covers {spec.n_qubits} qubits, histogram {hist.n_qubits}")
    keys = sorted(hist.counts, key=bits_to_index)
    p = np.array([hist.counts[k] for k in keys], dtype=float) / hist.shots
    size = len(keys)
    if method == "auto":
        method = "direct" if size <= DENSE_LIMIT else "iterative"

    if method == "direct":
        x = np.linalg.solve(reduced_matrix(spec, keys), p)
    elif method == "iterative":
        x = _iterative_solve(spec, keys, p, tol, max_iter or 10 * size)
    else:
        raise ValueError(f"unknown method {method!r}")
    total = x.sum()
    return QuasiDistribution({k: float(v / total) for k, v in zip(keys, x)})


def _iterative_solve(spec, keys, p, tol, max_iter):
    fac = _Factors(spec, keys)
    size = fac.size
    diag = fac.diagonal()

    def matvec(x):
        x = np.ravel(x)
        out = np.empty(size)
        for start in range(0, size, _ROW_CHUNK):
            rows = slice(start, min(start + _ROW_CHUNK, size))
            out[rows] = fac.block(rows) @ x
        return out

    a_op = LinearOperator((size, size), matvec=matvec, dtype=float)
    precond = LinearOperator((size, size), matvec=lambda x: np.ravel(x) / diag, dtype=float)
    # max_iter counts inner iterations; scipy's maxiter counts restart cycles
    restart = max(1, min(size, 50, max_iter))
    x, info = gmres(a_op, p, x0=p / diag, rtol=tol, atol=0.0, M=precond,
                    restart=restart, maxiter=-(-max_iter // restart))
    residual = float(np.linalg.norm(matvec(x) - p) / max(np.linalg.norm(p), 1e-300))
    if info != 0 and residual > tol:
        raise MitigationError("iterative mitigation did not converge", residual)
    return x


def mitigated_expectation(m: IsingModel, q: Mapping[str, float]) -> float:
    """``sum_k w_k E_k`` over the quasi-distribution support (offset excluded)."""
    total = 0.0
    for key, w in q.items():
        if len(key) != m.n:
            raise ValueError(f"bitstring {key} does not match the {m.n}-qubit model")
        total += w * m.energy(key)
    return total


def total_variation(p: Mapping[str, float], q: Mapping[str, float]) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)
