"""Synthetic planted-model datasets and the bundled 12-variable example model.

The planted model stands in for a property table computed elsewhere: a QUBO
over 2-bit functional-group codes whose maximizer is a chosen candidate.  Its
pairwise matrix has low rank so a factorization machine can represent it.
"""

from __future__ import annotations

import json
from importlib import resources

import numpy as np

from .problem import (LabeledSample, QuboModel, all_bitstrings, as_bits, bits_to_str,
                      encode_groups)

DEFAULT_TARGET = bits_to_str(encode_groups(["Me", "CN", "Me", "CN", "Me", "H"]))  # 110011001110
BASELINE = 285.0


def planted_qubo(seed: int = 4, n: int = 12, target: str = DEFAULT_TARGET, rank: int = 4,
                 linear_scale: float = 4.0, pair_scale: float = 1.5) -> QuboModel:
    """Maximize-sense QUBO whose unique maximizer is ``target``.

    Random linear terms plus a rank-``rank`` pairwise matrix, then the smallest
    "pull" toward ``target`` (a multiple of 0.25 added to the linear terms)
    that makes ``target`` the strict maximum.
    """
    t = as_bits(target, n).astype(float)
    rng = np.random.Generator(np.random.PCG64(seed))
    lin = rng.normal(0.0, linear_scale, n)
    factors = rng.normal(0.0, pair_scale / np.sqrt(rank), (n, rank))
    quad = np.triu(factors @ factors.T, k=1)
    xs = all_bitstrings(n)
    target_idx = int(sum(int(b) << i for i, b in enumerate(t)))
    direction = 2 * t - 1
    pull = 0.0
    while True:
        m = QuboModel(n, BASELINE, lin + pull * direction, quad, "maximize")
        e = m.energies(xs)
        best = int(np.argmax(e))
        if best == target_idx and np.sum(e >= e[target_idx] - 1e-9) == 1:
            return m
        pull += 0.25


def table_order(n: int) -> np.ndarray:
    """Bit vectors in table order: row ``s`` is ``s`` in binary, first character most significant."""
    s = np.arange(1 << n, dtype=np.int64)
    return ((s[:, None] >> np.arange(n - 1, -1, -1)) & 1).astype(np.int8)


def generate_dataset(model: QuboModel, noise: float = 0.0, seed: int = 0) -> list[LabeledSample]:
    """Every bitstring labeled by ``model`` plus Gaussian noise of std ``noise``."""
    if noise < 0:
        raise ValueError("noise must be >= 0")
    xs = table_order(model.n)
    y = model.energies(xs)
    if noise > 0:
        rng = np.random.Generator(np.random.PCG64(seed))
        y = y + rng.normal(0.0, noise, y.size)
    return [LabeledSample(x, float(v)) for x, v in zip(xs, y)]


def embedded_qubo() -> QuboModel:
    """The bundled 12-variable surrogate (FM fit to the noiseless default planted model)."""
    text = resources.files("isingscreen.data").joinpath("embedded_qubo.json").read_text("utf-8")
    return QuboModel.from_json(json.loads(text))


def embedded_ising():
    from .problem import qubo_to_ising

    return qubo_to_ising(embedded_qubo())
