"""Ry heuristic and QAOA circuit builders plus their resource counts."""

from __future__ import annotations

from dataclasses import dataclass

from .problem import IsingModel
from .sim import Circuit


@dataclass(frozen=True)
class AnsatzSpec:
    kind: str  # "ry" or "qaoa"
    n_qubits: int
    depth: int = 1

    def __post_init__(self):
        kind = self.kind.lower()
        if kind not in ("ry", "qaoa"):
            raise ValueError(f"unknown ansatz kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if self.depth < 1:
            raise ValueError("ansatz depth must be >= 1")
        if self.n_qubits < 1:
            raise ValueError("need at least one qubit")

    def entangler(self, m: IsingModel | None = None) -> list[tuple[int, int]]:
        if self.kind == "ry":
            return [(q, q + 1) for q in range(self.n_qubits - 1)]
        if m is None:
            raise ValueError("the QAOA entangler comes from the model couplings")
        return [(a, b) for a, b, _ in m.couplings]

    def to_json(self) -> dict:
        return {"kind": self.kind, "n_qubits": self.n_qubits, "depth": self.depth}


def build_ansatz(spec: AnsatzSpec, m: IsingModel | None = None) -> Circuit:
    """Construct the parameterized circuit for ``spec``.

    Ry: a layer of Ry rotations, then ``depth`` blocks of (linear CNOT chain
    ``q -> q+1``, Ry layer).  Parameters are numbered layer by layer.

    QAOA: Hadamards, then ``depth`` blocks of ``exp(-i gamma_l H)`` (as Rz and
    Rzz rotations with angles ``2 gamma_l h_i`` and ``2 gamma_l J_ij``) followed by
    ``Rx(2 beta_l)`` on every qubit.  Parameters are ordered
    ``(gamma_1, beta_1, ..., gamma_p, beta_p)``.
    """
    n = spec.n_qubits
    c = Circuit(n)
    if spec.kind == "ry":
        p = 0
        for q in range(n):
            c.add("ry", q, param=p)
            p += 1
        for _ in range(spec.depth):
            for a, b in spec.entangler():
                c.add("cnot", a, b)
            for q in range(n):
                c.add("ry", q, param=p)
                p += 1
        return c

    if m is None or m.n != n:
        raise ValueError(f"QAOA ansatz for {n} qubits needs a model of the same size")
    for q in range(n):
        c.add("h", q)
    for layer in range(spec.depth):
        gamma, beta = 2 * layer, 2 * layer + 1
        for q in range(n):
            if m.h[q] != 0.0:
                c.add("rz", q, param=gamma, scale=2.0 * m.h[q])
        for a, b, jab in m.couplings:
            c.add("rzz", a, b, param=gamma, scale=2.0 * jab)
        for q in range(n):
            c.add("rx", q, param=beta, scale=2.0)
    return c


def count_resources(spec: AnsatzSpec, m: IsingModel | None = None) -> tuple[int, int]:
    """``(cnots, params)`` with each Rzz counted as its two-CNOT decomposition."""
    n, d = spec.n_qubits, spec.depth
    if spec.kind == "ry":
        return (n - 1) * d, n * (d + 1)
    if m is None or m.n != n:
        raise ValueError(f"QAOA resource count for {n} qubits needs a model of the same size")
    return 2 * len(m.couplings) * d, 2 * d
