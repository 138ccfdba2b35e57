"""Dense statevector simulator with shot sampling and readout noise.

Qubit ``q`` is bit ``q`` of the basis index (little-endian).  Histogram keys
are bitstrings in variable order, ``key[q]`` being the outcome of qubit ``q``;
see :mod:`isingscreen.problem` for the convention.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numba as nb
import numpy as np

from .problem import IsingModel, MAX_ENUMERATION_QUBITS, index_to_str, bits_to_index

# kind -> number of qubits, whether it takes an angle
GATES = {
    "x": (1, False),
    "h": (1, False),
    "rx": (1, True),
    "ry": (1, True),
    "rz": (1, True),
    "cnot": (2, False),
    "rzz": (2, True),
}


def rotation_matrix(kind: str, theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    if kind == "ry":
        return np.array([[c, -s], [s, c]], dtype=complex)
    if kind == "rx":
        return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)
    if kind == "rz":
        return np.array([[c - 1j * s, 0], [0, c + 1j * s]], dtype=complex)
    raise ValueError(f"no rotation matrix for {kind!r}")


@dataclass(frozen=True)
class Gate:
    """One gate record.

    Rotation angles are either the literal ``angle`` or ``scale * params[param]``.
    All rotations follow ``R_P(t) = exp(-i t P / 2)``; ``rzz`` uses ``P = Z (x) Z``.
    For ``cnot`` the qubits are ``(control, target)``.
    """

    kind: str
    qubits: tuple[int, ...]
    param: int | None = None
    scale: float = 1.0
    angle: float | None = None

    def resolve(self, params) -> float:
        if self.param is not None:
            return self.scale * float(params[self.param])
        return 0.0 if self.angle is None else float(self.angle)

    def to_json(self) -> dict:
        doc = {"kind": self.kind, "qubits": list(self.qubits)}
        if self.param is not None:
            doc["param"] = self.param
            doc["scale"] = self.scale
        elif self.angle is not None:
            doc["angle"] = self.angle
        return doc


@dataclass
class Circuit:
    n_qubits: int
    gates: list[Gate] = field(default_factory=list)

    def add(self, kind: str, *qubits: int, param: int | None = None, scale: float = 1.0,
            angle: float | None = None) -> "Circuit":
        if kind not in GATES:
            raise ValueError(f"unknown gate {kind!r}")
        arity, takes_angle = GATES[kind]
        if len(qubits) != arity:
            raise ValueError(f"{kind} acts on {arity} qubit(s), got {qubits}")
        if any(not 0 <= q < self.n_qubits for q in qubits):
            raise IndexError(f"qubit index out of range in {kind}{qubits} for {self.n_qubits} qubits")
        if arity == 2 and qubits[0] == qubits[1]:
            raise ValueError(f"{kind} needs two distinct qubits")
        if not takes_angle and (param is not None or angle is not None):
            raise ValueError(f"{kind} takes no angle")
        self.gates.append(Gate(kind, tuple(qubits), param, scale, angle))
        return self

    @property
    def num_params(self) -> int:
        idx = [g.param for g in self.gates if g.param is not None]
        return max(idx) + 1 if idx else 0

    def count(self, kind: str) -> int:
        return sum(g.kind == kind for g in self.gates)

    def to_json(self) -> dict:
        return {"n_qubits": self.n_qubits, "gates": [g.to_json() for g in self.gates]}

    @classmethod
    def from_json(cls, doc) -> "Circuit":
        c = cls(int(doc["n_qubits"]))
        for g in doc["gates"]:
            c.add(g["kind"], *g["qubits"], param=g.get("param"), scale=g.get("scale", 1.0),
                  angle=g.get("angle"))
        return c


class Statevector:
    """``2**n`` complex amplitudes. Owned exclusively while gates are applied."""

    def __init__(self, amps, n_qubits: int | None = None):
        amps = np.asarray(amps, dtype=complex).ravel()
        n = int(round(np.log2(amps.size))) if amps.size else -1
        if amps.size == 0 or 1 << n != amps.size:
            raise ValueError(f"amplitude count {amps.size} is not a power of two")
        if n_qubits is not None and n_qubits != n:
            raise ValueError(f"{amps.size} amplitudes do not describe {n_qubits} qubits")
        self.amps = amps
        self.n_qubits = n

    @classmethod
    def zero(cls, n_qubits: int) -> "Statevector":
        if n_qubits > MAX_ENUMERATION_QUBITS:
            raise ValueError(f"at most {MAX_ENUMERATION_QUBITS} qubits supported")
        amps = np.zeros(1 << n_qubits, dtype=complex)
        amps[0] = 1.0
        return cls(amps)

    @classmethod
    def basis(cls, bits) -> "Statevector":
        bits_str = bits if isinstance(bits, str) else "".join(str(int(b)) for b in bits)
        sv = cls.zero(len(bits_str))
        sv.amps[0] = 0.0
        sv.amps[bits_to_index(bits_str)] = 1.0
        return sv

    def copy(self) -> "Statevector":
        return Statevector(self.amps.copy())

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amps) ** 2

    def norm(self) -> float:
        return float(np.sqrt(self.probabilities().sum()))

    def inner(self, other: "Statevector") -> complex:
        """``<self|other>``."""
        if other.n_qubits != self.n_qubits:
            raise ValueError("dimension mismatch")
        return complex(np.vdot(self.amps, other.amps))

    def top(self) -> tuple[str, float]:
        p = self.probabilities()
        k = int(np.argmax(p))
        return index_to_str(k, self.n_qubits), float(p[k])

    def __repr__(self):
        return f"Statevector(n_qubits={self.n_qubits})"


# --------------------------------------------------------------------------
# execution kernel
#
# A circuit is lowered to integer opcode arrays once and executed by a single
# jitted loop; amplitudes stay real while every gate is real.

_OPCODES = {"x": 0, "h": 1, "rx": 2, "ry": 3, "rz": 4, "cnot": 5, "rzz": 6}
_COMPLEX_KINDS = {"rx", "rz", "rzz"}


@nb.njit(cache=True)
def _cnot(amps, control, target):
    mc = 1 << control
    mt = 1 << target
    for k in range(amps.size):
        if (k & mc) and not (k & mt):
            t = amps[k]
            amps[k] = amps[k | mt]
            amps[k | mt] = t


@nb.njit(cache=True)
def _apply_2x2(amps, q, u00, u01, u10, u11):
    m = 1 << q
    for base in range(0, amps.size, 2 * m):
        for k in range(base, base + m):
            a0 = amps[k]
            a1 = amps[k + m]
            amps[k] = u00 * a0 + u01 * a1
            amps[k + m] = u10 * a0 + u11 * a1


@nb.njit(cache=True)
def _run_real(amps, ops, qa, qb, angles):
    r = 1.0 / np.sqrt(2.0)
    for g in range(ops.size):
        op = ops[g]
        if op == 5:
            _cnot(amps, qa[g], qb[g])
        elif op == 0:
            _apply_2x2(amps, qa[g], 0.0, 1.0, 1.0, 0.0)
        elif op == 1:
            _apply_2x2(amps, qa[g], r, r, r, -r)
        else:
            c = np.cos(0.5 * angles[g])
            s = np.sin(0.5 * angles[g])
            _apply_2x2(amps, qa[g], c, -s, s, c)
    return amps


@nb.njit(cache=True)
def _run_complex(amps, ops, qa, qb, angles):
    r = 1.0 / np.sqrt(2.0)
    for g in range(ops.size):
        op = ops[g]
        c = np.cos(0.5 * angles[g])
        s = np.sin(0.5 * angles[g])
        if op == 5:
            _cnot(amps, qa[g], qb[g])
        elif op == 6:
            ma = 1 << qa[g]
            mb = 1 << qb[g]
            same = c - 1j * s
            diff = c + 1j * s
            for k in range(amps.size):
                if ((k & ma) != 0) == ((k & mb) != 0):
                    amps[k] *= same
                else:
                    amps[k] *= diff
        elif op == 0:
            _apply_2x2(amps, qa[g], 0.0, 1.0, 1.0, 0.0)
        elif op == 1:
            _apply_2x2(amps, qa[g], r, r, r, -r)
        elif op == 2:
            _apply_2x2(amps, qa[g], c, -1j * s, -1j * s, c)
        elif op == 3:
            _apply_2x2(amps, qa[g], c, -s, s, c)
        else:
            _apply_2x2(amps, qa[g], c - 1j * s, 0.0, 0.0, c + 1j * s)
    return amps


# Reverse pass for gradients.  At gate g, ``phi`` is the state just after g
# and ``lam`` the cotangent pulled back to the same point; for a rotation
# exp(-i t P / 2) the derivative is Im <lam| P |phi>.


@nb.njit(cache=True)
def _back_real(phi, lam, ops, qa, qb, angles, out):
    r = 1.0 / np.sqrt(2.0)
    for g in range(ops.size - 1, -1, -1):
        op = ops[g]
        if op == 5:
            _cnot(phi, qa[g], qb[g])
            _cnot(lam, qa[g], qb[g])
        elif op == 0:
            _apply_2x2(phi, qa[g], 0.0, 1.0, 1.0, 0.0)
            _apply_2x2(lam, qa[g], 0.0, 1.0, 1.0, 0.0)
        elif op == 1:
            _apply_2x2(phi, qa[g], r, r, r, -r)
            _apply_2x2(lam, qa[g], r, r, r, -r)
        else:
            m = 1 << qa[g]
            acc = 0.0
            for base in range(0, phi.size, 2 * m):
                for k in range(base, base + m):
                    acc += lam[k + m] * phi[k] - lam[k] * phi[k + m]
            out[g] = acc
            c = np.cos(0.5 * angles[g])
            s = np.sin(0.5 * angles[g])
            _apply_2x2(phi, qa[g], c, s, -s, c)
            _apply_2x2(lam, qa[g], c, s, -s, c)
    return out


@nb.njit(cache=True)
def _back_complex(phi, lam, ops, qa, qb, angles, out):
    r = 1.0 / np.sqrt(2.0)
    for g in range(ops.size - 1, -1, -1):
        op = ops[g]
        c = np.cos(0.5 * angles[g])
        s = np.sin(0.5 * angles[g])
        if op == 5:
            _cnot(phi, qa[g], qb[g])
            _cnot(lam, qa[g], qb[g])
        elif op == 0:
            _apply_2x2(phi, qa[g], 0.0, 1.0, 1.0, 0.0)
            _apply_2x2(lam, qa[g], 0.0, 1.0, 1.0, 0.0)
        elif op == 1:
            _apply_2x2(phi, qa[g], r, r, r, -r)
            _apply_2x2(lam, qa[g], r, r, r, -r)
        elif op == 6:
            ma = 1 << qa[g]
            mb = 1 << qb[g]
            acc = 0.0j
            for k in range(phi.size):
                z = np.conj(lam[k]) * phi[k]
                if ((k & ma) != 0) == ((k & mb) != 0):
                    acc += z
                    phi[k] *= c + 1j * s
                    lam[k] *= c + 1j * s
                else:
                    acc -= z
                    phi[k] *= c - 1j * s
                    lam[k] *= c - 1j * s
            out[g] = acc.imag
        else:
            m = 1 << qa[g]
            acc = 0.0j
            for base in range(0, phi.size, 2 * m):
                for k in range(base, base + m):
                    l0 = np.conj(lam[k])
                    l1 = np.conj(lam[k + m])
                    if op == 2:
                        acc += l0 * phi[k + m] + l1 * phi[k]
                    elif op == 3:
                        acc += 1j * (l1 * phi[k] - l0 * phi[k + m])
                    else:
                        acc += l0 * phi[k] - l1 * phi[k + m]
            out[g] = acc.imag
            if op == 2:
                _apply_2x2(phi, qa[g], c, 1j * s, 1j * s, c)
                _apply_2x2(lam, qa[g], c, 1j * s, 1j * s, c)
            elif op == 3:
                _apply_2x2(phi, qa[g], c, s, -s, c)
                _apply_2x2(lam, qa[g], c, s, -s, c)
            else:
                _apply_2x2(phi, qa[g], c + 1j * s, 0.0, 0.0, c - 1j * s)
                _apply_2x2(lam, qa[g], c + 1j * s, 0.0, 0.0, c - 1j * s)
    return out


class Program:
    """Opcode arrays for one circuit structure."""

    def __init__(self, c: Circuit):
        self.n = c.n_qubits
        self.ops = np.array([_OPCODES[g.kind] for g in c.gates], dtype=np.int64)
        self.qa = np.array([g.qubits[0] for g in c.gates], dtype=np.int64)
        self.qb = np.array([g.qubits[-1] for g in c.gates], dtype=np.int64)
        self.real = not any(g.kind in _COMPLEX_KINDS for g in c.gates)
        has_param = [g.param is not None for g in c.gates]
        self.param_index = np.array([g.param if g.param is not None else 0 for g in c.gates],
                                    dtype=np.int64)
        self.scale = np.array([g.scale if p else 0.0 for g, p in zip(c.gates, has_param)])
        self.literal = np.array([0.0 if p or g.angle is None else g.angle
                                 for g, p in zip(c.gates, has_param)])

    def angles(self, params) -> np.ndarray:
        if self.ops.size == 0:
            return np.zeros(0)
        params = np.asarray(params, dtype=float)
        if params.size == 0:
            return self.literal.copy()
        return self.literal + self.scale * params[self.param_index]

    def run(self, amps: np.ndarray, angles: np.ndarray) -> np.ndarray:
        angles = np.asarray(angles, dtype=float)
        if amps.dtype == np.float64:
            return _run_real(amps, self.ops, self.qa, self.qb, angles)
        return _run_complex(amps.astype(complex, copy=False), self.ops, self.qa, self.qb, angles)

    def backprop(self, amps: np.ndarray, lam: np.ndarray, angles: np.ndarray) -> np.ndarray:
        """Per-gate angle derivatives given the output state and cotangent; overwrites both."""
        out = np.zeros(self.ops.size)
        angles = np.asarray(angles, dtype=float)
        if amps.dtype == np.float64 and lam.dtype == np.float64:
            return _back_real(amps, lam, self.ops, self.qa, self.qb, angles, out)
        return _back_complex(amps.astype(complex), lam.astype(complex),
                             self.ops, self.qa, self.qb, angles, out)


def compile_circuit(c: Circuit) -> Program:
    """Lowered form of ``c``; cached on the circuit until gates are added."""
    cached = c.__dict__.get("_program")
    if cached is None or cached[0] != len(c.gates):
        cached = (len(c.gates), Program(c))
        c.__dict__["_program"] = cached
    return cached[1]


def gate_angles(c: Circuit, params) -> np.ndarray:
    need = c.num_params
    if need and len(params) < need:
        raise IndexError(f"circuit uses {need} parameters, {len(params)} given")
    return compile_circuit(c).angles(params)


def run_amplitudes(c: Circuit, params=(), psi0: Statevector | None = None,
                   angles: Sequence[float] | None = None) -> np.ndarray:
    """Raw output amplitudes; real dtype when the circuit and input are real."""
    if psi0 is not None and psi0.n_qubits != c.n_qubits:
        raise ValueError(f"circuit has {c.n_qubits} qubits, state has {psi0.n_qubits}")
    if angles is None:
        angles = gate_angles(c, params)
    prog = compile_circuit(c)
    if psi0 is None:
        amps = np.zeros(1 << c.n_qubits, dtype=float if prog.real else complex)
        amps[0] = 1.0
    elif prog.real and not psi0.amps.imag.any():
        amps = psi0.amps.real.copy()
    else:
        amps = psi0.amps.copy()
    return prog.run(amps, angles)


def backprop(c: Circuit, params, amps: np.ndarray, cotangent: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. ``params`` of a real objective ``f(psi)`` at ``psi = amps``.

    ``amps`` must be the circuit output from ``|0...0>`` at ``params`` and
    ``cotangent`` is ``df/dpsi*`` (for ``f = <psi|D|psi>`` that is ``D psi``).
    Cost is about three forward passes regardless of the parameter count.
    """
    prog = compile_circuit(c)
    angles = prog.angles(params)
    per_gate = prog.backprop(np.array(amps), np.array(cotangent), angles)
    return np.bincount(prog.param_index, weights=prog.scale * per_gate, minlength=c.num_params)


def apply_circuit(c: Circuit, params=(), psi0: Statevector | None = None,
                  angles: Sequence[float] | None = None) -> Statevector:
    """Run ``c`` on ``psi0`` (default ``|0...0>``) and return a new state.

    ``angles`` overrides the per-gate resolved angles; parameter-shift
    gradients use it to shift one gate occurrence at a time.
    """
    return Statevector(run_amplitudes(c, params, psi0, angles))


# --------------------------------------------------------------------------
# measurement


def diag_expectation(m: IsingModel, psi: Statevector) -> float:
    """``<psi|H|psi>`` for the diagonal Ising Hamiltonian (offset excluded)."""
    if psi.n_qubits != m.n:
        raise ValueError(f"state has {psi.n_qubits} qubits, model has {m.n}")
    return float(psi.probabilities() @ m.diagonal())


@dataclass(frozen=True)
class ShotHistogram:
    """Measurement counts keyed by variable-order bitstrings."""

    counts: Mapping[str, int]
    shots: int
    n_qubits: int

    def __post_init__(self):
        total = sum(self.counts.values())
        if total != self.shots:
            raise ValueError(f"counts sum to {total}, expected {self.shots}")
        if any(len(k) != self.n_qubits for k in self.counts):
            raise ValueError("histogram key length does not match qubit count")

    @classmethod
    def from_vector(cls, counts: np.ndarray, n_qubits: int) -> "ShotHistogram":
        nz = np.flatnonzero(counts)
        return cls({index_to_str(int(k), n_qubits): int(counts[k]) for k in nz},
                   int(counts.sum()), n_qubits)

    def to_vector(self) -> np.ndarray:
        vec = np.zeros(1 << self.n_qubits, dtype=np.int64)
        for key, c in self.counts.items():
            vec[bits_to_index(key)] += c
        return vec

    def frequencies(self) -> dict[str, float]:
        return {k: c / self.shots for k, c in self.counts.items()}

    def most_frequent(self) -> tuple[str, float]:
        key = max(sorted(self.counts), key=self.counts.__getitem__)
        return key, self.counts[key] / self.shots

    def expectation(self, m: IsingModel) -> float:
        """Sample-mean Ising energy (offset excluded)."""
        return sum(c * m.energy(k) for k, c in self.counts.items()) / self.shots

    def to_json(self) -> dict:
        return dict(sorted(self.counts.items()))

    @classmethod
    def from_json(cls, doc: Mapping[str, int]) -> "ShotHistogram":
        if not doc:
            raise ValueError("empty histogram")
        n = len(next(iter(doc)))
        return cls(dict(doc), int(sum(doc.values())), n)

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def rng_from(seed) -> np.random.Generator:
    """PCG64 generator; accepts an int, a SeedSequence or an existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


def sample_counts(probs: np.ndarray, shots: int, seed, method: str = "icdf") -> np.ndarray:
    """Dense count vector of ``shots`` i.i.d. draws from ``probs``.

    ``"icdf"`` inverts the cumulative distribution shot by shot;
    ``"multinomial"`` draws the whole count vector at once, which has the
    same distribution and costs O(2**n) instead of O(shots log 2**n).
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    rng = rng_from(seed)
    p = np.asarray(probs, dtype=float)
    if method == "multinomial":
        return rng.multinomial(shots, p / p.sum())
    if method != "icdf":
        raise ValueError(f"unknown sampling method {method!r}")
    cdf = np.cumsum(p)
    u = rng.random(shots) * cdf[-1]
    idx = np.searchsorted(cdf, u, side="right")
    np.minimum(idx, p.size - 1, out=idx)
    return np.bincount(idx, minlength=p.size)


def sample(psi: Statevector, shots: int, seed=None) -> ShotHistogram:
    return ShotHistogram.from_vector(sample_counts(psi.probabilities(), shots, seed), psi.n_qubits)


@dataclass(frozen=True)
class ReadoutNoise:
    """Independent per-qubit assignment errors.

    ``p10[q]`` = P(read 1 | true 0), ``p01[q]`` = P(read 0 | true 1).
    """

    p10: tuple[float, ...]
    p01: tuple[float, ...]

    def __post_init__(self):
        p10 = tuple(float(p) for p in self.p10)
        p01 = tuple(float(p) for p in self.p01)
        if len(p10) != len(p01):
            raise ValueError("p10 and p01 must have one entry per qubit")
        if any(not 0.0 <= p <= 1.0 for p in p10 + p01):
            raise ValueError("flip probabilities must lie in [0, 1]")
        object.__setattr__(self, "p10", p10)
        object.__setattr__(self, "p01", p01)

    @classmethod
    def uniform(cls, n: int, p10: float, p01: float | None = None) -> "ReadoutNoise":
        return cls((p10,) * n, ((p10 if p01 is None else p01),) * n)

    @property
    def n_qubits(self) -> int:
        return len(self.p10)

    def to_json(self) -> dict:
        return {"qubits": [{"p10": a, "p01": b} for a, b in zip(self.p10, self.p01)]}

    @classmethod
    def from_json(cls, doc) -> "ReadoutNoise":
        qs = doc["qubits"]
        return cls(tuple(q["p10"] for q in qs), tuple(q["p01"] for q in qs))


def noisy_counts(counts: np.ndarray, noise: ReadoutNoise, seed) -> np.ndarray:
    """Push a dense count vector through per-qubit bit flips, shot by shot."""
    rng = rng_from(seed)
    n = noise.n_qubits
    if counts.size != 1 << n:
        raise ValueError(f"noise model covers {n} qubits, counts have {counts.size} entries")
    outcomes = np.repeat(np.arange(counts.size, dtype=np.int64), counts)
    for q in range(n):
        bit = (outcomes >> q) & 1
        p = np.where(bit == 1, noise.p01[q], noise.p10[q])
        flip = rng.random(outcomes.size) < p
        outcomes ^= flip.astype(np.int64) << q
    return np.bincount(outcomes, minlength=counts.size)


def apply_readout_noise(hist: ShotHistogram, noise: ReadoutNoise, seed=None) -> ShotHistogram:
    if noise.n_qubits != hist.n_qubits:
        raise ValueError("noise model and histogram disagree on the qubit count")
    return ShotHistogram.from_vector(noisy_counts(hist.to_vector(), noise, seed), hist.n_qubits)
