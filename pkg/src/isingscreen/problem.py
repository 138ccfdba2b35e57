"""Binary encodings, QUBO/Ising model types and the exhaustive oracle.

Bit order convention used throughout the package: a bitstring ``"b0 b1 ... b(n-1)"``
lists variable 0 first, and variable ``i`` lives on qubit ``i``.  The dense
basis index of a bitstring is ``sum(b_i << i)`` (little-endian), so character 0
of the string is the *least* significant bit of the index.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

GROUP_CODES = {"H": (1, 0), "Me": (1, 1), "CN": (0, 0), "F": (0, 1)}
_CODE_TO_GROUP = {code: label for label, code in GROUP_CODES.items()}

MAX_ENUMERATION_QUBITS = 24
_CHUNK = 1 << 20


class EncodingError(ValueError):
    pass


class CapacityError(ValueError):
    pass


# --------------------------------------------------------------------------
# bitstrings


def as_bits(x, n: int | None = None) -> np.ndarray:
    """Coerce a ``"0101"`` string or a 0/1 sequence into an ``int8`` array."""
    if isinstance(x, str):
        if not set(x) <= {"0", "1"}:
            raise EncodingError(f"bitstring {x!r} contains characters other than 0/1")
        bits = np.frombuffer(x.encode("ascii"), dtype=np.uint8) - ord("0")
        bits = bits.astype(np.int8)
    else:
        bits = np.asarray(x, dtype=np.int8).ravel()
        if bits.size and not np.isin(bits, (0, 1)).all():
            raise EncodingError("bit values must be 0 or 1")
    if n is not None and bits.size != n:
        raise ValueError(f"expected {n} bits, got {bits.size}")
    return bits


def bits_to_str(bits) -> str:
    return "".join("1" if b else "0" for b in np.asarray(bits).ravel())


def bits_to_index(bits) -> int:
    bits = as_bits(bits)
    return int(sum(int(b) << i for i, b in enumerate(bits)))


def index_to_bits(k: int, n: int) -> np.ndarray:
    return np.array([(k >> i) & 1 for i in range(n)], dtype=np.int8)


def index_to_str(k: int, n: int) -> str:
    return "".join("1" if (k >> i) & 1 else "0" for i in range(n))


def all_bitstrings(n: int) -> np.ndarray:
    """All ``2**n`` bit vectors as a ``(2**n, n)`` array, row ``k`` = basis index ``k``."""
    k = np.arange(1 << n, dtype=np.int64)
    return ((k[:, None] >> np.arange(n)) & 1).astype(np.int8)


def encode_groups(labels: Sequence[str], site_count: int | None = None) -> np.ndarray:
    """Concatenate the 2-bit group codes of ``labels`` in site order R1..Rn."""
    if site_count is not None and len(labels) != site_count:
        raise EncodingError(f"expected {site_count} groups, got {len(labels)}")
    out = []
    for label in labels:
        try:
            out.extend(GROUP_CODES[label])
        except KeyError:
            raise EncodingError(f"unknown functional group {label!r}") from None
    return np.array(out, dtype=np.int8)


def decode_groups(x) -> list[str]:
    bits = as_bits(x)
    if bits.size % 2:
        raise EncodingError("group decoding needs an even number of bits")
    return [_CODE_TO_GROUP[(int(bits[i]), int(bits[i + 1]))] for i in range(0, bits.size, 2)]


def group_kinds(x) -> int:
    """Number of distinct functional groups present in a candidate."""
    return len(set(decode_groups(x)))


# --------------------------------------------------------------------------
# data


@dataclass(frozen=True)
class LabeledSample:
    x: np.ndarray
    y: float

    def __post_init__(self):
        bits = as_bits(self.x)
        bits.setflags(write=False)
        object.__setattr__(self, "x", bits)
        if not math.isfinite(self.y):
            raise ValueError(f"non-finite target {self.y!r}")
        object.__setattr__(self, "y", float(self.y))


def read_dataset(path) -> list[LabeledSample]:
    """Read a ``bits,target[,aux...]`` CSV file."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or reader.fieldnames[:2] != ["bits", "target"]:
            raise ValueError(f"{path}: header must start with 'bits,target'")
        samples = [LabeledSample(row["bits"], float(row["target"])) for row in reader]
    if samples:
        n = samples[0].x.size
        if any(s.x.size != n for s in samples):
            raise ValueError(f"{path}: inconsistent bitstring lengths")
    return samples


def write_dataset(samples: Iterable[LabeledSample], path, aux: dict[str, Sequence] | None = None):
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\n")
    aux = aux or {}
    writer.writerow(["bits", "target", *aux])
    for i, s in enumerate(samples):
        writer.writerow([bits_to_str(s.x), repr(s.y), *(col[i] for col in aux.values())])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


# --------------------------------------------------------------------------
# models


def _frozen(a, shape, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    if arr.shape != shape:
        raise ValueError(f"expected shape {shape}, got {arr.shape}")
    arr.setflags(write=False)
    return arr


def _strict_upper(mat, n: int) -> np.ndarray:
    mat = np.array(mat, dtype=float)
    if mat.shape != (n, n):
        raise ValueError(f"expected ({n}, {n}) coupling matrix, got {mat.shape}")
    lower = np.tril(mat, k=-1)
    if np.any(lower):
        # fold (j, i) entries onto (i, j)
        mat = mat + lower.T
    mat = np.triu(mat, k=1)
    mat.setflags(write=False)
    return mat


@dataclass(frozen=True)
class QuboModel:
    """``E(x) = w0 + sum_i linear[i] x_i + sum_{i<j} quadratic[i, j] x_i x_j``.

    ``quadratic`` is kept strictly upper triangular; entries passed below the
    diagonal are folded onto their transposed position.
    """

    n: int
    w0: float
    linear: np.ndarray
    quadratic: np.ndarray
    sense: str = "minimize"

    def __post_init__(self):
        if self.sense not in ("minimize", "maximize"):
            raise ValueError(f"sense must be 'minimize' or 'maximize', not {self.sense!r}")
        object.__setattr__(self, "w0", float(self.w0))
        object.__setattr__(self, "linear", _frozen(self.linear, (self.n,)))
        object.__setattr__(self, "quadratic", _strict_upper(self.quadratic, self.n))

    @classmethod
    def from_terms(cls, n, w0=0.0, linear=None, pairs=(), sense="minimize"):
        """Build from ``{i: Q_ii}`` / ``[(i, j, Q_ij), ...]`` style terms."""
        lin = np.zeros(n)
        for i, v in (linear or {}).items():
            lin[i] += v
        quad = np.zeros((n, n))
        for i, j, v in pairs:
            if i == j:
                raise ValueError("pair terms need distinct indices")
            a, b = min(i, j), max(i, j)
            quad[a, b] += v
        return cls(n, w0, lin, quad, sense)

    def energy(self, x) -> float:
        return qubo_energy(self, x)

    def energies(self, xs: np.ndarray) -> np.ndarray:
        """Vectorized energies for a ``(m, n)`` batch of bit vectors."""
        xs = np.asarray(xs, dtype=float)
        return self.w0 + xs @ self.linear + np.einsum("si,ij,sj->s", xs, self.quadratic, xs)

    def to_json(self) -> dict:
        iu, ju = np.nonzero(self.quadratic)
        return {
            "n": self.n,
            "w0": self.w0,
            "linear": self.linear.tolist(),
            "quadratic": [[int(i), int(j), float(self.quadratic[i, j])] for i, j in zip(iu, ju)],
            "sense": self.sense,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "QuboModel":
        n = int(doc["n"])
        quad = np.zeros((n, n))
        for i, j, v in doc.get("quadratic", []):
            a, b = min(int(i), int(j)), max(int(i), int(j))
            quad[a, b] += float(v)
        return cls(n, doc.get("w0", 0.0), doc["linear"], quad, doc.get("sense", "minimize"))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "QuboModel":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def qubo_energy(m: QuboModel, x) -> float:
    bits = as_bits(x)
    if bits.size != m.n:
        raise ValueError(f"bitstring length {bits.size} does not match model size {m.n}")
    xf = bits.astype(float)
    return float(m.w0 + m.linear @ xf + xf @ m.quadratic @ xf)


@dataclass(frozen=True)
class IsingModel:
    """Diagonal Hamiltonian ``sum_i h_i Z_i + sum_{i<j} J_ij Z_i Z_j`` plus a scalar offset.

    ``negated`` records that the coefficients were sign-flipped to turn a
    maximization into a minimization; :meth:`score` undoes it for reporting.
    """

    n: int
    h: np.ndarray
    j: np.ndarray
    offset: float = 0.0
    negated: bool = False
    _diag: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "h", _frozen(self.h, (self.n,)))
        object.__setattr__(self, "j", _strict_upper(self.j, self.n))
        object.__setattr__(self, "offset", float(self.offset))

    @property
    def couplings(self) -> list[tuple[int, int, float]]:
        iu, ju = np.nonzero(self.j)
        return [(int(a), int(b), float(self.j[a, b])) for a, b in zip(iu, ju)]

    def energy(self, x) -> float:
        """Ising energy of a bitstring, without the offset."""
        return ising_energy(self, spins(x))

    def total_energy(self, x) -> float:
        return self.energy(x) + self.offset

    def score(self, energy: float) -> float:
        """User-facing value of an internal energy (offset added, sign restored)."""
        total = energy + self.offset
        return -total if self.negated else total

    def diagonal(self) -> np.ndarray:
        """Diagonal of the Hamiltonian over all ``2**n`` basis states (offset excluded)."""
        if self._diag is None:
            if self.n > MAX_ENUMERATION_QUBITS:
                raise CapacityError(f"{self.n} qubits exceeds the {MAX_ENUMERATION_QUBITS}-qubit bound")
            diag = np.empty(1 << self.n)
            for start in range(0, 1 << self.n, _CHUNK):
                stop = min(start + _CHUNK, 1 << self.n)
                diag[start:stop] = _diag_chunk(self.h, self.j, start, stop)
            diag.setflags(write=False)
            object.__setattr__(self, "_diag", diag)
        return self._diag

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "h": self.h.tolist(),
            "j": [[a, b, v] for a, b, v in self.couplings],
            "offset": self.offset,
            "negated": self.negated,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "IsingModel":
        n = int(doc["n"])
        jm = np.zeros((n, n))
        for a, b, v in doc.get("j", []):
            jm[min(a, b), max(a, b)] += v
        return cls(n, doc["h"], jm, doc.get("offset", 0.0), bool(doc.get("negated", False)))


def _diag_chunk(h, j, start, stop) -> np.ndarray:
    k = np.arange(start, stop, dtype=np.int64)
    n = h.size
    z = 1.0 - 2.0 * ((k[:, None] >> np.arange(n)) & 1)
    return z @ h + np.einsum("si,ij,sj->s", z, j, z)


def spins(x) -> np.ndarray:
    """Map bits to Z eigenvalues: bit 0 -> +1, bit 1 -> -1."""
    return 1 - 2 * as_bits(x).astype(np.int64)


def ising_energy(m: IsingModel, z) -> float:
    z = np.asarray(z, dtype=float)
    if z.size != m.n:
        raise ValueError(f"spin vector length {z.size} does not match model size {m.n}")
    return float(m.h @ z + z @ m.j @ z)


def qubo_to_ising(m: QuboModel) -> IsingModel:
    """Substitute ``x_i = (1 - z_i) / 2``.

    For a maximization problem the QUBO is negated first, so the Ising ground
    state is the QUBO maximizer and ``IsingModel.score`` reports the original value.
    """
    sign = -1.0 if m.sense == "maximize" else 1.0
    a = sign * m.linear
    b = sign * m.quadratic
    w0 = sign * m.w0
    sym = b + b.T
    h = -a / 2 - sym.sum(axis=1) / 4
    jm = b / 4
    offset = w0 + a.sum() / 2 + b.sum() / 4
    return IsingModel(m.n, h, jm, offset, negated=(m.sense == "maximize"))


# --------------------------------------------------------------------------
# exhaustive oracle


@dataclass(frozen=True)
class SpectrumSlice:
    """Lowest distinct energy levels; each level carries every degenerate bitstring.

    Energies are internal (offset excluded, minimization sign).
    """

    levels: tuple[tuple[float, tuple[str, ...]], ...]

    @property
    def energies(self) -> list[float]:
        return [e for e, _ in self.levels]

    def bitstrings(self, level: int) -> tuple[str, ...]:
        return self.levels[level][1]

    def flat(self) -> list[tuple[float, str]]:
        return [(e, b) for e, bs in self.levels for b in bs]

    def __len__(self):
        return len(self.levels)


def exact_spectrum(m: IsingModel, k: int = 1, rtol: float = 1e-12) -> SpectrumSlice:
    """The ``k`` lowest distinct energy levels by full enumeration of the diagonal."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if m.n > MAX_ENUMERATION_QUBITS:
        raise CapacityError(f"{m.n} qubits exceeds the {MAX_ENUMERATION_QUBITS}-qubit enumeration bound")
    diag = m.diagonal()
    order = np.argsort(diag, kind="stable")
    levels: list[tuple[float, list[str]]] = []
    for idx in order:
        e = float(diag[idx])
        if levels and abs(e - levels[-1][0]) <= rtol * max(abs(e), abs(levels[-1][0]), 1.0):
            levels[-1][1].append(index_to_str(int(idx), m.n))
            continue
        if len(levels) == k:
            break
        levels.append((e, [index_to_str(int(idx), m.n)]))
    return SpectrumSlice(tuple((e, tuple(bs)) for e, bs in levels))
