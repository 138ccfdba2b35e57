"""Excited states by deflation: overlap-penalized VQD and computational-basis cVQD.

VQD penalizes ``beta * |<psi|ref>|^2`` against previously optimized ansatz
states; on a sampled backend each overlap comes from a simulated destructive
swap test.  cVQD keeps only the previous *bitstrings* and penalizes the
probability of measuring them, which on a sampled backend is the observed hit
frequency in the same histogram that estimates the energy.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .ansatz import AnsatzSpec, build_ansatz
from .problem import IsingModel, bits_to_index, decode_groups
from .sim import ShotHistogram, Statevector, rng_from
from .vqe import Backend, OptimizerConfig, VqeResult, vqe_run


@dataclass
class LedgerEntry:
    bitstring: str
    beta: float
    energy: float
    state: Statevector | None = field(default=None, repr=False)


@dataclass
class DeflationLedger:
    entries: list[LedgerEntry] = field(default_factory=list)

    def add(self, bitstring: str, beta: float, energy: float, state: Statevector | None = None):
        if beta <= 0:
            raise ValueError("penalty weight must be positive")
        if bitstring in self.bitstrings:
            raise ValueError(f"{bitstring} is already in the ledger")
        self.entries.append(LedgerEntry(bitstring, float(beta), float(energy), state))

    @property
    def bitstrings(self) -> list[str]:
        return [e.bitstring for e in self.entries]

    def __len__(self):
        return len(self.entries)

    def indices(self) -> np.ndarray:
        return np.array([bits_to_index(e.bitstring) for e in self.entries], dtype=np.int64)

    def betas(self) -> np.ndarray:
        return np.array([e.beta for e in self.entries])


# --------------------------------------------------------------------------
# objectives


def _probabilities(psi) -> tuple[np.ndarray, int]:
    if isinstance(psi, ShotHistogram):
        return psi.to_vector() / psi.shots, psi.n_qubits
    return psi.probabilities(), psi.n_qubits


def cvqd_objective(m: IsingModel, psi: Statevector | ShotHistogram, ledger: DeflationLedger) -> float:
    """``<H> + sum_k beta_k P(k)`` with ``P`` from amplitudes or observed frequencies."""
    probs, n = _probabilities(psi)
    if n != m.n:
        raise ValueError(f"state has {n} qubits, model has {m.n}")
    if any(len(b) != m.n for b in ledger.bitstrings):
        raise ValueError("ledger bitstrings do not match the model size")
    energy = float(probs @ m.diagonal())
    if not len(ledger):
        return energy
    return energy + float(ledger.betas() @ probs[ledger.indices()])


def swap_test_estimate(overlap_sq: float, shots: int, rng) -> float:
    """Destructive swap-test estimate of ``|<a|b>|^2`` from ``shots`` repetitions.

    The ancilla-free swap test succeeds with probability ``(1 + |<a|b>|^2) / 2``;
    the estimate ``2 * successes / shots - 1`` is clamped to ``[0, 1]``.
    """
    rng = rng_from(rng)
    p = min(max((1.0 + overlap_sq) / 2.0, 0.0), 1.0)
    successes = rng.binomial(shots, p)
    return float(min(max(2.0 * successes / shots - 1.0, 0.0), 1.0))


def vqd_objective(m: IsingModel, psi: Statevector, refs: Sequence[tuple[Statevector, float]],
                  shots: int | None = None, seed=None) -> float:
    """``<H> + sum beta |<psi|ref>|^2``; overlaps are swap-test estimates when ``shots`` is given."""
    if psi.n_qubits != m.n or any(r.n_qubits != m.n for r, _ in refs):
        raise ValueError("state dimensions do not match the model")
    rng = rng_from(seed)
    value = float(psi.probabilities() @ m.diagonal())
    for ref, beta in refs:
        ov = abs(np.vdot(ref.amps, psi.amps)) ** 2
        if shots is not None:
            ov = swap_test_estimate(ov, shots, rng)
        value += beta * ov
    return value


class CvqdPenalty:
    """``sum beta_k P(k)`` over ledger bitstrings, from probabilities or observed frequencies."""

    def __init__(self, ledger: DeflationLedger):
        self.idx = ledger.indices()
        self.betas = ledger.betas()

    def __call__(self, amps, probs, freqs, rng) -> float:
        p = probs if freqs is None else freqs
        return float(self.betas @ p[self.idx])

    def cotangent(self, amps):
        out = np.zeros_like(amps)
        out[self.idx] = self.betas * amps[self.idx]
        return out


class VqdPenalty:
    """``sum beta |<ref|psi>|^2``; swap-test estimates when ``shots`` is set."""

    def __init__(self, refs: Sequence[tuple[np.ndarray, float]], shots: int | None = None):
        self.refs = [np.asarray(a) for a, _ in refs]
        self.betas = [float(b) for _, b in refs]
        self.shots = shots

    def __call__(self, amps, probs, freqs, rng) -> float:
        total = 0.0
        for ref, beta in zip(self.refs, self.betas):
            ov = abs(np.vdot(ref, amps)) ** 2
            if self.shots is not None:
                ov = swap_test_estimate(ov, self.shots, rng)
            total += beta * ov
        return total

    def cotangent(self, amps):
        if self.shots is not None:
            raise ValueError("sampled overlaps have no gradient")
        out = np.zeros(amps.shape, dtype=np.result_type(amps, *self.refs))
        for ref, beta in zip(self.refs, self.betas):
            out += beta * np.vdot(ref, amps) * ref
        return out


def cvqd_penalty(ledger: DeflationLedger) -> CvqdPenalty:
    return CvqdPenalty(ledger)


def vqd_penalty(refs: Sequence[tuple[np.ndarray, float]], shots: int | None) -> VqdPenalty:
    return VqdPenalty(refs, shots)


# --------------------------------------------------------------------------
# driver


def default_beta(m: IsingModel, factor: float = 2.0, samples: int = 4096, seed: int = 0) -> float:
    """``factor * (E_max - E_min)``: exact range for ``n <= 16``, else from random bitstrings."""
    if m.n <= 16:
        diag = m.diagonal()
    else:
        rng = rng_from(seed)
        xs = rng.integers(0, 2, size=(samples, m.n))
        diag = np.array([m.energy(x) for x in xs])
    spread = float(diag.max() - diag.min())
    return factor * spread if spread > 0 else 1.0


@dataclass
class DeflationResult:
    levels: list[VqeResult]
    mode: str
    betas: list[float]
    failed: list[int] = field(default_factory=list)

    @property
    def bitstrings(self) -> list[str]:
        return [r.top_bitstring for r in self.levels]

    @property
    def energies(self) -> list[float]:
        return [r.energy for r in self.levels]

    def to_json(self, m: IsingModel | None = None) -> dict:
        out = []
        for rank, r in enumerate(self.levels):
            rec = {
                "level": rank,
                "energy": r.energy,
                "bitstring": r.top_bitstring,
                "probability": r.top_probability,
                "groups": decode_groups(r.top_bitstring) if m is None or m.n % 2 == 0 else None,
                "failed": rank in self.failed,
            }
            if m is not None:
                rec["score"] = m.score(r.energy)
            out.append(rec)
        return {"mode": self.mode, "betas": self.betas, "levels": out}


def deflate(m: IsingModel, spec: AnsatzSpec, opt: OptimizerConfig, backend: Backend | None = None,
            k: int = 1, mode: str = "cvqd", beta: float | None = None, max_retries: int = 3,
            ground: VqeResult | None = None, stop=None) -> DeflationResult:
    """Ground state by VQE, then ``k`` penalized searches for successive excited states.

    ``beta`` is the penalty weight for every ledger entry (default
    :func:`default_beta`).  When a level returns an already-found bitstring the
    search is retried with fresh seeds up to ``max_retries`` times; a level that
    still collides is recorded in ``failed``.  ``stop(level, result)`` may end
    the sweep early (used by the screening workflow).
    """
    mode = mode.lower()
    if mode not in ("vqd", "cvqd"):
        raise ValueError(f"unknown deflation mode {mode!r}")
    if k < 0:
        raise ValueError("k must be >= 0")
    backend = backend or Backend.exact()
    beta = default_beta(m) if beta is None else float(beta)
    circuit = build_ansatz(spec, m)

    gs = ground or vqe_run(m, spec, opt, backend, circuit=circuit)
    levels = [gs]
    ledger = DeflationLedger()
    ledger.add(gs.top_bitstring, beta, gs.energy, gs.state)
    failed: list[int] = []
    if stop is not None and stop(0, gs):
        return DeflationResult(levels, mode, [beta], failed)

    for level in range(1, k + 1):
        result = None
        for attempt in range(max_retries + 1):
            level_opt = OptimizerConfig(**{**opt.__dict__, "seed": _level_seed(opt.seed, level, attempt)})
            if mode == "cvqd":
                penalty = cvqd_penalty(ledger)
            else:
                refs = [(e.state.amps, e.beta) for e in ledger.entries]
                penalty = vqd_penalty(refs, backend.shots)
            level_backend = backend if backend.is_exact else Backend(
                backend.shots, backend.noise, _level_seed(backend.seed, level, attempt))
            result = vqe_run(m, spec, level_opt, level_backend, penalty=penalty, circuit=circuit)
            if result.top_bitstring not in ledger.bitstrings:
                break
        levels.append(result)
        if result.top_bitstring in ledger.bitstrings:
            failed.append(level)
        else:
            ledger.add(result.top_bitstring, beta, result.energy, result.state)
        if stop is not None and stop(level, result):
            break
    return DeflationResult(levels, mode, [beta] * len(ledger), failed)


def _level_seed(seed: int, level: int, attempt: int) -> int:
    ss = np.random.SeedSequence([seed, level, attempt])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)
