"""Variational ground-state search over a diagonal Ising Hamiltonian.

The objective is evaluated either exactly from the statevector or from a
finite-shot histogram (optionally passed through readout noise).  An optional
penalty hook lets the deflation module add overlap terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import basinhopping, minimize

from .ansatz import AnsatzSpec, build_ansatz
from .problem import IsingModel, index_to_str
from .sim import (Circuit, ReadoutNoise, Statevector, backprop, gate_angles, noisy_counts,
                  rng_from, run_amplitudes, sample_counts)

# penalty(amps, probs, freqs, rng) -> float; freqs is None on the exact backend.  A
# penalty may also define ``cotangent(amps)`` (its derivative w.r.t. conj(amps)) so
# gradient-based optimizers can use it on the exact backend.
Penalty = Callable[[np.ndarray, np.ndarray, "np.ndarray | None", np.random.Generator], float]


class OptimizationError(RuntimeError):
    """Objective became non-finite; ``params`` holds the offending point."""

    def __init__(self, msg, params=None, value=None):
        super().__init__(msg)
        self.params = params
        self.value = value


@dataclass(frozen=True)
class Backend:
    shots: int | None = None
    noise: ReadoutNoise | None = None
    seed: int = 0

    def __post_init__(self):
        if self.shots is not None and self.shots < 1:
            raise ValueError("shots must be >= 1")
        if self.noise is not None and self.shots is None:
            raise ValueError("readout noise needs a sampled backend")

    @classmethod
    def exact(cls) -> "Backend":
        return cls()

    @classmethod
    def sampled(cls, shots: int, seed: int = 0, noise: ReadoutNoise | None = None) -> "Backend":
        return cls(shots, noise, seed)

    @property
    def is_exact(self) -> bool:
        return self.shots is None

    def to_json(self) -> dict:
        if self.is_exact:
            return {"kind": "exact"}
        doc = {"kind": "sampled", "shots": self.shots, "seed": self.seed}
        if self.noise is not None:
            doc["noise"] = self.noise.to_json()
        return doc

    @classmethod
    def from_json(cls, doc) -> "Backend":
        if doc.get("kind", "exact") == "exact":
            return cls.exact()
        noise = ReadoutNoise.from_json(doc["noise"]) if doc.get("noise") else None
        return cls.sampled(int(doc["shots"]), int(doc.get("seed", 0)), noise)


@dataclass
class OptimizerConfig:
    """Classical optimizer settings.

    ``simplex`` is Nelder-Mead with random restarts; ``spsa`` uses the gain
    sequences ``a_k = a / (k + 1 + A)**alpha`` and ``c_k = c / (k + 1)**gamma``.
    ``A`` defaults to ``max_iter / 10``.  ``init_step`` is the edge length of
    the initial simplex.  ``lbfgs`` (exact backend only) uses adjoint
    gradients; with ``hops > 0`` each restart is a basin-hopping chain of that
    many perturbed local searches (uniform steps of ``hop_step`` per angle,
    Metropolis temperature ``hop_temperature`` in energy units).  With
    ``patience`` set, restarts stop early once the best value has been matched
    (within ``f_tol``-scaled slack) that many times.
    """

    kind: str = "simplex"
    max_iter: int = 20000
    seed: int = 0
    restarts: int = 1
    a: float = 0.2
    c: float = 0.1
    A: float | None = None
    alpha: float = 0.602
    gamma: float = 0.101
    x_tol: float = 1e-5
    f_tol: float = 1e-9
    init_step: float = 0.1
    init_range: float = 0.1
    patience: int | None = None
    hops: int = 0
    hop_step: float = math.pi
    hop_temperature: float = 1.0

    def __post_init__(self):
        self.kind = self.kind.lower()
        if self.kind not in ("simplex", "spsa", "lbfgs"):
            raise ValueError(f"unknown optimizer {self.kind!r}")
        if self.max_iter < 1 or self.restarts < 1:
            raise ValueError("max_iter and restarts must be >= 1")
        gains = [self.a, self.c, self.alpha, self.gamma, self.x_tol, self.f_tol, self.init_step,
                 self.hop_step, self.hop_temperature]
        if min(gains) <= 0 or (self.A is not None and self.A < 0):
            raise ValueError("optimizer gains and tolerances must be positive")
        if self.hops < 0 or self.init_range < 0:
            raise ValueError("hops and init_range must be >= 0")

    @property
    def stability(self) -> float:
        return self.max_iter / 10 if self.A is None else self.A

    def to_json(self) -> dict:
        return dict(self.__dict__)


@dataclass
class VqeResult:
    params: np.ndarray
    energy: float
    objective: float
    top_bitstring: str
    top_probability: float
    evals: int
    trace: list[float]
    exact_energy: float
    restarts: int = 1
    state: Statevector | None = field(default=None, repr=False)

    @property
    def best_trace(self) -> np.ndarray:
        return np.minimum.accumulate(np.asarray(self.trace)) if self.trace else np.zeros(0)

    def to_json(self, model: IsingModel | None = None) -> dict:
        doc = {
            "params": [float(p) for p in self.params],
            "energy": self.energy,
            "objective": self.objective,
            "exact_energy": self.exact_energy,
            "top_bitstring": self.top_bitstring,
            "top_probability": self.top_probability,
            "evals": self.evals,
            "restarts": self.restarts,
            "trace": [float(t) for t in self.trace],
        }
        if model is not None:
            doc["score"] = model.score(self.energy)
        return doc

    @classmethod
    def from_json(cls, doc) -> "VqeResult":
        return cls(np.asarray(doc["params"], dtype=float), doc["energy"], doc["objective"],
                   doc["top_bitstring"], doc["top_probability"], doc["evals"],
                   list(doc["trace"]), doc["exact_energy"], doc.get("restarts", 1))


class Objective:
    """Callable ``params -> penalized energy`` with evaluation bookkeeping."""

    def __init__(self, m: IsingModel, circuit: Circuit, backend: Backend,
                 penalty: Penalty | None = None, rng=None):
        if circuit.n_qubits != m.n:
            raise ValueError(f"circuit has {circuit.n_qubits} qubits, model has {m.n}")
        self.m = m
        self.circuit = circuit
        self.backend = backend
        self.penalty = penalty
        self.diag = m.diagonal()
        self.rng = rng_from(backend.seed if rng is None else rng)
        self.evals = 0
        self.best_value = math.inf
        self.best_params: np.ndarray | None = None

    def measure(self, params) -> tuple[float, float, np.ndarray, np.ndarray | None]:
        """Return ``(objective, energy, amplitudes, frequencies)`` at ``params``."""
        amps = run_amplitudes(self.circuit, params)
        probs = amps.real ** 2 if amps.dtype == np.float64 else np.abs(amps) ** 2
        freqs = None
        if self.backend.is_exact:
            energy = float(probs @ self.diag)
        else:
            counts = sample_counts(probs, self.backend.shots, self.rng, "multinomial")
            if self.backend.noise is not None:
                counts = noisy_counts(counts, self.backend.noise, self.rng)
            freqs = counts / self.backend.shots
            energy = float(freqs @ self.diag)
        value = energy
        if self.penalty is not None:
            value += self.penalty(amps, probs, freqs, self.rng)
        return value, energy, amps, freqs

    def _track(self, params, value):
        self.evals += 1
        if not math.isfinite(value):
            raise OptimizationError(f"non-finite objective {value!r}", np.array(params), value)
        if value < self.best_value:
            self.best_value = value
            self.best_params = np.array(params, dtype=float)

    def __call__(self, params) -> float:
        value = self.measure(params)[0]
        self._track(params, value)
        return value

    def value_and_grad(self, params) -> tuple[float, np.ndarray]:
        """Exact-backend objective and its adjoint gradient."""
        if not self.backend.is_exact:
            raise ValueError("gradients need the exact backend")
        value, _, amps, _ = self.measure(params)
        self._track(params, value)
        cot = self.diag * amps
        if self.penalty is not None:
            if not hasattr(self.penalty, "cotangent"):
                raise ValueError("penalty does not provide a gradient")
            cot = cot + self.penalty.cotangent(amps)
        return value, backprop(self.circuit, params, amps, cot)


def initial_params(spec: AnsatzSpec, num_params: int, rng: np.random.Generator,
                   init_range: float) -> np.ndarray:
    return rng.uniform(-init_range, init_range, size=num_params)


def qaoa_grid_start(obj: Objective, depth: int, points: int = 8) -> np.ndarray:
    """Best constant schedule ``gamma_l = g, beta_l = b`` on a ``points x points`` grid."""
    diag = obj.diag
    spread = float(diag.max() - diag.min()) or 1.0
    gammas = np.linspace(0, 2 * math.pi / spread, points + 1)[1:]
    betas = np.linspace(-math.pi / 4, math.pi / 4, points, endpoint=False) + math.pi / (4 * points)
    best, best_x = math.inf, None
    for g in gammas:
        for b in betas:
            x = np.tile([g, b], depth)
            v = obj(x)
            if v < best:
                best, best_x = v, x
    return best_x


def _nelder_mead(obj: Objective, x0: np.ndarray, opt: OptimizerConfig, trace: list[float]):
    dim = x0.size
    simplex = np.vstack([x0] + [x0 + opt.init_step * e for e in np.eye(dim)])

    def callback(intermediate_result):
        trace.append(float(intermediate_result.fun))

    res = minimize(obj, x0, method="Nelder-Mead", callback=callback,
                   options={"maxiter": opt.max_iter, "maxfev": opt.max_iter * 4,
                            "xatol": opt.x_tol, "fatol": opt.f_tol, "adaptive": True,
                            "initial_simplex": simplex})
    return np.asarray(res.x, dtype=float), float(res.fun)


def _lbfgs(obj: Objective, x0: np.ndarray, opt: OptimizerConfig, rng: np.random.Generator,
           trace: list[float]):
    def callback(intermediate_result):
        trace.append(float(intermediate_result.fun))

    local = {"method": "L-BFGS-B", "jac": True, "callback": callback,
             "options": {"maxiter": opt.max_iter, "ftol": opt.f_tol, "gtol": opt.x_tol}}
    if opt.hops == 0:
        res = minimize(obj.value_and_grad, x0, **local)
    else:
        res = basinhopping(obj.value_and_grad, x0, niter=opt.hops, T=opt.hop_temperature,
                           stepsize=opt.hop_step, minimizer_kwargs=local, rng=rng)
    return np.asarray(res.x, dtype=float), float(res.fun)


def spsa(obj: Callable[[np.ndarray], float], x0: np.ndarray, opt: OptimizerConfig,
         rng: np.random.Generator, trace: list[float]):
    """Two-sided SPSA with Bernoulli +-1 perturbations; returns the best iterate seen."""
    x = np.array(x0, dtype=float)
    best_x, best_f = x.copy(), obj(x)
    big_a = opt.stability
    for k in range(opt.max_iter):
        ak = opt.a / (k + 1 + big_a) ** opt.alpha
        ck = opt.c / (k + 1) ** opt.gamma
        delta = rng.choice((-1.0, 1.0), size=x.size)
        grad = (obj(x + ck * delta) - obj(x - ck * delta)) / (2 * ck) * delta
        x = x - ak * grad
        f = obj(x)
        trace.append(f)
        if f < best_f:
            best_f, best_x = f, x.copy()
    return best_x, best_f


def vqe_run(m: IsingModel, spec: AnsatzSpec, opt: OptimizerConfig,
            backend: Backend | None = None, penalty: Penalty | None = None,
            init: np.ndarray | None = None, circuit: Circuit | None = None) -> VqeResult:
    """Minimize ``<H>`` (+ penalty) over the ansatz parameters.

    Returns the best parameters seen over all restarts.  On a sampled backend
    the reported energy and top bitstring come from one fresh histogram at the
    best parameters, so they do not inherit the selection bias of the search.
    """
    backend = backend or Backend.exact()
    if opt.kind == "lbfgs" and not backend.is_exact:
        raise ValueError("the lbfgs optimizer needs the exact backend")
    if spec.n_qubits != m.n:
        raise ValueError(f"ansatz has {spec.n_qubits} qubits, model has {m.n}")
    circuit = circuit or build_ansatz(spec, m)
    streams = np.random.SeedSequence(opt.seed).spawn(opt.restarts + 1)
    obj = Objective(m, circuit, backend, penalty,
                    rng=np.random.SeedSequence([backend.seed, opt.seed]))
    trace: list[float] = []
    best_x, best_f = None, math.inf
    hits = 0
    done = 0
    for r in range(opt.restarts):
        rng = rng_from(streams[r])
        if init is not None and r == 0:
            x0 = np.asarray(init, dtype=float)
        elif spec.kind == "qaoa":
            x0 = qaoa_grid_start(obj, spec.depth) if r == 0 else rng.uniform(-0.5, 0.5, 2 * spec.depth)
        else:
            x0 = initial_params(spec, circuit.num_params, rng, opt.init_range)
        if opt.kind == "simplex":
            x, f = _nelder_mead(obj, x0, opt, trace)
        elif opt.kind == "lbfgs":
            x, f = _lbfgs(obj, x0, opt, rng, trace)
        else:
            x, f = spsa(obj, x0, opt, rng, trace)
        done += 1
        slack = max(1e3 * opt.f_tol, 1e-9) * max(1.0, abs(best_f) if math.isfinite(best_f) else 1.0)
        if f < best_f - slack:
            best_x, best_f, hits = x, f, 1
        else:
            if abs(f - best_f) <= slack:
                hits += 1
            if f < best_f:
                best_x, best_f = x, f
        if opt.patience is not None and hits >= opt.patience:
            break
    if backend.is_exact and obj.best_params is not None and obj.best_value < best_f:
        best_x, best_f = obj.best_params, obj.best_value

    amps = run_amplitudes(circuit, best_x)
    state = Statevector(amps)
    probs = state.probabilities()
    exact_energy = float(probs @ obj.diag)
    if backend.is_exact:
        energy, objective = exact_energy, best_f
        k = int(np.argmax(probs))
        top, top_p = index_to_str(k, m.n), float(probs[k])
    else:
        final = Objective(m, circuit, backend, penalty,
                          rng=np.random.SeedSequence([backend.seed, opt.seed, 1]))
        objective, energy, _, freqs = final.measure(best_x)
        k = int(np.argmax(freqs))
        top, top_p = index_to_str(k, m.n), float(freqs[k])
    return VqeResult(best_x, energy, float(objective), top, top_p, obj.evals, trace,
                     exact_energy, done, state)


def qaoa_sweep(m: IsingModel, depths, opt: OptimizerConfig,
               backend: Backend | None = None) -> list[VqeResult]:
    """QAOA at increasing depths, each warm-started from the previous optimum.

    The warm start appends an identity layer (``gamma = beta = 0``) to the
    previous angles, so on the exact backend the best energy cannot get worse
    as ``p`` grows.  Other restarts use the usual grid scan.
    """
    results: list[VqeResult] = []
    prev = None
    for p in sorted(depths):
        spec = AnsatzSpec("qaoa", m.n, p)
        init = None
        if prev is not None:
            init = np.concatenate([prev.params, np.zeros(2 * (p - prev.params.size // 2))])
        res = vqe_run(m, spec, opt, backend, init=init)
        results.append(res)
        prev = res
    return results


def exact_energy_fn(m: IsingModel, circuit: Circuit) -> Callable[[np.ndarray], float]:
    diag = m.diagonal()

    def energy(params):
        amps = run_amplitudes(circuit, params)
        return float((np.abs(amps) ** 2) @ diag)

    return energy


def parameter_shift_gradient(m: IsingModel, circuit: Circuit, params) -> np.ndarray:
    """Exact-backend gradient of ``<H>`` via the two-term shift rule.

    Every gate is ``exp(-i t P / 2)`` with ``t = scale * theta``, so each gate
    occurrence contributes ``scale * (E(t + pi/2) - E(t - pi/2)) / 2``.
    """
    diag = m.diagonal()
    params = np.asarray(params, dtype=float)
    angles = np.asarray(gate_angles(circuit, params), dtype=float)
    grad = np.zeros(circuit.num_params)
    for i, gate in enumerate(circuit.gates):
        if gate.param is None:
            continue
        shifted = []
        for shift in (math.pi / 2, -math.pi / 2):
            a = angles.copy()
            a[i] += shift
            amps = run_amplitudes(circuit, angles=a)
            shifted.append(float((np.abs(amps) ** 2) @ diag))
        grad[gate.param] += gate.scale * (shifted[0] - shifted[1]) / 2
    return grad
