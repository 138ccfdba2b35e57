"""End-to-end screening: fit the surrogate, solve, and deflate until a candidate passes.

The loop is: train (or load) a factorization machine, export it as a QUBO,
map to an Ising model, find the ground state, then look the winning
bitstring up in an optional secondary-property table.  While the lookup fails
the next excited state is deflated out, up to ``k`` levels.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .ansatz import AnsatzSpec, build_ansatz
from .deflation import DeflationResult, default_beta, deflate
from .fm import FmModel, TrainConfig, active_learning_loop, fm_to_qubo, fm_train
from .mitigation import ConfusionSpec, mitigate, mitigated_expectation
from .problem import (IsingModel, QuboModel, as_bits, decode_groups, exact_spectrum, qubo_to_ising,
                      read_dataset)
from .sim import apply_readout_noise, sample
from .vqe import Backend, OptimizerConfig, VqeResult, vqe_run


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Screening run settings; every path is resolved relative to the working directory.

    Exactly one model source is used, in order of preference: ``qubo`` (a
    QUBO JSON, which carries its own sense), ``fm`` (a trained FM JSON),
    ``dataset`` (CSV to train on).
    ``beta`` fixes the penalty weight; when ``None`` it is ``beta_factor``
    times the energy range.
    """

    dataset: str | None = None
    fm: str | None = None
    qubo: str | None = None
    sense: str = "maximize"
    ansatz: dict = field(default_factory=lambda: {"kind": "ry", "depth": 1})
    optimizer: dict = field(default_factory=dict)
    backend: dict = field(default_factory=lambda: {"kind": "exact"})
    train: dict = field(default_factory=dict)
    active: bool = False
    mode: str = "cvqd"
    k: int = 4
    beta: float | None = None
    beta_factor: float = 2.0
    mitigation: str | None = None
    secondary: str | None = None
    threshold: float | None = None

    def validate(self) -> "RunConfig":
        if self.k < 0:
            raise ConfigError("k must be >= 0")
        if not (self.qubo or self.fm or self.dataset):
            raise ConfigError("one of qubo, fm or dataset is required")
        for name in ("dataset", "fm", "qubo", "mitigation", "secondary"):
            path = getattr(self, name)
            if path is not None and not Path(path).is_file():
                raise ConfigError(f"{name}: no such file {path!r}")
        if self.secondary is not None and self.threshold is None:
            raise ConfigError("a secondary table needs a threshold")
        if self.sense not in ("minimize", "maximize"):
            raise ConfigError(f"sense must be minimize or maximize, not {self.sense!r}")
        if self.mode not in ("cvqd", "vqd"):
            raise ConfigError(f"mode must be cvqd or vqd, not {self.mode!r}")
        if self.beta is not None and self.beta <= 0:
            raise ConfigError("beta must be positive")
        self.optimizer_config()
        self.ansatz_kind()
        self.make_backend()
        return self

    @classmethod
    def from_json(cls, doc: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return cls.from_json(doc)

    def to_json(self) -> dict:
        return asdict(self)

    def optimizer_config(self) -> OptimizerConfig:
        try:
            return OptimizerConfig(**self.optimizer)
        except TypeError as exc:
            raise ConfigError(f"optimizer: {exc}") from None

    def ansatz_kind(self) -> tuple[str, int]:
        kind = self.ansatz.get("kind", "ry")
        depth = int(self.ansatz.get("depth", 1))
        AnsatzSpec(kind, 1, depth)
        return kind, depth

    def make_backend(self) -> Backend:
        doc = dict(self.backend)
        noise = doc.get("noise")
        if isinstance(noise, str):
            doc["noise"] = json.loads(Path(noise).read_text(encoding="utf-8"))
        return Backend.from_json(doc)


# --------------------------------------------------------------------------
# report


@dataclass
class LevelRecord:
    rank: int
    bitstring: str
    groups: list[str] | None
    energy: float
    score: float
    oracle_energy: float | None
    oracle_score: float | None
    probability: float
    secondary: float | None
    passed: bool
    mitigated_score: float | None = None


@dataclass
class ScreeningReport:
    levels: list[LevelRecord]
    status: str  # "passed", "exhausted" or "complete" (no secondary check)
    metadata: dict

    def to_json(self) -> dict:
        return {"status": self.status, "metadata": self.metadata,
                "levels": [asdict(r) for r in self.levels]}

    @classmethod
    def from_json(cls, doc) -> "ScreeningReport":
        return cls([LevelRecord(**r) for r in doc["levels"]], doc["status"], doc["metadata"])


def _groups(bits: str):
    return decode_groups(bits) if len(bits) % 2 == 0 else None


def read_secondary(path) -> dict[str, float]:
    """``bits,<value>`` CSV (first two columns) into a lookup table."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "bits" or len(rows[0]) < 2:
        raise ConfigError(f"{path}: header must start with 'bits,<value>'")
    table = {}
    for row in rows[1:]:
        as_bits(row[0])
        table[row[0]] = float(row[1])
    return table


def load_model(cfg: RunConfig) -> tuple[QuboModel, FmModel | None, dict]:
    """The QUBO to screen, the FM behind it (if any), and training metadata."""
    if cfg.qubo:
        return QuboModel.load(cfg.qubo), None, {}
    if cfg.fm:
        fm = FmModel.load(cfg.fm)
        return fm_to_qubo(fm, cfg.sense), fm, {}
    data = read_dataset(cfg.dataset)
    tc = TrainConfig(**cfg.train)
    if cfg.active:
        fm, reports = active_learning_loop(data, cfg=tc, seed=tc.seed)
        meta = {"rounds": [r.to_json() for r in reports]}
    else:
        fm, report = fm_train(data, tc)
        meta = {"fit": report.to_json()}
    return fm_to_qubo(fm, cfg.sense), fm, meta


def screen(cfg: RunConfig) -> tuple[ScreeningReport, DeflationResult, IsingModel]:
    cfg.validate()
    t0 = time.perf_counter()
    qubo, _, train_meta = load_model(cfg)
    im = qubo_to_ising(qubo)
    t_model = time.perf_counter()

    kind, depth = cfg.ansatz_kind()
    spec = AnsatzSpec(kind, im.n, depth)
    opt = cfg.optimizer_config()
    backend = cfg.make_backend()
    beta = cfg.beta if cfg.beta is not None else default_beta(im, cfg.beta_factor)
    table = read_secondary(cfg.secondary) if cfg.secondary else None

    def passes(bits: str) -> tuple[float | None, bool]:
        if table is None:
            return None, True
        value = table.get(bits)
        return value, value is not None and value >= cfg.threshold

    def stop(level, result):
        return table is not None and passes(result.top_bitstring)[1]

    result = deflate(im, spec, opt, backend, k=cfg.k, mode=cfg.mode, beta=beta, stop=stop)
    t_solve = time.perf_counter()

    oracle = None
    if im.n <= 20:
        # one entry per bitstring so degenerate partners occupy consecutive ranks
        oracle = [e for e, _ in exact_spectrum(im, len(result.levels)).flat()]
    confusion = ConfusionSpec.load(cfg.mitigation) if cfg.mitigation else None

    records = []
    for rank, r in enumerate(result.levels):
        value, ok = passes(r.top_bitstring)
        mitigated = None
        if confusion is not None and not backend.is_exact:
            mitigated = im.score(_mitigated_energy(im, r, backend, confusion, rank))
        oe = oracle[rank] if oracle is not None and rank < len(oracle) else None
        records.append(LevelRecord(
            rank, r.top_bitstring, _groups(r.top_bitstring), r.energy, im.score(r.energy),
            oe, None if oe is None else im.score(oe), r.top_probability, value,
            ok and rank not in result.failed, mitigated))

    if table is None:
        status = "complete"
    else:
        status = "passed" if records and records[-1].passed else "exhausted"
    meta = {
        "config": cfg.to_json(),
        "n": im.n,
        "beta": beta,
        "failed_levels": result.failed,
        "shots": backend.shots,
        "seeds": {"optimizer": opt.seed, "backend": backend.seed},
        "timings": {"model": t_model - t0, "solve": t_solve - t_model},
        **train_meta,
    }
    return ScreeningReport(records, status, meta), result, im


def _mitigated_energy(im, r: VqeResult, backend: Backend, confusion: ConfusionSpec, rank: int):
    seed = np.random.SeedSequence([backend.seed, rank, 7])
    hist = sample(r.state, backend.shots, seed)
    if backend.noise is not None:
        hist = apply_readout_noise(hist, backend.noise, seed.spawn(1)[0])
    return mitigated_expectation(im, mitigate(hist, confusion))


def write_trace_csv(levels: list[VqeResult], path) -> Path:
    """Per-iteration objective values, one row per (level, iteration)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["level", "iteration", "objective"])
        for level, r in enumerate(levels):
            for i, v in enumerate(r.trace):
                w.writerow([level, i, repr(float(v))])
    return path


def write_traces(result: DeflationResult, report: ScreeningReport, out_dir) -> list[Path]:
    """CSV traces for plotting.

    ``trace.csv``: level, iteration, objective (per-iteration best objective value).
    ``levels.csv``: rank, bitstring, energy, score, oracle_energy, oracle_score, probability.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trace_path = write_trace_csv(result.levels, out / "trace.csv")
    levels_path = out / "levels.csv"
    with open(levels_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "bitstring", "energy", "score", "oracle_energy", "oracle_score",
                    "probability"])
        for rec in report.levels:
            w.writerow([rec.rank, rec.bitstring, rec.energy, rec.score, rec.oracle_energy,
                        rec.oracle_score, rec.probability])
    return [trace_path, levels_path]


# --------------------------------------------------------------------------
# benchmark


def _bench_model(n: int, seed: int = 0) -> IsingModel:
    rng = np.random.Generator(np.random.PCG64(seed))
    return IsingModel(n, rng.normal(size=n), np.triu(rng.normal(size=(n, n)), 1))


def bench(sizes=(8, 12, 16), repeat: int = 3, evals: int = 200, seed: int = 0) -> dict:
    """Wall-clock timings (seconds, best of ``repeat``) at each register size.

    ``gates_per_s``: Ry depth-1 ansatz gate throughput; ``evals_per_s``: exact
    objective evaluations; ``vqe_s``: one simplex VQE run (single restart,
    capped at ``20 * evals`` iterations); ``deflation_s``: GS plus one cVQD
    level with the gradient optimizer.
    """
    from .sim import run_amplitudes
    from .vqe import Objective

    out = {"sizes": list(sizes), "repeat": repeat, "results": []}
    for n in sizes:
        m = _bench_model(n, seed)
        m.diagonal()
        spec = AnsatzSpec("ry", n, 1)
        c = build_ansatz(spec)
        x = np.linspace(-1, 1, c.num_params)
        run_amplitudes(c, x)  # compile
        obj = Objective(m, c, Backend.exact())

        def best(fn):
            times = []
            for _ in range(repeat):
                t = time.perf_counter()
                fn()
                times.append(time.perf_counter() - t)
            return min(times)

        t_run = best(lambda: [run_amplitudes(c, x) for _ in range(evals)])
        t_obj = best(lambda: [obj(x) for _ in range(evals)])
        vqe_opt = OptimizerConfig(seed=seed, max_iter=20 * evals)
        t_vqe = best(lambda: vqe_run(m, spec, vqe_opt, circuit=c))
        defl_opt = OptimizerConfig(kind="lbfgs", seed=seed, hops=5)
        t_defl = best(lambda: deflate(m, spec, defl_opt, k=1))
        out["results"].append({
            "n": n,
            "gates_per_s": evals * len(c.gates) / t_run,
            "evals_per_s": evals / t_obj,
            "eval_s": t_obj / evals,
            "vqe_s": t_vqe,
            "deflation_s": t_defl,
        })
    return out
