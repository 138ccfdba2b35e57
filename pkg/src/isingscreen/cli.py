"""Command-line driver.

Settings precedence, lowest to highest: built-in defaults, the ``--config``
JSON document (a :class:`~isingscreen.workflow.RunConfig`), then individual
flags.  Exit status is 0 on success, 2 on invalid input and 3 when a
numerical routine fails (non-finite objective, unconverged mitigation).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .ansatz import AnsatzSpec
from .deflation import default_beta, deflate
from .fm import TrainConfig, active_learning_loop, fm_to_qubo, fm_train, stratified_split
from .mitigation import MitigationError
from .planted import DEFAULT_TARGET, generate_dataset, planted_qubo
from .problem import decode_groups, exact_spectrum, qubo_to_ising, read_dataset, write_dataset
from .vqe import OptimizationError, vqe_run
from .workflow import RunConfig, bench, load_model, screen, write_trace_csv, write_traces

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3

TRACE_HELP = """\
CSV outputs:
  trace.csv   level, iteration, objective   best objective value per optimizer iteration
  levels.csv  rank, bitstring, energy, score, oracle_energy, oracle_score, probability
Energies are internal Ising energies (offset excluded, minimization sign);
scores are in the units of the original target.
"""

# flag dest -> location in RunConfig ("field" or ("field", "key"))
_OVERRIDES = {
    "data": "dataset",
    "fm": "fm",
    "qubo": "qubo",
    "sense": "sense",
    "ansatz": ("ansatz", "kind"),
    "depth": ("ansatz", "depth"),
    "optimizer": ("optimizer", "kind"),
    "restarts": ("optimizer", "restarts"),
    "max_iter": ("optimizer", "max_iter"),
    "seed": ("optimizer", "seed"),
    "hops": ("optimizer", "hops"),
    "init_range": ("optimizer", "init_range"),
    "shots": ("backend", "shots"),
    "backend_seed": ("backend", "seed"),
    "noise": ("backend", "noise"),
    "epochs": ("train", "epochs"),
    "kappa": ("train", "kappa"),
    "lr": ("train", "learning_rate"),
    "train_seed": ("train", "seed"),
    "batch_size": ("train", "batch_size"),
    "active": "active",
    "k": "k",
    "mode": "mode",
    "beta": "beta",
    "mitigation": "mitigation",
    "secondary": "secondary",
    "threshold": "threshold",
}


def build_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    for dest, where in _OVERRIDES.items():
        value = getattr(args, dest, None)
        if value is None:
            continue
        if isinstance(where, str):
            setattr(cfg, where, value)
        else:
            section, key = where
            getattr(cfg, section)[key] = value
    if cfg.backend.get("shots") is not None:
        cfg.backend["kind"] = "sampled"
    return cfg


def _emit(doc, out):
    text = json.dumps(doc, indent=2) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _add_model_flags(p):
    p.add_argument("--config", help="RunConfig JSON; flags override its fields")
    p.add_argument("--data", help="dataset CSV (bits,target) to train on")
    p.add_argument("--fm", help="trained FM JSON")
    p.add_argument("--qubo", help="QUBO JSON (takes precedence over --fm and --data)")
    p.add_argument("--sense", choices=["minimize", "maximize"])
    p.add_argument("--epochs", type=int)
    p.add_argument("--kappa", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--train-seed", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--active", action="store_const", const=True,
                   help="grow the training set with the active-learning loop")


def _add_solver_flags(p):
    _add_model_flags(p)
    p.add_argument("--ansatz", choices=["ry", "qaoa"])
    p.add_argument("--depth", type=int)
    p.add_argument("--optimizer", choices=["simplex", "spsa", "lbfgs"])
    p.add_argument("--restarts", type=int)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--seed", type=int, help="optimizer seed")
    p.add_argument("--hops", type=int, help="basin-hopping rounds (lbfgs only)")
    p.add_argument("--init-range", type=float)
    p.add_argument("--shots", type=int, help="sample the energy with this many shots")
    p.add_argument("--backend-seed", type=int)
    p.add_argument("--noise", help='readout-noise JSON {"qubits": [{"p10": r, "p01": r}, ...]}')
    p.add_argument("--trace-dir", help="directory for CSV traces")
    p.add_argument("--out", help="output JSON (default stdout)")


def _add_deflation_flags(p):
    p.add_argument("--k", type=int, help="number of excited states")
    p.add_argument("--mode", choices=["cvqd", "vqd"])
    p.add_argument("--beta", type=float, help="penalty weight (default 2x energy range)")


def parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="isingscreen", description=__doc__,
                                 epilog=TRACE_HELP,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="labeled dataset from a seeded planted model")
    p.add_argument("--seed", type=int, default=4, help="planted-model seed")
    p.add_argument("--sites", type=int, default=6)
    p.add_argument("--target", default=None, help="bitstring to plant as the maximizer")
    p.add_argument("--noise", type=float, default=0.0, help="std of Gaussian label noise")
    p.add_argument("--noise-seed", type=int, default=0)
    p.add_argument("--out", required=True, help="dataset CSV")
    p.add_argument("--model-out", help="planted QUBO JSON (default <out stem>.model.json)")

    p = sub.add_parser("train", help="fit a factorization machine")
    _add_model_flags(p)
    p.add_argument("--train-size", type=int, help="stratified training subset; the rest is the test set")
    p.add_argument("--out", required=True, help="FM JSON")
    p.add_argument("--qubo-out", help="also write the QUBO JSON")
    p.add_argument("--report", help="fit report JSON (default stdout)")

    p = sub.add_parser("solve", help="ground state by VQE or QAOA")
    _add_solver_flags(p)

    p = sub.add_parser("deflate", help="ground state plus k excited states")
    _add_solver_flags(p)
    _add_deflation_flags(p)

    p = sub.add_parser("oracle", help="lowest levels by exhaustive enumeration")
    _add_model_flags(p)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--out")

    p = sub.add_parser("screen", help="full loop with an optional secondary-property check",
                       epilog=TRACE_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_solver_flags(p)
    _add_deflation_flags(p)
    p.add_argument("--mitigation", help="confusion-matrix JSON used to mitigate sampled energies")
    p.add_argument("--secondary", help="CSV lookup table bits,<value>")
    p.add_argument("--threshold", type=float, help="pass when the secondary value >= threshold")

    p = sub.add_parser("bench", help="timings at several register sizes")
    p.add_argument("--sizes", default="8,12,16")
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--evals", type=int, default=200)
    p.add_argument("--out")
    return ap


# --------------------------------------------------------------------------
# commands


def cmd_gen_data(args):
    n = 2 * args.sites
    if args.noise < 0:
        raise ValueError("noise must be >= 0")
    target = args.target or (DEFAULT_TARGET if n == len(DEFAULT_TARGET) else "1" * n)
    model = planted_qubo(args.seed, n, target)
    data = generate_dataset(model, args.noise, args.noise_seed)
    out = Path(args.out)
    write_dataset(data, out)
    model_out = Path(args.model_out) if args.model_out else out.with_name(out.stem + ".model.json")
    model.save(model_out)


def cmd_train(args):
    cfg = build_config(args)
    if not cfg.dataset:
        raise ValueError("train needs --data or a config with a dataset")
    data = read_dataset(cfg.dataset)
    tc = TrainConfig(**cfg.train)
    if cfg.active:
        fm, reports = active_learning_loop(data, cfg=tc, seed=tc.seed)
        doc = {"rounds": [r.to_json() for r in reports]}
    else:
        train, test = (data, None) if args.train_size is None else stratified_split(
            data, args.train_size, tc.seed)
        fm, report = fm_train(train, tc, test)
        doc = report.to_json()
    fm.save(args.out)
    if args.qubo_out:
        fm_to_qubo(fm, cfg.sense).save(args.qubo_out)
    _emit(doc, args.report)


def _solver_setup(args):
    cfg = build_config(args)
    cfg.validate()
    qubo, _, _ = load_model(cfg)
    im = qubo_to_ising(qubo)
    kind, depth = cfg.ansatz_kind()
    return cfg, im, AnsatzSpec(kind, im.n, depth)


def cmd_solve(args):
    cfg, im, spec = _solver_setup(args)
    res = vqe_run(im, spec, cfg.optimizer_config(), cfg.make_backend())
    if args.trace_dir:
        write_trace_csv([res], Path(args.trace_dir) / "trace.csv")
    _emit(res.to_json(im), args.out)


def cmd_deflate(args):
    cfg, im, spec = _solver_setup(args)
    beta = cfg.beta if cfg.beta is not None else default_beta(im, cfg.beta_factor)
    res = deflate(im, spec, cfg.optimizer_config(), cfg.make_backend(), k=cfg.k, mode=cfg.mode,
                  beta=beta)
    if args.trace_dir:
        write_trace_csv(res.levels, Path(args.trace_dir) / "trace.csv")
    _emit(res.to_json(im), args.out)


def cmd_oracle(args):
    cfg = build_config(args)
    if not (cfg.qubo or cfg.fm or cfg.dataset):
        raise ValueError("oracle needs --qubo, --fm or --data")
    qubo, _, _ = load_model(cfg)
    im = qubo_to_ising(qubo)
    sl = exact_spectrum(im, args.k + 1)
    levels = []
    for rank, (e, bits) in enumerate(sl.flat()[:args.k + 1]):
        levels.append({"rank": rank, "bitstring": bits, "energy": e, "score": im.score(e),
                       "groups": decode_groups(bits) if im.n % 2 == 0 else None})
    _emit({"n": im.n, "levels": levels}, args.out)


def cmd_screen(args):
    cfg = build_config(args)
    report, result, _ = screen(cfg)
    if args.trace_dir:
        write_traces(result, report, args.trace_dir)
    _emit(report.to_json(), args.out)


def cmd_bench(args):
    try:
        sizes = [int(s) for s in args.sizes.split(",")]
    except ValueError:
        raise ValueError(f"--sizes must be comma-separated integers, not {args.sizes!r}") from None
    _emit(bench(sizes, args.repeat, args.evals), args.out)


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "solve": cmd_solve,
    "deflate": cmd_deflate,
    "oracle": cmd_oracle,
    "screen": cmd_screen,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    args = parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except (OptimizationError, MitigationError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, KeyError, TypeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
