"""Command-line front end.

Exit codes: 0 success, 1 failed verification, 2 invalid model/input,
3 gains/model mismatch, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import centralized_benchmark_pass
from .errors import ArtifactMismatch, FormatError, GenerationError, SynthesisError, ValidationError
from .model import (
    Dims,
    load_model,
    model_hash,
    random_model,
    save_model,
    scalar_instance,
    validate,
)
from .simulator import iter_trace_rows, monte_carlo, simulate_batch, trace_header
from .synthesis import (
    benchmark_pass,
    check_schedule_matches,
    load_schedule,
    save_schedule,
    synthesize,
)
from .verify import results_to_json, run_checks

EXIT_OK, EXIT_FAIL, EXIT_INVALID, EXIT_MISMATCH, EXIT_NUMERIC = 0, 1, 2, 3, 4

# Manifest fields that legitimately change between identical runs.
VOLATILE_FIELDS = ("created", "timings")


def manifest(command: str, *, model_digest=None, seeds=None, parameters=None, timings=None) -> dict:
    return {
        "command": command,
        "model_hash": model_digest,
        "seeds": seeds,
        "parameters": parameters or {},
        "tool_version": __version__,
        "timings": timings or {},
        "created": datetime.now(timezone.utc).isoformat(),
    }


def content_hash(doc: dict) -> str:
    """Hash of a JSON artifact with the volatile manifest fields removed."""
    doc = dict(doc)
    if "manifest" in doc:
        doc["manifest"] = {k: v for k, v in doc["manifest"].items() if k not in VOLATILE_FIELDS}
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def _err(msg: str) -> None:
    print(f"netlqr: {msg}", file=sys.stderr)


def _load_valid_model(path):
    model = load_model(path)
    violations = validate(model)
    if violations:
        raise ValidationError(violations)
    return model


def _range(text: str) -> tuple[float, float]:
    lo, hi = (float(v) for v in text.split(","))
    return lo, hi


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def cmd_synthesize(args) -> int:
    model = _load_valid_model(args.model)
    t0 = time.perf_counter()
    sched = synthesize(model)
    elapsed = time.perf_counter() - t0
    man = manifest(
        "synthesize", model_digest=model_hash(model), parameters={"model": str(args.model)},
        timings={"synthesis_s": elapsed},
    )
    save_schedule(sched, args.out, man)
    print(json.dumps({"out": str(args.out), "horizon": model.T, "synthesis_s": elapsed}))
    return EXIT_OK


def cmd_simulate(args) -> int:
    model = _load_valid_model(args.model)
    sched = load_schedule(args.gains)
    check_schedule_matches(model, sched)
    t0 = time.perf_counter()
    report = monte_carlo(model, sched, args.episodes, args.seed, profile=True)
    elapsed = time.perf_counter() - t0
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(trace_header(model.dims))
            chunk = 1024
            for start in range(0, args.episodes, chunk):
                eps = list(range(start, min(args.episodes, start + chunk)))
                b = simulate_batch(model, sched, eps, args.seed)
                for row, k in enumerate(eps):
                    w.writerows(iter_trace_rows(model.dims, k, b.trace(row)))
    result = {
        "mean": report.mean,
        "stderr": report.stderr,
        "episodes": report.episodes,
        "seed": report.seed,
        "profile": list(report.profile),
    }
    doc = {
        "report": result,
        "manifest": manifest(
            "simulate", model_digest=model_hash(model), seeds=[args.seed],
            parameters={"episodes": args.episodes, "model": str(args.model), "gains": str(args.gains)},
            timings={"simulation_s": elapsed},
        ),
    }
    if args.out:
        Path(str(args.out) + ".manifest.json").write_text(json.dumps(doc, indent=1))
    print(json.dumps(result))
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.model:
        models = [("file", _load_valid_model(args.model))]
    elif args.random_n:
        N = args.random_n
        dims = Dims(N, (args.d_x,) * N, (args.d_u,) * (N + 1), args.t_horizon)
        models = [
            (f"random seed={s}", random_model(dims, args.entry_range, s, p=args.p, cost_method="gram"))
            for s in range(args.seed, args.seed + args.seeds)
        ]
    else:
        models = [("scalar", scalar_instance())]
    all_ok = True
    out = []
    for label, model in models:
        res = run_checks(
            model, episodes=args.episodes, trials=args.trials, seed=args.seed,
            inject_gain_error=args.inject_gain_error,
        )
        doc = results_to_json(res)
        doc["model"] = label
        out.append(doc)
        all_ok &= doc["passed"]
        for r in res:
            print(f"{label:>20}  {r.name:<26} {'PASS' if r.passed else 'FAIL'}", file=sys.stderr)
    report = {"passed": all_ok, "models": out, "manifest": manifest("verify", seeds=[args.seed])}
    text = json.dumps(report, indent=1, default=float)
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text)
    return EXIT_OK if all_ok else EXIT_FAIL


def cmd_benchmark(args) -> int:
    rows = []
    for N in args.n_list:
        dims = Dims(N, (args.d_x,) * N, (args.d_u,) * (N + 1), args.t_horizon)
        times = {"decentralized": [], "centralized": []}
        for k in range(args.trials):
            model = random_model(
                dims, args.entry_range, args.seed + k, p=0.5, cost_method=args.cost_method,
                per_step_costs=args.per_step_costs,
            )
            t0 = time.perf_counter()
            benchmark_pass(model)
            times["decentralized"].append(time.perf_counter() - t0)
            t0 = time.perf_counter()
            centralized_benchmark_pass(model)
            times["centralized"].append(time.perf_counter() - t0)
            if args.simulate:
                sched = synthesize(model)
                t0 = time.perf_counter()
                monte_carlo(model, sched, args.simulate, args.seed + k)
                times.setdefault("simulation", []).append(time.perf_counter() - t0)
        for mode, ts in times.items():
            rows.append({"N": N, "mode": mode, "trials": args.trials,
                         "mean_s": float(np.mean(ts)), "std_s": float(np.std(ts))})
        ratio = np.mean(times["decentralized"]) / np.mean(times["centralized"])
        print(f"N={N}: decentralized/centralized mean-time ratio {ratio:.3f}", file=sys.stderr)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.DictWriter(fh, fieldnames=["N", "mode", "trials", "mean_s", "std_s"])
        w.writeheader()
        w.writerows(rows)
    finally:
        if args.out:
            fh.close()
    if args.out:
        man = manifest(
            "benchmark", seeds=[args.seed],
            parameters={k: v for k, v in vars(args).items() if k not in ("func",)},
        )
        Path(str(args.out) + ".manifest.json").write_text(json.dumps(man, indent=1, default=str))
    return EXIT_OK


def cmd_generate(args) -> int:
    if args.scalar:
        model = scalar_instance(p=args.p, horizon=args.t_horizon)
    else:
        N = args.random_n
        dims = Dims(N, (args.d_x,) * N, (args.d_u,) * (N + 1), args.t_horizon)
        model = random_model(
            dims, args.entry_range, args.seed, p=args.p, cost_method=args.cost_method,
            per_step_costs=args.per_step_costs,
        )
    save_model(model, args.out)
    print(json.dumps({"out": str(args.out), "model_hash": model_hash(model)}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="netlqr", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def random_opts(p, *, t_default):
        p.add_argument("--random-n", type=int, default=1, help="number of subsystems N")
        p.add_argument("--d-x", type=int, default=3)
        p.add_argument("--d-u", type=int, default=3)
        p.add_argument("--t-horizon", type=int, default=t_default)
        p.add_argument("--entry-range", type=_range, default=(0.0, 20.0), help="lo,hi (write --entry-range=-1,1 for a negative lo)")
        p.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("synthesize", help="compute the gain schedule for a model file")
    s.add_argument("--model", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synthesize)

    s = sub.add_parser("simulate", help="Monte Carlo evaluation and trace export")
    s.add_argument("--model", required=True)
    s.add_argument("--gains", required=True)
    s.add_argument("--episodes", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", help="trace CSV path (plus <out>.manifest.json)")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("verify", help="run the optimality / reduction check suite")
    s.add_argument("--model")
    random_opts(s, t_default=20)
    s.set_defaults(random_n=0)
    s.add_argument("--seeds", type=int, default=3, help="number of random models")
    s.add_argument("--p", type=float, default=0.5)
    s.add_argument("--episodes", type=int, default=2000)
    s.add_argument("--trials", type=int, default=20)
    s.add_argument("--inject-gain-error", type=float, default=0.0, help=argparse.SUPPRESS)
    s.add_argument("--out")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("benchmark", help="synthesis runtime, decentralized vs centralized")
    s.add_argument("--n-list", type=_int_list, default=[1, 10, 100])
    random_opts(s, t_default=1000)
    s.add_argument("--trials", type=int, default=10)
    s.add_argument("--cost-method", choices=("gram", "rejection"), default="gram")
    s.add_argument("--per-step-costs", action="store_true", help="draw a fresh R_t for every step")
    s.add_argument("--simulate", type=int, default=0, metavar="M", help="also time M Monte Carlo episodes")
    s.add_argument("--out")
    s.set_defaults(func=cmd_benchmark)

    s = sub.add_parser("generate", help="write a random or built-in model file")
    random_opts(s, t_default=50)
    s.add_argument("--scalar", action="store_true", help="the built-in scalar instance")
    s.add_argument("--p", type=float, default=0.5)
    s.add_argument("--cost-method", choices=("gram", "rejection"), default="gram")
    s.add_argument("--per-step-costs", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_generate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        for v in exc.violations:
            _err(f"{v.code}: {v.message}")
        return EXIT_INVALID
    except (FormatError, GenerationError, FileNotFoundError, json.JSONDecodeError) as exc:
        _err(str(exc))
        return EXIT_INVALID
    except ArtifactMismatch as exc:
        _err(str(exc))
        return EXIT_MISMATCH
    except SynthesisError as exc:
        _err(str(exc))
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
