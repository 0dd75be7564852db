"""Command line entry point: ``apnn train | reference | compare | ap-check``.

Exit codes: 0 success, 2 usage or configuration error, 3 numeric failure.
``APNN_NUM_THREADS`` sets the BLAS/OpenMP thread count.
"""
from __future__ import annotations

import os

_threads = os.environ.get("APNN_NUM_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMBA_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse  # noqa: E402
import csv  # noqa: E402
import datetime as _dt  # noqa: E402
import hashlib  # noqa: E402
import json  # noqa: E402
import sys  # noqa: E402
from pathlib import Path  # noqa: E402

import numpy as np  # noqa: E402

from . import __version__  # noqa: E402
from .diagnostics import DEFAULT_EPSILONS, ap_check  # noqa: E402
from .errors import ConfigurationError, NumericError  # noqa: E402
from .losses import METHODS, relative_l2_error  # noqa: E402
from .network import load_checkpoint, save_checkpoint  # noqa: E402
from .problems import PROBLEM_IDS, make_problem  # noqa: E402
from .quadrature import gauss_legendre  # noqa: E402
from .reference import (  # noqa: E402
    GridSolution,
    default_grid,
    reference_for,
    solve_diffusion_fd,
    solve_micro_macro_fd,
    solve_transport_direct,
)
from .training import TrainingConfig, evaluate_density, evaluation_grid, train  # noqa: E402

LOSS_HEADER = ["iter", "total", "macro", "micro", "bc", "ic", "constraint"]
MANIFEST = "manifest.json"


# ---------------------------------------------------------------------------
# defaults and configuration
# ---------------------------------------------------------------------------
def default_penalties(problem_id, epsilon):
    """Default (lam_bc, lam_ic) per problem and epsilon."""
    if problem_id == "I":
        return 1.0, 1000.0
    if problem_id == "II":
        return (1.0, 1.0) if epsilon >= 0.1 - 1e-12 else (10.0, 10.0)
    if problem_id == "III":
        return 1.0, 1.0
    return 10.0, 10.0


def default_eval_times(problem):
    return [float(t) for t in problem.plot_times if t > 0] or [float(problem.T)]


def read_config(path):
    """JSON object with TrainingConfig keys; anything else is an error."""
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigurationError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"malformed config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigurationError("config must be a JSON object")
    return data


def build_config(problem_id, problem, overrides, seed=None, iterations=None):
    lam_bc, lam_ic = default_penalties(problem_id, problem.epsilon)
    data = {"lam_bc": lam_bc, "lam_ic": lam_ic, "eval_times": default_eval_times(problem)}
    try:
        TrainingConfig.from_dict(overrides)  # reject unknown keys before merging
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from exc
    data.update(overrides)
    if seed is not None:
        data["seed"] = int(seed)
    if iterations is not None:
        data["iterations"] = int(iterations)
    return TrainingConfig.from_dict(data)


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------
def _num(x):
    return repr(float(x))


def write_csv(path, header, rows):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([r if isinstance(r, (int, str)) else _num(r) for r in row])
    return Path(path)


def file_digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def source_version():
    """Package version plus a digest of the installed sources (git-describe style)."""
    root = Path(__file__).resolve().parent
    h = hashlib.sha256()
    for p in sorted(root.rglob("*.py")):
        h.update(p.relative_to(root).as_posix().encode())
        h.update(p.read_bytes())
    return f"{__version__}+src.{h.hexdigest()[:12]}"


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def write_manifest(out, kind, started, outputs, **fields):
    out = Path(out)
    manifest = {
        "kind": kind,
        "version": source_version(),
        "started": started,
        "finished": _now(),
        "outputs": {name: {"path": Path(p).name, "sha256": file_digest(p)} for name, p in outputs.items()},
        **fields,
    }
    path = out / MANIFEST
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def read_manifest(path):
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST
    if not path.exists():
        raise ConfigurationError(f"manifest not found: {path}")
    manifest = json.loads(path.read_text())
    for name, entry in manifest.get("outputs", {}).items():
        if not (path.parent / entry["path"]).exists():
            raise ConfigurationError(f"manifest {path} lists missing output {entry['path']}")
    return manifest, path.parent


def _out_dir(path):
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _problem(args):
    if args.problem not in PROBLEM_IDS:
        raise ConfigurationError(f"unknown problem {args.problem!r}; choose one of {{{', '.join(PROBLEM_IDS)}}}")
    return make_problem(args.problem, args.epsilon)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------
def cmd_train(args):
    started = _now()
    problem = _problem(args)
    config = build_config(args.problem, problem, read_config(args.config), args.seed, args.iterations)
    if config.log_every == 0:
        config.log_every = 500
    out = _out_dir(args.out)
    reference = None if args.no_reference else reference_for(problem, cross_check=False)

    def progress(it, parts):
        print(f"iter {it:6d} total {parts.total:.6e} macro {parts.macro:.3e} micro {parts.micro:.3e} "
              f"bc {parts.bc:.3e} ic {parts.ic:.3e} constraint {parts.constraint:.3e}", flush=True)

    result = train(problem, args.method, config, reference, progress=progress)
    outputs = {}
    outputs["loss"] = write_csv(out / "loss.csv", LOSS_HEADER,
                                ([it] + parts.row() for it, parts in result.loss_history))
    outputs["errors"] = write_csv(out / "errors.csv", ["iter", "t", "rel_l2"],
                                  ([it, t, e] for it, errs in result.error_history for t, e in sorted(errs.items())))
    x = evaluation_grid(problem, config.eval_nx)
    times = config.eval_times
    rho = evaluate_density(args.method, result.params, result.specs, times, x, gauss_legendre(config.n_quadrature))
    outputs["density"] = write_csv(out / "density.csv", ["t", "x", "rho"],
                                   ([t, xi, r] for k, t in enumerate(times) for xi, r in zip(x, rho[k])))
    checkpoints = {}
    for name, params in result.params.items():
        path = out / f"net_{name}.bin"
        sidecar = save_checkpoint(path, params, result.specs[name], config.seed, {"network": name})
        outputs[f"net_{name}"] = path
        outputs[f"net_{name}_meta"] = sidecar
        checkpoints[name] = path.name
    manifest = write_manifest(
        out, "train", started, outputs,
        problem_id=args.problem, epsilon=problem.epsilon, problem=problem.describe(),
        problem_hash=problem.problem_hash(), method=args.method, seed=config.seed,
        config=config.to_dict(), config_hash=config.config_hash(), checkpoints=checkpoints,
        iterations_done=result.iterations_done, partial=result.partial,
        seconds_per_1000=result.seconds_per_1000, final_errors={repr(t): e for t, e in result.final_errors().items()},
    )
    for t, e in sorted(result.final_errors().items()):
        print(f"rel_l2 t={t:g}: {e:.4e}")
    print(f"manifest: {manifest}")
    return 0


SOLVERS = {
    "micro-macro": solve_micro_macro_fd,
    "discrete-ordinates": solve_transport_direct,
    "diffusion": solve_diffusion_fd,
}


def cmd_reference(args):
    started = _now()
    problem = _problem(args)
    overrides = {k: v for k, v in (("nx", args.nx), ("n_v", args.nv), ("c", args.c)) if v is not None}
    grid = default_grid(problem, **overrides)
    times = None
    if args.times:
        times = sorted(set(float(t) for t in args.times) | set(problem.plot_times) | {problem.T})
    if args.solver == "auto":
        sol = reference_for(problem, grid, times)
    else:
        sol = SOLVERS[args.solver](problem, grid, times)
        sol.meta["provenance"] = args.solver
    out = _out_dir(args.out)
    csv_path, meta_path = sol.save(out / "reference.csv")
    manifest = write_manifest(
        out, "reference", started, {"reference": csv_path, "reference_meta": meta_path},
        problem_id=args.problem, epsilon=problem.epsilon, problem=problem.describe(),
        problem_hash=problem.problem_hash(), provenance=sol.meta["provenance"], grid=grid.describe(),
        times=[float(t) for t in sol.times],
    )
    print(f"{sol.meta['provenance']} reference at t = {', '.join(f'{t:g}' for t in sol.times)}")
    print(f"manifest: {manifest}")
    return 0


def _density_source(manifest, root):
    """Callable (times, x) -> density rows for a train or reference manifest."""
    if manifest["kind"] == "reference":
        sol = GridSolution.load(root / manifest["outputs"]["reference"]["path"])
        return lambda times, x: np.array([sol.at(t, x) for t in times]), sol
    if manifest["kind"] == "train":
        params, specs = {}, {}
        for name, fname in manifest["checkpoints"].items():
            params[name], specs[name], _ = load_checkpoint(root / fname)
        rule = gauss_legendre(manifest["config"]["n_quadrature"])
        method = manifest["method"]
        return lambda times, x: evaluate_density(method, params, specs, times, x, rule), None
    raise ConfigurationError(f"cannot compare a {manifest['kind']!r} manifest")


def cmd_compare(args):
    started = _now()
    cand, cand_root = read_manifest(args.train)
    ref, ref_root = read_manifest(args.reference)
    if cand.get("problem_hash") != ref.get("problem_hash"):
        raise ConfigurationError(
            f"problem mismatch: {cand.get('problem_id')} eps={cand.get('epsilon')} vs "
            f"{ref.get('problem_id')} eps={ref.get('epsilon')}"
        )
    problem = make_problem(ref["problem_id"], ref["epsilon"])
    times = [float(t) for t in args.times] if args.times else (
        cand.get("config", {}).get("eval_times") or default_eval_times(problem))
    x = evaluation_grid(problem, args.nx)
    cand_fn, _ = _density_source(cand, cand_root)
    ref_fn, _ = _density_source(ref, ref_root)
    pred, exact = cand_fn(times, x), ref_fn(times, x)
    errors = [(t, relative_l2_error(pred[k], exact[k])) for k, t in enumerate(times)]
    out = _out_dir(args.out)
    outputs = {
        "errors": write_csv(out / "compare_errors.csv", ["t", "rel_l2"], errors),
        "fields": write_csv(out / "compare.csv", ["t", "x", "rho_nn", "rho_ref"],
                            ([t, xi, a, b] for k, t in enumerate(times) for xi, a, b in zip(x, pred[k], exact[k]))),
    }
    manifest = write_manifest(
        out, "compare", started, outputs, problem_id=ref["problem_id"], epsilon=ref["epsilon"],
        problem_hash=ref["problem_hash"], candidate=str(Path(args.train)), reference=str(Path(args.reference)),
        rel_l2={repr(t): e for t, e in errors},
    )
    for t, e in errors:
        print(f"rel_l2 t={t:g}: {e:.4e}")
    print(f"manifest: {manifest}")
    return 0


def cmd_ap_check(args):
    started = _now()
    problem = _problem(args)
    eps = args.epsilons or list(DEFAULT_EPSILONS)
    report = ap_check(problem, args.seed, eps, n_points=args.points)
    out = _out_dir(args.out)
    rows = [[r.epsilon, r.apnn_gap, r.pinn_gap, r.parity_gap] for r in report.rows]
    orders = {c: report.orders(c) for c in ("apnn_gap", "pinn_gap", "parity_gap")}
    path = write_csv(out / "ap_check.csv", ["epsilon", "apnn_gap", "pinn_gap", "parity_gap"], rows)
    opath = write_csv(out / "ap_orders.csv", ["eps_hi", "eps_lo", "apnn_order", "pinn_order", "parity_order"],
                      ([a.epsilon, b.epsilon, orders["apnn_gap"][k], orders["pinn_gap"][k], orders["parity_gap"][k]]
                       for k, (a, b) in enumerate(zip(report.rows, report.rows[1:]))))
    manifest = write_manifest(
        out, "ap-check", started, {"gaps": path, "orders": opath}, problem_id=args.problem,
        problem_hash=problem.problem_hash(), seed=args.seed, epsilons=eps,
        limits={"apnn": report.apnn_limit, "pinn": report.pinn_limit, "parity": report.parity_limit},
    )
    print(f"{'eps':>10} {'|APNN|':>12} {'|PINN|':>12} {'|parity|':>12}")
    for r in report.rows:
        print(f"{r.epsilon:10.3g} {r.apnn_gap:12.4e} {r.pinn_gap:12.4e} {r.parity_gap:12.4e}")
    for c, vals in orders.items():
        print(f"order {c}: " + " ".join(f"{v:.2f}" for v in vals))
    print(f"manifest: {manifest}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------
def build_parser():
    parser = argparse.ArgumentParser(prog="apnn", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, need_method=False):
        p.add_argument("--problem", required=True, help="problem id: I, II, III or IV")
        p.add_argument("--epsilon", type=float, default=None, help="Knudsen number (default: the problem's own)")
        p.add_argument("--out", required=True, help="output directory")
        if need_method:
            p.add_argument("--method", required=True, choices=METHODS)

    p = sub.add_parser("train", help="train a PINN or APNN and write histories and checkpoints")
    common(p, need_method=True)
    p.add_argument("--config", default=None, help="JSON file with training settings")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--no-reference", action="store_true", help="skip the reference solve and error history")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("reference", help="compute a finite-difference reference density")
    common(p)
    p.add_argument("--solver", default="auto", choices=["auto", *SOLVERS])
    p.add_argument("--nx", type=int, default=None)
    p.add_argument("--nv", type=int, default=None)
    p.add_argument("--c", type=float, default=None, help="dt = c dx^2")
    p.add_argument("--times", type=float, nargs="*", default=None)
    p.set_defaults(func=cmd_reference)

    p = sub.add_parser("compare", help="relative l2 errors of a trained run against a reference")
    p.add_argument("--train", required=True, help="candidate manifest (train or reference run)")
    p.add_argument("--reference", required=True, help="reference manifest")
    p.add_argument("--times", type=float, nargs="*", default=None)
    p.add_argument("--nx", type=int, default=100)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("ap-check", help="loss gaps |R^eps - R^0| on frozen random networks")
    p.add_argument("--problem", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epsilons", type=float, nargs="*", default=None)
    p.add_argument("--points", type=int, default=64)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ap_check, epsilon=None)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"apnn {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"apnn {args.command}: numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
