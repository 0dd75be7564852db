"""Cached end-to-end training runs for the acceptance criteria.

Each run is keyed by problem, method, seed, training config and a digest of
the training code (docstrings and comments excluded), so editing prose does
not invalidate hours of runs while any code change does. Results land in
``tests/.acceptance_cache``; delete that directory to force fresh runs.

Run ``python tests/acceptance_runs.py`` to fill the cache ahead of pytest.
"""
from __future__ import annotations

import ast
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

CACHE = Path(__file__).resolve().parent / ".acceptance_cache"
SEEDS = (0, 1, 2)
ITERATIONS = 20000

# (problem, epsilon, method, t) per criterion
RUNS = {
    "6": [("II", 1e-8, "apnn-hard", 0.1), ("II", 1e-8, "pinn", 0.1)],
    "7": [("I", 1.0, "pinn", 1.0), ("I", 1.0, "apnn-hard", 1.0)],
    "8": [("II", 1e-8, "apnn-soft", 0.1), ("II", 1e-8, "apnn-hard", 0.1)],
    "9": [("III", 1e-2, "apnn-hard", 0.2), ("IV", 5e-2, "apnn-hard", 0.1)],
}

_TRAINING_MODULES = ("_accel", "autodiff", "kernels", "network", "losses", "problems", "quadrature", "sampling",
                     "training", "reference/__init__", "reference/grid", "reference/solvers")


def _strip_docstrings(tree):
    for node in ast.walk(tree):
        body = getattr(node, "body", None)
        if isinstance(body, list) and body and isinstance(body[0], ast.Expr) and \
                isinstance(getattr(body[0], "value", None), ast.Constant) and isinstance(body[0].value.value, str):
            node.body = body[1:] or [ast.Pass()]
    return tree


def code_digest():
    import apnn

    root = Path(apnn.__file__).resolve().parent
    h = hashlib.sha256()
    for name in _TRAINING_MODULES:
        src = (root / f"{name}.py").read_text()
        h.update(name.encode())
        h.update(ast.dump(_strip_docstrings(ast.parse(src))).encode())
    return h.hexdigest()[:16]


def run_config(problem_id, problem, seed):
    from apnn.cli import build_config

    return build_config(problem_id, problem, {"eval_every": 5000}, seed=seed, iterations=ITERATIONS)


def cache_key(problem, method, config):
    from apnn._accel import backend_name

    blob = json.dumps([problem.problem_hash(), method, config.config_hash(), code_digest(), backend_name()])
    return hashlib.sha256(blob.encode()).hexdigest()[:20]


def run(problem_id, epsilon, method, seed, verbose=False):
    """Final relative l2 errors of one training run, from the cache when possible."""
    from apnn.problems import make_problem
    from apnn.reference import reference_for
    from apnn.training import train

    problem = make_problem(problem_id, epsilon)
    config = run_config(problem_id, problem, seed)
    path = CACHE / f"{problem_id}_{epsilon:g}_{method}_s{seed}_{cache_key(problem, method, config)}.json"
    if path.exists():
        return json.loads(path.read_text())
    start = time.perf_counter()
    reference = reference_for(problem, cross_check=False)
    result = train(problem, method, config, reference)
    record = {
        "problem": problem_id, "epsilon": epsilon, "method": method, "seed": seed,
        "config_hash": config.config_hash(), "iterations": result.iterations_done,
        "seconds_per_1000": result.seconds_per_1000, "wall_seconds": time.perf_counter() - start,
        "final_errors": {repr(t): e for t, e in result.final_errors().items()},
        "error_history": [[it, {repr(t): e for t, e in errs.items()}] for it, errs in result.error_history],
        "final_loss": result.loss_history[-1][1].row() if result.loss_history else None,
    }
    CACHE.mkdir(exist_ok=True)
    path.write_text(json.dumps(record, indent=1) + "\n")
    if verbose:
        print(f"{problem_id} eps={epsilon:g} {method} seed={seed}: {record['final_errors']} "
              f"({record['wall_seconds']:.0f} s)", flush=True)
    return record


def median_error(problem_id, epsilon, method, t):
    errs = [run(problem_id, epsilon, method, s)["final_errors"][repr(float(t))] for s in SEEDS]
    return float(np.median(errs)), errs


def all_runs():
    seen = []
    for runs in RUNS.values():
        for pid, eps, method, _ in runs:
            if (pid, eps, method) not in seen:
                seen.append((pid, eps, method))
    return seen


if __name__ == "__main__":
    only = set(sys.argv[1:])
    for pid, eps, method in all_runs():
        if only and pid not in only:
            continue
        for seed in SEEDS:
            run(pid, eps, method, seed, verbose=True)
