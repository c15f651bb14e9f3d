"""Command-line interface: ``envelope``, ``solve`` and ``oracle``.

Exit codes: 0 success, 2 usage or parse error, 3 regime violation,
4 non-convergence (the report is still written) or oracle failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import lifting
from .penalty_core import (
    DomainError,
    EnvelopeParams,
    PosCard,
    ScaledCard,
    s1_scalar,
    s2_scalar,
    scalar_value,
)
from .solvers import (
    LeastSquaresProblem,
    RegimeError,
    SolverConfig,
    solve_admm,
    solve_cadzow,
    solve_fbs,
)
from .suites import SUITES, run_suite
from .weighted import DirectTensorWeight

SCHEMA = "quadenv-report/1"

EXIT_OK, EXIT_USAGE, EXIT_REGIME, EXIT_NONCONVERGED = 0, 2, 3, 4


class UsageError(Exception):
    """Bad flags or unreadable input; maps to exit code 2."""


# ------------------------------------------------------------------ CSV i/o

def fmt(v: float) -> str:
    """Shortest round-trip representation; ``-0.0`` prints as ``0.0``."""
    return repr(float(v) + 0.0)


def write_array(arr, path_or_file) -> None:
    """Vectors one value per line; matrices row-major, comma separated."""
    arr = np.asarray(arr, dtype=float)
    lines = [fmt(v) for v in arr.ravel()] if arr.ndim <= 1 else \
        [",".join(fmt(v) for v in row) for row in arr]
    text = "\n".join(lines) + "\n"
    if hasattr(path_or_file, "write"):
        path_or_file.write(text)
    else:
        Path(path_or_file).write_text(text)


def read_array(path) -> np.ndarray:
    """Parse a CSV written by ``write_array`` (or any finite numeric CSV)."""
    try:
        rows = [r for r in csv.reader(Path(path).read_text().splitlines()) if r]
        data = [[float(v) for v in r] for r in rows]
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    if not data:
        raise UsageError(f"{path} is empty")
    width = {len(r) for r in data}
    if len(width) != 1:
        raise UsageError(f"{path}: ragged rows")
    arr = np.array(data)
    if not np.all(np.isfinite(arr)):
        raise UsageError(f"{path}: non-finite entries")
    return arr[:, 0] if arr.shape[1] == 1 else arr


# ----------------------------------------------------------------- envelope

FIGURES = {"intro": (1.0, 1.0), "fig1": (0.5, 1.0), "fig2": (2.0, 2.0)}


def parse_range(spec: str) -> tuple[float, float, float]:
    try:
        a, b, step = (float(v) for v in spec.split(":"))
    except ValueError as exc:
        raise UsageError(f"range must be a:b:step, got {spec!r}") from exc
    if not all(math.isfinite(v) for v in (a, b, step)) or step <= 0 or b < a:
        raise UsageError(f"empty or invalid range {spec!r}")
    return a, b, step


def _axis(a, b, step, extra):
    # nodes are integer multiples of step, so 0 lands exactly
    x = step * np.arange(math.ceil(a / step - 1e-9), math.floor(b / step + 1e-9) + 1)
    x = np.union1d(x, [e for e in extra if a <= e <= b])
    if x.size == 0:
        raise UsageError(f"range {a}:{b}:{step} contains no grid point")
    return x[np.concatenate([[True], np.diff(x) > 1e-9 * step])]


def _scalar_penalty(kind: str, mu: float):
    if kind == "card":
        return ScaledCard(mu)
    if kind == "poscard":
        return PosCard(mu)
    raise UsageError(f"envelope supports --penalty card|poscard, got {kind!r}")


def cmd_envelope(args, out) -> int:
    if args.figure:
        default_gamma, default_d = FIGURES[args.figure]
        gamma = default_gamma if args.gamma is None else args.gamma
        d = default_d if args.d is None else args.d
        pen = ScaledCard(args.mu)
    else:
        gamma = 1.0 if args.gamma is None else args.gamma
        d = args.d
        pen = _scalar_penalty(args.penalty, args.mu)
    params = EnvelopeParams(gamma, pen)
    T = params.threshold
    default = f"{-3 * max(T, abs(d or 0)) - 1}:{3 * max(T, abs(d or 0)) + 1}:0.01"
    a, b, step = parse_range(args.range or default)
    extra = [0.0, T, -T] + ([d] if d is not None else [])
    x = _axis(a, b, step, extra)
    f = scalar_value(pen, x)
    s2 = s2_scalar(params, x)
    w = csv.writer(out, lineterminator="\n")
    if d is None:
        w.writerow(["x", "f", "s1", "s2"])
        for row in zip(x, f, s1_scalar(params, x), s2):
            w.writerow([fmt(v) for v in row])
        return EXIT_OK
    quad = 0.5 * (x - d) ** 2
    J, Jg = f + quad, s2 + quad
    if args.figure == "intro":
        # |x|_0 + (x-d)^2/2, its convex envelope and the envelope of the penalty
        w.writerow(["x", "J", "convex_envelope", "s2"])
        for row in zip(x, J, Jg, s2):
            w.writerow([fmt(v) for v in row])
        return EXIT_OK
    w.writerow(["x", "J", "J_gamma", "argmin_J", "argmin_J_gamma"])
    amin = np.isclose(J, J.min(), rtol=0, atol=1e-12)
    amin_g = np.isclose(Jg, Jg.min(), rtol=0, atol=1e-12)
    for row in zip(x, J, Jg, amin, amin_g):
        w.writerow([fmt(row[0]), fmt(row[1]), fmt(row[2]), int(row[3]), int(row[4])])
    return EXIT_OK


# -------------------------------------------------------------------- solve

_PENALTIES = {
    "card": lambda p: ScaledCard(p["mu"]),
    "poscard": lambda p: PosCard(p["mu"]),
    "l0": lambda p: lifting.L0(p["mu"]),
    "cardcap": lambda p: lifting.CardCap(p["M"]),
    "poscardcap": lambda p: lifting.PosCardCap(p["M"]),
    "rank": lambda p: lifting.ScaledRank(p["mu"]),
    "rankcap": lambda p: lifting.RankCap(p["M"]),
    "posrank": lambda p: lifting.PosRank(p["mu"]),
}


def load_problem(path: Path):
    """Parse a problem file into ``(problem, method, config)``."""
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot parse {path}: {exc}") from exc
    base = path.parent
    try:
        pen_doc = doc["penalty"]
        penalty = _PENALTIES[pen_doc["kind"]](pen_doc)
        gamma = doc.get("gamma")
        gamma = None if gamma in (None, "auto") else float(gamma)
        op = doc.get("operator", {"type": "identity"})
        d = read_array(base / doc["data"])
        A = None
        prior = doc.get("prior")
        if op["type"] == "dense":
            A = read_array(base / op["path"])
            A = A.reshape(-1, 1) if A.ndim == 1 else A
        elif op["type"] == "hankel":
            prior = "hankel"
        elif op["type"] != "identity":
            raise UsageError(f"unknown operator type {op['type']!r}")
        weight = doc.get("weight")
        weight = DirectTensorWeight(weight["u"], weight["v"]) if weight else None
        sol = doc.get("solver", {})
        method = sol.get("method", "fbs")
        if method not in ("fbs", "admm", "cadzow"):
            raise UsageError(f"unknown method {method!r}")
        cfg = SolverConfig(
            max_iters=sol.get("max_iters", 100_000),
            tol=sol.get("tol", 1e-9),
            admm_tol=sol.get("admm_tol", 1e-8),
            rho=sol.get("rho"),
            regime=sol.get("regime", "auto"),
            seed=sol.get("seed", 0),
            x0=sol.get("x0"),
        )
        prob = LeastSquaresProblem(penalty, d, A=A, gamma=gamma, prior=prior, weight=weight)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, RegimeError):
            raise
        raise UsageError(f"invalid problem file {path}: {exc!r}") from exc
    return prob, method, cfg


def cmd_solve(args, out) -> int:
    path = Path(args.problem)
    prob, method, cfg = load_problem(path)
    solver = {"fbs": solve_fbs, "admm": solve_admm, "cadzow": solve_cadzow}[method]
    try:
        rep = solver(prob, cfg)
    except RegimeError as exc:
        print(f"regime violation: {exc}", file=sys.stderr)
        return EXIT_REGIME
    out_dir = Path(args.out_dir) if args.out_dir else path.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = path.stem
    x_path = out_dir / f"{stem}.x.csv"
    log_path = out_dir / f"{stem}.iterates.csv"
    write_array(rep.x, x_path)
    with open(log_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "objective_gamma", "step"])
        for it, obj, step in rep.log:
            w.writerow([it, fmt(obj), fmt(step)])
    report = {"schema": SCHEMA, **rep.to_dict()}
    report.pop("x")
    report["x_path"] = x_path.name
    report["iterates_path"] = log_path.name
    report["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    (out_dir / f"{stem}.report.json").write_text(text)
    out.write(text)
    return EXIT_OK if rep.converged else EXIT_NONCONVERGED


# ------------------------------------------------------------------- oracle

def cmd_oracle(args, out) -> int:
    checks = run_suite(args.suite, args.trials, args.seed)
    passed = all(c.passed for c in checks.values())
    doc = {"suite": args.suite, "seed": args.seed, "passed": passed,
           "checks": {k: c.as_dict() for k, c in checks.items()}}
    out.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return EXIT_OK if passed else EXIT_NONCONVERGED


# --------------------------------------------------------------------- main

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="quadenv", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    e = sub.add_parser("envelope", help="tabulate scalar envelopes as CSV")
    e.add_argument("--penalty", default="card", choices=["card", "poscard"])
    e.add_argument("--mu", type=float, default=1.0)
    e.add_argument("--gamma", type=float)
    e.add_argument("--range", help="a:b:step (thresholds and 0 are always added)")
    e.add_argument("--figure", choices=sorted(FIGURES))
    e.add_argument("--d", type=float, help="data point of the quadratic (x - d)^2 / 2")
    e.set_defaults(func=cmd_envelope)

    s = sub.add_parser("solve", help="solve a problem file")
    s.add_argument("problem")
    s.add_argument("--out-dir", help="defaults to the problem file's directory")
    s.set_defaults(func=cmd_solve)

    o = sub.add_parser("oracle", help="run an oracle battery")
    o.add_argument("suite", choices=sorted(SUITES))
    o.add_argument("--trials", type=int)
    o.add_argument("--seed", type=int, default=0)
    o.set_defaults(func=cmd_oracle)
    return p


def _glue_ranges(argv):
    # let ``--range -3:3:0.01`` through; argparse would read it as a flag
    argv = list(sys.argv[1:] if argv is None else argv)
    out = []
    i = 0
    while i < len(argv):
        if argv[i] == "--range" and i + 1 < len(argv):
            out.append(f"--range={argv[i + 1]}")
            i += 2
        else:
            out.append(argv[i])
            i += 1
    return out


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    args = build_parser().parse_args(_glue_ranges(argv))
    try:
        return args.func(args, out)
    except (UsageError, DomainError) as exc:
        print(f"quadenv: error: {exc}".splitlines()[0], file=sys.stderr)
        return EXIT_USAGE


def run(argv) -> tuple[int, str]:
    """Run the CLI in-process, returning ``(exit code, stdout)``."""
    buf = io.StringIO()
    try:
        code = main(argv, buf)
    except SystemExit as exc:
        code = int(exc.code or 0)
    return code, buf.getvalue()


if __name__ == "__main__":
    sys.exit(main())
